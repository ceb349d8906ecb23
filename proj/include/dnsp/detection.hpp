#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dnsp/common.hpp"
#include "dnsp/ofdm.hpp"

namespace dnsp {

struct EqualizedFrame {
  cvec symbols;
  std::size_t degenerate_bins = 0;  // ZF bins with |H_hat| below threshold
};

// Per-bin division; bins with |H_hat| < eps are zeroed and counted.
inline EqualizedFrame zf_equalize(const cvec& y, const cvec& h_hat, double eps = 1e-12) {
  require(y.size() == h_hat.size(), "zf_equalize: shape mismatch");
  EqualizedFrame out;
  out.symbols.resize(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (std::abs(h_hat[k]) < eps) {
      out.symbols[k] = {0.0, 0.0};
      ++out.degenerate_bins;
    } else {
      out.symbols[k] = y[k] / h_hat[k];
    }
  }
  return out;
}

// out[k] = conj(H)[k] Y[k] / (|H[k]|^2 + sigma2 / Es_bin).
inline EqualizedFrame mmse_equalize(const cvec& y, const cvec& h_hat, double sigma2,
                                    double es_bin) {
  require(y.size() == h_hat.size(), "mmse_equalize: shape mismatch");
  require(sigma2 >= 0.0 && es_bin > 0.0, "mmse_equalize: bad noise/power");
  EqualizedFrame out;
  out.symbols.resize(y.size());
  const double reg = sigma2 / es_bin;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double denom = std::norm(h_hat[k]) + reg;
    out.symbols[k] = denom > 0.0 ? std::conj(h_hat[k]) * y[k] / denom : cdouble{0.0, 0.0};
  }
  return out;
}

// Zero the pilot bins, invert the precoder, rescale, and hard-decide. The
// nulled bins are simply lost, which is the source of DNSP symbol
// misidentification.
inline std::vector<std::uint8_t> detect_bits(const cvec& equalized, const PilotPattern& pattern,
                                             const PrecodingMatrix& w, const OfdmConfig& cfg) {
  require(equalized.size() == cfg.n_subcarriers, "detect_bits: shape mismatch");
  cvec data = equalized;
  for (std::size_t idx : pattern.indices) data[idx] = {0.0, 0.0};
  cvec s_hat = precode_transpose(w, data);
  const double amp = std::sqrt(cfg.data_power);
  if (amp > 0.0)
    for (cdouble& v : s_hat) v /= amp;
  return qpsk_demodulate(s_hat);
}

inline double ber(const std::vector<std::uint8_t>& bits_hat,
                  const std::vector<std::uint8_t>& bits_true) {
  require(bits_hat.size() == bits_true.size(), "ber: length mismatch");
  std::size_t errors = 0;
  for (std::size_t i = 0; i < bits_hat.size(); ++i)
    if ((bits_hat[i] != 0) != (bits_true[i] != 0)) ++errors;
  return static_cast<double>(errors) / static_cast<double>(bits_hat.size());
}

}  // namespace dnsp
