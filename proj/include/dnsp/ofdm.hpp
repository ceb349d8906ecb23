#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "dnsp/common.hpp"
#include "dnsp/rng.hpp"

namespace dnsp {

// Static frame parameters. Power split is E_s = (1-rho)E on data bins and
// E_c = rho*E on pilot bins.
struct OfdmConfig {
  std::size_t n_subcarriers = 256;  // N
  std::size_t n_pilots = 8;         // P
  std::size_t pilot_spacing = 32;   // Q = floor(N/P)
  std::size_t n_slots = 16;         // M
  std::size_t n_taps = 8;           // L
  double power_fraction = 0.2;      // rho
  double total_power = 1.0;         // E
  double data_power = 0.8;          // E_s
  double pilot_power = 0.2;         // E_c

  // Pilot bins sample the channel uniformly only when P divides N; LS tap
  // recovery is exact only if additionally L <= P.
  bool uniform_pilot_grid() const { return n_pilots > 0 && n_subcarriers % n_pilots == 0; }
  bool ls_exact() const { return uniform_pilot_grid() && n_taps <= n_pilots; }
};

inline OfdmConfig make_ofdm_config(std::size_t n, std::size_t p, std::size_t m,
                                   std::size_t l, double rho, double total_power) {
  if (n == 0 || p == 0 || m == 0 || l == 0)
    throw config_error("ofdm config: N, P, M, L must be positive");
  if (p > n) throw config_error("ofdm config: P must not exceed N");
  if (rho < 0.0 || rho > 1.0) throw config_error("ofdm config: rho must lie in [0,1]");
  if (total_power <= 0.0) throw config_error("ofdm config: E must be positive");
  OfdmConfig cfg;
  cfg.n_subcarriers = n;
  cfg.n_pilots = p;
  cfg.pilot_spacing = n / p;
  cfg.n_slots = m;
  cfg.n_taps = l;
  cfg.power_fraction = rho;
  cfg.total_power = total_power;
  cfg.data_power = (1.0 - rho) * total_power;
  cfg.pilot_power = rho * total_power;
  return cfg;
}

// The diagonal of the nulling matrix J plus the pilot index list.
struct PilotPattern {
  std::vector<std::size_t> indices;  // {pQ}, strictly increasing
  std::vector<bool> mask;            // length N, true at pilot bins
};

inline PilotPattern nulling_pattern(const OfdmConfig& cfg) {
  PilotPattern pat;
  pat.mask.assign(cfg.n_subcarriers, false);
  pat.indices.reserve(cfg.n_pilots);
  for (std::size_t p = 0; p < cfg.n_pilots; ++p) {
    const std::size_t idx = p * cfg.pilot_spacing;
    pat.indices.push_back(idx);
    pat.mask[idx] = true;
  }
  return pat;
}

// Real orthonormal precoder W; entries are +-1/sqrt(order).
struct PrecodingMatrix {
  std::size_t order = 0;
  std::vector<double> entries;  // row-major order x order

  double operator()(std::size_t r, std::size_t c) const { return entries[r * order + c]; }
};

// Sylvester-construction Walsh-Hadamard matrix scaled to orthonormal.
inline PrecodingMatrix walsh_hadamard(std::size_t order) {
  if (!is_power_of_two(order))
    throw config_error("walsh_hadamard: order must be a power of two");
  PrecodingMatrix w;
  w.order = order;
  w.entries.assign(order * order, 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(order));
  for (std::size_t r = 0; r < order; ++r)
    for (std::size_t c = 0; c < order; ++c) {
      // Sylvester sign is parity of popcount(r & c).
      const int bits = __builtin_popcountll(r & c);
      w.entries[r * order + c] = (bits & 1) ? -scale : scale;
    }
  return w;
}

// y = W * x and y = W^T * x (W symmetric for Sylvester order, but keep both
// spellings at call sites honest).
inline cvec precode(const PrecodingMatrix& w, const cvec& x) {
  require(x.size() == w.order, "precode: dimension mismatch");
  cvec y(w.order, cdouble{0.0, 0.0});
  for (std::size_t r = 0; r < w.order; ++r) {
    cdouble acc{0.0, 0.0};
    const double* row = &w.entries[r * w.order];
    for (std::size_t c = 0; c < w.order; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

inline cvec precode_transpose(const PrecodingMatrix& w, const cvec& x) {
  require(x.size() == w.order, "precode_transpose: dimension mismatch");
  cvec y(w.order, cdouble{0.0, 0.0});
  for (std::size_t c = 0; c < w.order; ++c) {
    cdouble acc{0.0, 0.0};
    for (std::size_t r = 0; r < w.order; ++r) acc += w.entries[r * w.order + c] * x[r];
    y[c] = acc;
  }
  return y;
}

// Training sequence c; only pilot-bin entries are consumed.
struct PilotSequence {
  cvec values;
};

// Fixed-seed pseudo-random unit-modulus QPSK pilot values on pilot bins,
// zero elsewhere.
inline PilotSequence make_pilot_sequence(const OfdmConfig& cfg, const PilotPattern& pattern,
                                         std::uint64_t seed = 0x70696c6f74ull) {
  Rng rng(seed);
  PilotSequence c;
  c.values.assign(cfg.n_subcarriers, cdouble{0.0, 0.0});
  const double s = 1.0 / std::sqrt(2.0);
  for (std::size_t idx : pattern.indices) {
    const double re = rng.uniform() < 0.5 ? s : -s;
    const double im = rng.uniform() < 0.5 ? s : -s;
    c.values[idx] = {re, im};
  }
  return c;
}

// Gray map: 00 -> (1+j)/sqrt2, 01 -> (-1+j)/sqrt2, 11 -> (-1-j)/sqrt2,
// 10 -> (1-j)/sqrt2. First bit drives the real part, second the imaginary.
inline cvec qpsk_modulate(const std::vector<std::uint8_t>& bits) {
  if (bits.size() % 2 != 0) throw input_error("qpsk_modulate: odd bit count");
  const double s = 1.0 / std::sqrt(2.0);
  cvec symbols(bits.size() / 2);
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const double re = bits[2 * i] ? -s : s;
    const double im = bits[2 * i + 1] ? -s : s;
    symbols[i] = {re, im};
  }
  return symbols;
}

// Hard sign decision; exact zeros resolve to bit 0.
inline std::vector<std::uint8_t> qpsk_demodulate(const cvec& symbols) {
  std::vector<std::uint8_t> bits(symbols.size() * 2);
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    bits[2 * i] = symbols[i].real() < 0.0 ? 1 : 0;
    bits[2 * i + 1] = symbols[i].imag() < 0.0 ? 1 : 0;
  }
  return bits;
}

// One OFDM symbol in the frequency domain.
struct FrameSignal {
  cvec data_symbols;  // s
  cvec transmit;      // X
  cvec received;      // Y
};

// X = sqrt((1-rho)E) (I-J) W s + sqrt(rho E) J c.
inline FrameSignal build_transmit(const cvec& s, const PilotSequence& c,
                                  const PilotPattern& pattern, const OfdmConfig& cfg,
                                  const PrecodingMatrix& w) {
  const std::size_t n = cfg.n_subcarriers;
  require(s.size() == n && c.values.size() == n && pattern.mask.size() == n && w.order == n,
          "build_transmit: dimension mismatch");
  FrameSignal frame;
  frame.data_symbols = s;
  frame.transmit = precode(w, s);
  const double data_amp = std::sqrt(cfg.data_power);
  const double pilot_amp = std::sqrt(cfg.pilot_power);
  for (std::size_t k = 0; k < n; ++k) {
    if (pattern.mask[k])
      frame.transmit[k] = pilot_amp * c.values[k];
    else
      frame.transmit[k] *= data_amp;
  }
  return frame;
}

// Y[k] = H[k] X[k] + n[k] with CSCG noise of per-entry variance sigma2.
inline FrameSignal apply_channel(const FrameSignal& x, const cvec& freq_response,
                                 double sigma2, Rng& rng) {
  require(sigma2 >= 0.0, "apply_channel: sigma2 must be nonnegative");
  require(freq_response.size() == x.transmit.size(), "apply_channel: dimension mismatch");
  FrameSignal out = x;
  out.received.resize(x.transmit.size());
  for (std::size_t k = 0; k < x.transmit.size(); ++k) {
    cdouble noise = sigma2 > 0.0 ? rng.cgaussian(sigma2) : cdouble{0.0, 0.0};
    out.received[k] = freq_response[k] * x.transmit[k] + noise;
  }
  return out;
}

// Naive O(N^2) transforms, used by oracles and the LS path (N <= 256 here).
// Forward: X[k] = sum_n x[n] exp(-j 2 pi k n / N). Inverse carries the 1/N.
inline cvec dft_forward(const cvec& x) {
  const std::size_t n = x.size();
  cvec out(n, cdouble{0.0, 0.0});
  for (std::size_t k = 0; k < n; ++k) {
    cdouble acc{0.0, 0.0};
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * kPi * static_cast<double>(k * t % n) / static_cast<double>(n);
      acc += x[t] * cdouble{std::cos(ang), std::sin(ang)};
    }
    out[k] = acc;
  }
  return out;
}

inline cvec dft_inverse(const cvec& x) {
  const std::size_t n = x.size();
  cvec out(n, cdouble{0.0, 0.0});
  for (std::size_t t = 0; t < n; ++t) {
    cdouble acc{0.0, 0.0};
    for (std::size_t k = 0; k < n; ++k) {
      const double ang = 2.0 * kPi * static_cast<double>(k * t % n) / static_cast<double>(n);
      acc += x[k] * cdouble{std::cos(ang), std::sin(ang)};
    }
    out[t] = acc / static_cast<double>(n);
  }
  return out;
}

// Validation oracle for the frequency-domain shortcut: IDFT -> CP -> linear
// tap convolution -> CP removal -> DFT must equal diag(DFT(taps)) * X.
inline bool time_domain_equivalence_check(const FrameSignal& x, const cvec& taps,
                                          std::size_t cp_len, double tol = 1e-9) {
  const std::size_t n = x.transmit.size();
  const std::size_t l = taps.size();
  if (cp_len + 1 < l) throw input_error("time_domain_equivalence_check: cp too short");

  const cvec td = dft_inverse(x.transmit);
  // CP-extended block.
  cvec ext(cp_len + n);
  for (std::size_t i = 0; i < cp_len; ++i) ext[i] = td[n - cp_len + i];
  for (std::size_t i = 0; i < n; ++i) ext[cp_len + i] = td[i];
  // Linear convolution, keep the N samples after the CP.
  cvec after(n, cdouble{0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) {
    cdouble acc{0.0, 0.0};
    for (std::size_t t = 0; t < l && t <= cp_len + i; ++t) acc += taps[t] * ext[cp_len + i - t];
    after[i] = acc;
  }
  const cvec fd = dft_forward(after);

  cvec taps_padded(n, cdouble{0.0, 0.0});
  std::copy(taps.begin(), taps.end(), taps_padded.begin());
  const cvec h = dft_forward(taps_padded);
  for (std::size_t k = 0; k < n; ++k)
    if (std::abs(fd[k] - h[k] * x.transmit[k]) > tol) return false;
  return true;
}

}  // namespace dnsp
