#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "dnsp/channel.hpp"
#include "dnsp/common.hpp"
#include "dnsp/ofdm.hpp"

namespace dnsp {

struct LsEstimate {
  cvec pilot_estimates;  // H_hat at pilot bins, length P
  cvec time_taps;        // length P
  cvec padded_taps;      // length N, zero beyond P
  cvec full_response;    // length N
};

// Pilot division, P-point inverse transform, zero padding to N, N-point
// forward transform. The scale conventions make noiseless recovery exact
// when P | N and L <= P.
inline LsEstimate ls_estimate(const cvec& y, const PilotSequence& c,
                              const PilotPattern& pattern, const OfdmConfig& cfg) {
  const std::size_t n = cfg.n_subcarriers;
  const std::size_t p = cfg.n_pilots;
  require(y.size() == n, "ls_estimate: received vector has wrong length");

  LsEstimate est;
  est.pilot_estimates.resize(p);
  const double pilot_amp = std::sqrt(cfg.pilot_power);
  for (std::size_t i = 0; i < p; ++i) {
    const std::size_t idx = pattern.indices[i];
    const cdouble pilot = pilot_amp * c.values[idx];
    if (std::abs(pilot) == 0.0) throw input_error("ls_estimate: zero pilot value");
    est.pilot_estimates[i] = y[idx] / pilot;
  }

  // h[l] = (1/P) sum_p Hp[p] exp(+j 2 pi p l / P)
  est.time_taps.resize(p);
  for (std::size_t l = 0; l < p; ++l) {
    cdouble acc{0.0, 0.0};
    for (std::size_t q = 0; q < p; ++q) {
      const double ang = 2.0 * kPi * static_cast<double>(q * l % p) / static_cast<double>(p);
      acc += est.pilot_estimates[q] * cdouble{std::cos(ang), std::sin(ang)};
    }
    est.time_taps[l] = acc / static_cast<double>(p);
  }

  est.padded_taps.assign(n, cdouble{0.0, 0.0});
  std::copy(est.time_taps.begin(), est.time_taps.end(), est.padded_taps.begin());
  est.full_response = dft_forward(est.padded_taps);
  return est;
}

// Wiener smoother on the pilot-bin LS values using the analytic channel
// frequency correlation R[k,k'] = sum_l w_l exp(-j 2 pi (k-k') l / N).
// Works from the raw pilot estimates so it can also run over stored maps.
inline cvec lmmse_from_pilots(const cvec& pilot_estimates, const std::vector<double>& pdp,
                              double sigma2, const OfdmConfig& cfg) {
  require(sigma2 >= 0.0, "lmmse_estimate: sigma2 must be nonnegative");
  const std::size_t n = cfg.n_subcarriers;
  const std::size_t p = cfg.n_pilots;
  require(pilot_estimates.size() == p, "lmmse_estimate: wrong pilot count");
  const PilotPattern pattern = nulling_pattern(cfg);

  auto corr = [&](std::size_t k1, std::size_t k2) {
    cdouble acc{0.0, 0.0};
    for (std::size_t l = 0; l < pdp.size(); ++l) {
      const double ang = -2.0 * kPi *
                         (static_cast<double>(k1) - static_cast<double>(k2)) *
                         static_cast<double>(l) / static_cast<double>(n);
      acc += pdp[l] * cdouble{std::cos(ang), std::sin(ang)};
    }
    return acc;
  };

  Eigen::MatrixXcd rpp(p, p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j)
      rpp(i, j) = corr(pattern.indices[i], pattern.indices[j]);
  // Pilot-bin LS noise variance is sigma^2 / E_c.
  const double reg = sigma2 / cfg.pilot_power;
  for (std::size_t i = 0; i < p; ++i) rpp(i, i) += reg;

  Eigen::VectorXcd hp(p);
  for (std::size_t i = 0; i < p; ++i) hp(i) = pilot_estimates[i];
  const Eigen::VectorXcd weights = rpp.ldlt().solve(hp);

  cvec out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cdouble acc{0.0, 0.0};
    for (std::size_t j = 0; j < p; ++j) acc += corr(k, pattern.indices[j]) * weights(j);
    out[k] = acc;
  }
  return out;
}

inline cvec lmmse_estimate(const cvec& y, const PilotSequence& c, const PilotPattern& pattern,
                           const std::vector<double>& pdp, double sigma2,
                           const OfdmConfig& cfg) {
  const LsEstimate ls = ls_estimate(y, c, pattern, cfg);
  return lmmse_from_pilots(ls.pilot_estimates, pdp, sigma2, cfg);
}

// ||H_hat - H||^2 / ||H||^2 over all entries.
inline double nmse(const cvec& h_hat, const cvec& h) {
  require(h_hat.size() == h.size(), "nmse: shape mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    num += std::norm(h_hat[i] - h[i]);
    den += std::norm(h[i]);
  }
  if (den == 0.0) throw numeric_error("nmse: zero reference");
  return num / den;
}

inline double nmse(const std::vector<cvec>& h_hat, const std::vector<cvec>& h) {
  require(h_hat.size() == h.size(), "nmse: shape mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t m = 0; m < h.size(); ++m) {
    require(h_hat[m].size() == h[m].size(), "nmse: shape mismatch");
    for (std::size_t k = 0; k < h[m].size(); ++k) {
      num += std::norm(h_hat[m][k] - h[m][k]);
      den += std::norm(h[m][k]);
    }
  }
  if (den == 0.0) throw numeric_error("nmse: zero reference");
  return num / den;
}

}  // namespace dnsp
