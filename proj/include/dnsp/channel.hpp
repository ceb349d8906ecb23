#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dnsp/common.hpp"
#include "dnsp/ofdm.hpp"
#include "dnsp/rng.hpp"

namespace dnsp {

// One propagation "region": exponential power-delay profile plus AR(1)
// slot-to-slot evolution. Distinct (pdp_decay, slot_correlation) pairs act
// as distinct source/target domains.
struct DomainScenario {
  std::string scenario_id;
  double pdp_decay = 4.0;        // per-tap exponential decay constant
  std::size_t n_taps = 8;        // L
  double slot_correlation = 0.99;  // AR(1) alpha across slots
  std::uint64_t seed_space = 0;
};

// Normalized per-tap variances w_l ~ exp(-l / decay), sum = 1.
inline std::vector<double> pdp_weights(const DomainScenario& sc) {
  std::vector<double> w(sc.n_taps);
  double sum = 0.0;
  for (std::size_t l = 0; l < sc.n_taps; ++l) {
    w[l] = std::exp(-static_cast<double>(l) / sc.pdp_decay);
    sum += w[l];
  }
  for (double& v : w) v /= sum;
  return w;
}

// H[k] = sum_l taps[l] exp(-j 2 pi k l / N).
inline cvec freq_response(const cvec& taps_column, std::size_t n) {
  if (taps_column.size() > n) throw input_error("freq_response: more taps than subcarriers");
  cvec h(n, cdouble{0.0, 0.0});
  for (std::size_t k = 0; k < n; ++k) {
    cdouble acc{0.0, 0.0};
    for (std::size_t l = 0; l < taps_column.size(); ++l) {
      const double ang = -2.0 * kPi * static_cast<double>(k * l % n) / static_cast<double>(n);
      acc += taps_column[l] * cdouble{std::cos(ang), std::sin(ang)};
    }
    h[k] = acc;
  }
  return h;
}

// Time-domain taps and frequency response for M slots of one frame group.
struct ChannelRealization {
  std::vector<cvec> taps;           // M columns, each length L
  std::vector<cvec> freq;           // M columns, each length N
  double noise_var = 0.0;           // sigma^2
};

// Quasi-static Rayleigh taps; slot 0 drawn from the PDP, later slots evolve
// as h[l,m] = alpha h[l,m-1] + sqrt(1-alpha^2) innovation.
inline ChannelRealization draw_channel(const DomainScenario& sc, const OfdmConfig& cfg,
                                       Rng& rng) {
  require(sc.n_taps == cfg.n_taps, "draw_channel: scenario/config tap count mismatch");
  const std::vector<double> w = pdp_weights(sc);
  const double alpha = sc.slot_correlation;
  const double innov = std::sqrt(std::max(0.0, 1.0 - alpha * alpha));

  ChannelRealization re;
  re.taps.resize(cfg.n_slots);
  re.freq.resize(cfg.n_slots);
  for (std::size_t m = 0; m < cfg.n_slots; ++m) {
    re.taps[m].resize(sc.n_taps);
    for (std::size_t l = 0; l < sc.n_taps; ++l) {
      if (m == 0)
        re.taps[m][l] = rng.cgaussian(w[l]);
      else
        re.taps[m][l] = alpha * re.taps[m - 1][l] + innov * rng.cgaussian(w[l]);
    }
    re.freq[m] = freq_response(re.taps[m], cfg.n_subcarriers);
  }
  return re;
}

// sigma^2 = E / 10^(snr_db / 10).
inline double snr_to_noise_var(double snr_db, double total_power) {
  require(total_power > 0.0, "snr_to_noise_var: E must be positive");
  return total_power / std::pow(10.0, snr_db / 10.0);
}

}  // namespace dnsp
