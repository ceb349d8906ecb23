#include <catch2/catch_amalgamated.hpp>

#include "dnsp/detection.hpp"
#include "dnsp/estimators.hpp"

using namespace dnsp;

namespace {

struct Setup {
  OfdmConfig cfg;
  PilotPattern pattern;
  PrecodingMatrix w;
  PilotSequence c;
};

Setup make_setup(std::size_t n, std::size_t p, std::size_t l, double rho = 0.2) {
  Setup s{make_ofdm_config(n, p, 1, l, rho, 1.0), {}, {}, {}};
  s.pattern = nulling_pattern(s.cfg);
  s.w = walsh_hadamard(n);
  s.c = make_pilot_sequence(s.cfg, s.pattern);
  return s;
}

FrameSignal random_frame(const Setup& s, Rng& rng) {
  std::vector<std::uint8_t> bits(2 * s.cfg.n_subcarriers);
  for (auto& b : bits) b = rng.uniform() < 0.5;
  return build_transmit(qpsk_modulate(bits), s.c, s.pattern, s.cfg, s.w);
}

}  // namespace

TEST_CASE("ls_estimate recovers noiseless channels exactly") {
  SECTION("flat channel") {
    const Setup s = make_setup(64, 8, 4);
    Rng rng(1);
    const FrameSignal f = random_frame(s, rng);
    const cvec h = freq_response(cvec{cdouble{1.0, 0.0}}, 64);
    Rng noise(2);
    const FrameSignal y = apply_channel(f, h, 0.0, noise);
    const LsEstimate est = ls_estimate(y.received, s.c, s.pattern, s.cfg);
    for (std::size_t k = 0; k < 64; ++k)
      CHECK(std::abs(est.full_response[k] - cdouble{1.0, 0.0}) < 1e-10);
  }

  SECTION("random L=4 taps, P=8, N=64") {
    const Setup s = make_setup(64, 8, 4);
    Rng rng(3);
    cvec taps(4);
    for (auto& t : taps) t = rng.cgaussian();
    const cvec h = freq_response(taps, 64);
    const FrameSignal f = random_frame(s, rng);
    Rng noise(4);
    const FrameSignal y = apply_channel(f, h, 0.0, noise);
    const LsEstimate est = ls_estimate(y.received, s.c, s.pattern, s.cfg);
    for (std::size_t k = 0; k < 64; ++k) CHECK(std::abs(est.full_response[k] - h[k]) < 1e-10);
    // Recovered taps match and padding is exactly zero.
    for (std::size_t l = 0; l < 4; ++l) CHECK(std::abs(est.time_taps[l] - taps[l]) < 1e-10);
    for (std::size_t k = 8; k < 64; ++k) CHECK(est.padded_taps[k] == cdouble{0.0, 0.0});
  }

  SECTION("exact recovery property over random (N, P, L)") {
    Rng rng(5);
    const std::size_t ns[] = {16, 32, 64, 128, 256};
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = ns[rng.index(5)];
      std::size_t p = std::size_t{2} << rng.index(4);  // 2..16, divides n
      p = std::min(p, n);
      const std::size_t l = 1 + rng.index(p);
      const Setup s = make_setup(n, p, l);
      cvec taps(l);
      for (auto& t : taps) t = rng.cgaussian();
      const cvec h = freq_response(taps, n);
      const FrameSignal f = random_frame(s, rng);
      Rng noise(6);
      const FrameSignal y = apply_channel(f, h, 0.0, noise);
      const LsEstimate est = ls_estimate(y.received, s.c, s.pattern, s.cfg);
      CHECK(nmse(est.full_response, h) < 1e-10);
    }
  }

  SECTION("aliasing when L exceeds P") {
    const Setup s = make_setup(64, 8, 10);
    Rng rng(7);
    cvec taps(10);
    for (auto& t : taps) t = rng.cgaussian();
    const cvec h = freq_response(taps, 64);
    const FrameSignal f = random_frame(s, rng);
    Rng noise(8);
    const FrameSignal y = apply_channel(f, h, 0.0, noise);
    const LsEstimate est = ls_estimate(y.received, s.c, s.pattern, s.cfg);
    CHECK(nmse(est.full_response, h) > 1e-6);
  }
}

TEST_CASE("lmmse_estimate") {
  const Setup s = make_setup(64, 8, 4);
  const DomainScenario sc{"t", 3.0, 4, 0.9, 0};
  const std::vector<double> pdp = pdp_weights(sc);

  SECTION("noiseless limit equals LS") {
    Rng rng(1);
    cvec taps(4);
    for (auto& t : taps) t = rng.cgaussian();
    const cvec h = freq_response(taps, 64);
    const FrameSignal f = random_frame(s, rng);
    Rng noise(2);
    const FrameSignal y = apply_channel(f, h, 0.0, noise);
    const LsEstimate ls = ls_estimate(y.received, s.c, s.pattern, s.cfg);
    const cvec mm = lmmse_estimate(y.received, s.c, s.pattern, pdp, 1e-14, s.cfg);
    for (std::size_t k = 0; k < 64; ++k) CHECK(std::abs(mm[k] - ls.full_response[k]) < 1e-8);
  }

  SECTION("infinite noise shrinks to zero") {
    Rng rng(3);
    cvec taps(4);
    for (auto& t : taps) t = rng.cgaussian();
    const cvec h = freq_response(taps, 64);
    const FrameSignal f = random_frame(s, rng);
    Rng noise(4);
    const FrameSignal y = apply_channel(f, h, 0.0, noise);
    const LsEstimate ls = ls_estimate(y.received, s.c, s.pattern, s.cfg);
    const cvec mm = lmmse_estimate(y.received, s.c, s.pattern, pdp, 1e12, s.cfg);
    double norm_mm = 0.0, norm_ls = 0.0;
    for (std::size_t k = 0; k < 64; ++k) {
      norm_mm += std::norm(mm[k]);
      norm_ls += std::norm(ls.full_response[k]);
    }
    CHECK(std::sqrt(norm_mm) < 1e-6 * std::sqrt(norm_ls));
  }

  SECTION("negative noise variance rejected") {
    CHECK_THROWS_AS(lmmse_estimate(cvec(64, {1.0, 0.0}), s.c, s.pattern, pdp, -1.0, s.cfg),
                    input_error);
  }

  SECTION("LMMSE beats LS at 10 dB over 500 frames") {
    Rng rng(9);
    double acc_ls = 0.0, acc_mm = 0.0;
    const double sigma2 = snr_to_noise_var(10.0, 1.0);
    for (int t = 0; t < 500; ++t) {
      cvec taps(4);
      const std::vector<double> w = pdp;
      for (std::size_t l = 0; l < 4; ++l) taps[l] = rng.cgaussian(w[l]);
      const cvec h = freq_response(taps, 64);
      const FrameSignal f = random_frame(s, rng);
      const FrameSignal y = apply_channel(f, h, sigma2, rng);
      acc_ls += nmse(ls_estimate(y.received, s.c, s.pattern, s.cfg).full_response, h);
      acc_mm += nmse(lmmse_estimate(y.received, s.c, s.pattern, pdp, sigma2, s.cfg), h);
    }
    CHECK(acc_mm < acc_ls);
  }
}

TEST_CASE("nmse metric") {
  const cvec h{cdouble{1.0, 0.0}, cdouble{0.0, 2.0}};
  CHECK(nmse(h, h) == 0.0);
  CHECK(nmse(cvec(2, {0.0, 0.0}), h) == Catch::Approx(1.0));
  cvec twice = h;
  for (auto& v : twice) v *= 2.0;
  CHECK(nmse(twice, h) == Catch::Approx(1.0));
  CHECK_THROWS_AS(nmse(h, cvec(2, {0.0, 0.0})), numeric_error);
  CHECK_THROWS_AS(nmse(h, cvec(3, {1.0, 0.0})), input_error);
}

TEST_CASE("LS noise scaling and SNR monotonicity") {
  const Setup s = make_setup(64, 8, 1);

  SECTION("NMSE linear in sigma2 for a flat unit channel") {
    Rng rng(11);
    const cvec h(64, {1.0, 0.0});
    auto mean_nmse = [&](double sigma2) {
      double acc = 0.0;
      const int frames = 10000;
      for (int t = 0; t < frames; ++t) {
        const FrameSignal f = random_frame(s, rng);
        const FrameSignal y = apply_channel(f, h, sigma2, rng);
        acc += nmse(ls_estimate(y.received, s.c, s.pattern, s.cfg).full_response, h);
      }
      return acc / frames;
    };
    const double low = mean_nmse(0.05);
    const double high = mean_nmse(0.1);
    CHECK(high / low == Catch::Approx(2.0).epsilon(0.1));
  }

  SECTION("NMSE strictly decreasing over the SNR grid") {
    Rng rng(13);
    const DomainScenario sc{"m", 3.0, 1, 0.9, 0};
    double prev = 1e9;
    for (double snr = 0.0; snr <= 35.0; snr += 5.0) {
      const double sigma2 = snr_to_noise_var(snr, 1.0);
      double acc = 0.0;
      for (int t = 0; t < 500; ++t) {
        cvec taps{rng.cgaussian()};
        const cvec h = freq_response(taps, 64);
        const FrameSignal f = random_frame(s, rng);
        const FrameSignal y = apply_channel(f, h, sigma2, rng);
        acc += nmse(ls_estimate(y.received, s.c, s.pattern, s.cfg).full_response, h);
      }
      CHECK(acc / 500.0 < prev);
      prev = acc / 500.0;
    }
  }
}
