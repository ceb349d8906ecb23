#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dnsp/config.hpp"
#include "dnsp/detection.hpp"
#include "dnsp/report.hpp"
#include "dnsp/tl.hpp"

namespace dnsp {

// A stage was invoked before the stage that produces its inputs.
struct dependency_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace paths {

inline std::string source_data(const std::string& out) { return out + "/data/source.bin"; }
inline std::string target_data(const std::string& out) { return out + "/data/target.bin"; }
inline std::string pretrained(const std::string& out) { return out + "/models/pretrained.bin"; }
inline std::string finetuned(const std::string& out) { return out + "/models/finetuned.bin"; }

}  // namespace paths

namespace detail {

inline void ensure_layout(const std::string& out) {
  namespace fs = std::filesystem;
  for (const char* sub : {"", "/data", "/models", "/tables", "/series"})
    fs::create_directories(out + sub);
}

inline void require_artifact(const std::string& path, const std::string& producer) {
  if (!std::filesystem::exists(path))
    throw dependency_error("missing " + path + "; run the '" + producer + "' stage first");
}

inline void write_tables(const std::string& out, const std::string& name,
                         const std::vector<ResultRow>& rows, const ExperimentConfig& cfg) {
  write_text_file(out + "/tables/" + name + ".csv", to_csv(rows));
  write_text_file(out + "/tables/" + name + ".json", to_json(rows, cfg.snapshot()));
  for (const auto& [file, content] : to_series(rows))
    write_text_file(out + "/series/" + file, content);
}

}  // namespace detail

// Runs one N x M LS map through the network and reassembles the complex
// per-slot channel estimates.
template <typename T>
std::vector<cvec> network_channel_estimate(ReCnn<T>& model, const std::vector<float>& map_re,
                                           const std::vector<float>& map_im, std::size_t n,
                                           std::size_t m) {
  Tensor<T> in({2, n, m, 1});
  for (std::size_t i = 0; i < n * m; ++i) {
    in[i] = static_cast<T>(map_re[i]);
    in[n * m + i] = static_cast<T>(map_im[i]);
  }
  const Tensor<T> out = model.forward(in, NnMode::kInfer);
  std::vector<cvec> h(m, cvec(n));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t slot = 0; slot < m; ++slot)
      h[slot][k] = cdouble(out.data[k * m + slot], out.data[n * m + k * m + slot]);
  return h;
}

inline void run_gen_data(const ExperimentConfig& cfg, const std::string& out) {
  detail::ensure_layout(out);
  write_text_file(out + "/config.snapshot", cfg.snapshot());
  const Dataset source = generate_dataset(cfg.source_scenarios, cfg.source_samples, cfg.ofdm,
                                          cfg.train.snr_grid, cfg.seed);
  save_dataset(source, paths::source_data(out));
  const Dataset target =
      generate_dataset({cfg.target_scenario}, cfg.target_samples, cfg.ofdm,
                       cfg.train.snr_grid, cfg.seed ^ 0x746172676574ull);
  save_dataset(target, paths::target_data(out));
}

inline TrainReport run_pretrain(const ExperimentConfig& cfg, const std::string& out) {
  detail::ensure_layout(out);
  detail::require_artifact(paths::source_data(out), "gen-data");
  const Dataset source = load_dataset(paths::source_data(out));
  ReCnn<float> model(cfg.arch());
  Rng init(cfg.seed ^ 0x696e6974ull);
  model.init(init);
  const TrainReport report = pretrain(model, source, cfg.train);
  save_model(model, paths::pretrained(out));
  return report;
}

inline TrainReport run_finetune(const ExperimentConfig& cfg, const std::string& out) {
  detail::ensure_layout(out);
  detail::require_artifact(paths::pretrained(out), "pretrain");
  detail::require_artifact(paths::target_data(out), "gen-data");
  ReCnn<float> model = load_model<float>(paths::pretrained(out));
  const Dataset target = load_dataset(paths::target_data(out));
  if (cfg.target_train_samples > target.size())
    throw dependency_error("target dataset has fewer samples than target_train_samples");
  const Dataset train = target.slice(0, cfg.target_train_samples);
  const TrainReport report = finetune(model, train, cfg.train);
  save_model(model, paths::finetuned(out));
  return report;
}

// Classical LS and LMMSE NMSE recomputed from the stored LS maps. The LS
// estimate at pilot bins equals the raw pilot-division estimate when the
// pilot count divides N, so the smoother runs off the dataset alone.
inline void classical_nmse_from_dataset(const Dataset& ds, const DomainScenario& sc,
                                        const OfdmConfig& cfg, double& ls_out,
                                        double& lmmse_out) {
  const std::size_t n = ds.n_subcarriers, m = ds.n_slots;
  const std::size_t q = cfg.pilot_spacing;
  const std::vector<double> pdp = pdp_weights(sc);
  double ls_acc = 0.0, lm_acc = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double sigma2 = snr_to_noise_var(ds.meta[i].snr_db, cfg.total_power);
    double ls_num = 0.0, lm_num = 0.0, den = 0.0;
    for (std::size_t slot = 0; slot < m; ++slot) {
      cvec pilot_est(cfg.n_pilots), h_ls(n), h_true(n);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t idx = k * m + slot;
        h_ls[k] = cdouble(ds.input_re[i][idx], ds.input_im[i][idx]);
        h_true[k] = cdouble(ds.label_re[i][idx], ds.label_im[i][idx]);
      }
      for (std::size_t p = 0; p < cfg.n_pilots; ++p) pilot_est[p] = h_ls[p * q];
      const cvec h_lm = lmmse_from_pilots(pilot_est, pdp, sigma2, cfg);
      for (std::size_t k = 0; k < n; ++k) {
        ls_num += std::norm(h_ls[k] - h_true[k]);
        lm_num += std::norm(h_lm[k] - h_true[k]);
        den += std::norm(h_true[k]);
      }
    }
    ls_acc += ls_num / den;
    lm_acc += lm_num / den;
  }
  ls_out = ls_acc / static_cast<double>(ds.size());
  lmmse_out = lm_acc / static_cast<double>(ds.size());
}

// LS, LMMSE, pre-trained-only, and fine-tuned NMSE across the evaluation
// SNR grid on freshly drawn target-domain frames.
inline std::vector<ResultRow> run_eval(const ExperimentConfig& cfg, const std::string& out) {
  detail::ensure_layout(out);
  detail::require_artifact(paths::pretrained(out), "pretrain");
  detail::require_artifact(paths::finetuned(out), "finetune");
  ReCnn<float> pre = load_model<float>(paths::pretrained(out));
  ReCnn<float> fin = load_model<float>(paths::finetuned(out));

  std::vector<ResultRow> rows;
  for (std::size_t si = 0; si < cfg.eval_snr_grid.size(); ++si) {
    const double snr = cfg.eval_snr_grid[si];
    const Dataset ds = generate_dataset({cfg.target_scenario}, cfg.eval_frames, cfg.ofdm,
                                        {snr}, cfg.seed ^ (0x6576616cull + 7919 * si));
    double ls_nmse = 0.0, lmmse_nmse = 0.0;
    classical_nmse_from_dataset(ds, cfg.target_scenario, cfg.ofdm, ls_nmse, lmmse_nmse);
    rows.push_back({"ls", snr, ls_nmse, std::numeric_limits<double>::quiet_NaN(), ds.size(), cfg.seed});
    rows.push_back({"lmmse", snr, lmmse_nmse, std::numeric_limits<double>::quiet_NaN(), ds.size(), cfg.seed});
    rows.push_back({"no_transfer", snr, no_transfer_test(pre, ds), std::numeric_limits<double>::quiet_NaN(), ds.size(), cfg.seed});
    rows.push_back({"transfer", snr, transfer_test(fin, ds), std::numeric_limits<double>::quiet_NaN(), ds.size(), cfg.seed});
  }
  detail::write_tables(out, "nmse", rows, cfg);
  return rows;
}

// Classical-only curves plus pilot-count and pilot-power-fraction sweeps.
// Needs no trained model.
inline std::vector<ResultRow> run_baselines(const ExperimentConfig& cfg,
                                            const std::string& out) {
  detail::ensure_layout(out);
  std::vector<ResultRow> rows;
  for (std::size_t si = 0; si < cfg.eval_snr_grid.size(); ++si) {
    const double snr = cfg.eval_snr_grid[si];
    const Dataset ds = generate_dataset({cfg.target_scenario}, cfg.eval_frames, cfg.ofdm,
                                        {snr}, cfg.seed ^ (0x62617365ull + 104729 * si));
    double ls_nmse = 0.0, lmmse_nmse = 0.0;
    classical_nmse_from_dataset(ds, cfg.target_scenario, cfg.ofdm, ls_nmse, lmmse_nmse);
    rows.push_back({"ls", snr, ls_nmse, std::numeric_limits<double>::quiet_NaN(), ds.size(), cfg.seed});
    rows.push_back({"lmmse", snr, lmmse_nmse, std::numeric_limits<double>::quiet_NaN(), ds.size(), cfg.seed});
  }
  const double sweep_snr = 10.0;
  for (double rho : cfg.sweep_power_fractions) {
    OfdmConfig oc = make_ofdm_config(cfg.ofdm.n_subcarriers, cfg.ofdm.n_pilots,
                                     cfg.ofdm.n_slots, cfg.ofdm.n_taps, rho,
                                     cfg.ofdm.total_power);
    const Dataset ds = generate_dataset({cfg.target_scenario}, cfg.eval_frames, oc,
                                        {sweep_snr}, cfg.seed ^ 0x72686full);
    double ls_nmse = 0.0, lmmse_nmse = 0.0;
    classical_nmse_from_dataset(ds, cfg.target_scenario, oc, ls_nmse, lmmse_nmse);
    std::ostringstream name;
    name << "ls_rho" << rho;
    rows.push_back({name.str(), sweep_snr, ls_nmse, std::numeric_limits<double>::quiet_NaN(), ds.size(), cfg.seed});
  }
  for (double pilots : cfg.sweep_pilots) {
    const auto p = static_cast<std::size_t>(pilots);
    if (p < cfg.ofdm.n_taps || cfg.ofdm.n_subcarriers % p != 0) continue;
    OfdmConfig oc = make_ofdm_config(cfg.ofdm.n_subcarriers, p, cfg.ofdm.n_slots,
                                     cfg.ofdm.n_taps, cfg.ofdm.power_fraction,
                                     cfg.ofdm.total_power);
    const Dataset ds = generate_dataset({cfg.target_scenario}, cfg.eval_frames, oc,
                                        {sweep_snr}, cfg.seed ^ 0x70696c6full);
    double ls_nmse = 0.0, lmmse_nmse = 0.0;
    classical_nmse_from_dataset(ds, cfg.target_scenario, oc, ls_nmse, lmmse_nmse);
    std::ostringstream name;
    name << "ls_p" << p;
    rows.push_back({name.str(), sweep_snr, ls_nmse, std::numeric_limits<double>::quiet_NaN(), ds.size(), cfg.seed});
  }
  detail::write_tables(out, "baselines", rows, cfg);
  return rows;
}

// Uncoded BER with an MMSE equalizer under perfect, LS, LMMSE, and
// fine-tuned channel knowledge.
inline std::vector<ResultRow> run_ber(const ExperimentConfig& cfg, const std::string& out) {
  detail::ensure_layout(out);
  detail::require_artifact(paths::finetuned(out), "finetune");
  ReCnn<float> model = load_model<float>(paths::finetuned(out));

  const OfdmConfig& oc = cfg.ofdm;
  const PilotPattern pattern = nulling_pattern(oc);
  const PrecodingMatrix w = walsh_hadamard(oc.n_subcarriers);
  const PilotSequence c = make_pilot_sequence(oc, pattern);
  const std::size_t n = oc.n_subcarriers, m = oc.n_slots;
  const std::vector<double> pdp = pdp_weights(cfg.target_scenario);

  std::vector<ResultRow> rows;
  for (std::size_t si = 0; si < cfg.eval_snr_grid.size(); ++si) {
    const double snr = cfg.eval_snr_grid[si];
    const double sigma2 = snr_to_noise_var(snr, oc.total_power);
    Rng rng(cfg.seed ^ (0x626572ull + 15485863 * si));
    std::size_t errors_perfect = 0, errors_ls = 0, errors_lmmse = 0, errors_net = 0;
    std::size_t total_bits = 0;
    for (std::size_t frame = 0; frame < cfg.eval_frames; ++frame) {
      const ChannelRealization ch = draw_channel(cfg.target_scenario, oc, rng);
      std::vector<std::vector<std::uint8_t>> tx_bits(m);
      std::vector<cvec> rx(m), h_ls(m), h_lmmse(m);
      std::vector<float> map_re(n * m), map_im(n * m);
      for (std::size_t slot = 0; slot < m; ++slot) {
        tx_bits[slot].resize(2 * n);
        for (auto& b : tx_bits[slot]) b = rng.uniform() < 0.5;
        const FrameSignal f = build_transmit(qpsk_modulate(tx_bits[slot]), c, pattern, oc, w);
        const FrameSignal y = apply_channel(f, ch.freq[slot], sigma2, rng);
        rx[slot] = y.received;
        const LsEstimate est = ls_estimate(y.received, c, pattern, oc);
        h_ls[slot] = est.full_response;
        h_lmmse[slot] = lmmse_from_pilots(est.pilot_estimates, pdp, sigma2, oc);
        for (std::size_t k = 0; k < n; ++k) {
          map_re[k * m + slot] = static_cast<float>(est.full_response[k].real());
          map_im[k * m + slot] = static_cast<float>(est.full_response[k].imag());
        }
      }
      const std::vector<cvec> h_net = network_channel_estimate(model, map_re, map_im, n, m);
      for (std::size_t slot = 0; slot < m; ++slot) {
        auto count = [&](const cvec& h, std::size_t& errors) {
          const EqualizedFrame eq = mmse_equalize(rx[slot], h, sigma2, oc.data_power);
          const auto bits = detect_bits(eq.symbols, pattern, w, oc);
          for (std::size_t b = 0; b < bits.size(); ++b)
            errors += bits[b] != tx_bits[slot][b];
        };
        count(ch.freq[slot], errors_perfect);
        count(h_ls[slot], errors_ls);
        count(h_lmmse[slot], errors_lmmse);
        count(h_net[slot], errors_net);
        total_bits += 2 * n;
      }
    }
    const auto rate = [&](std::size_t e) {
      return static_cast<double>(e) / static_cast<double>(total_bits);
    };
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rows.push_back({"perfect_csi", snr, nan, rate(errors_perfect), cfg.eval_frames, cfg.seed});
    rows.push_back({"ls", snr, nan, rate(errors_ls), cfg.eval_frames, cfg.seed});
    rows.push_back({"lmmse", snr, nan, rate(errors_lmmse), cfg.eval_frames, cfg.seed});
    rows.push_back({"transfer", snr, nan, rate(errors_net), cfg.eval_frames, cfg.seed});
  }
  detail::write_tables(out, "ber", rows, cfg);
  return rows;
}

}  // namespace dnsp
