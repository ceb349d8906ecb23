#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "dnsp/channel.hpp"
#include "dnsp/common.hpp"
#include "dnsp/estimators.hpp"
#include "dnsp/ofdm.hpp"
#include "dnsp/recnn.hpp"
#include "dnsp/serialize.hpp"

namespace dnsp {

struct SampleMeta {
  std::string scenario_id;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

// Paired network inputs (LS estimates) and labels (true channels). Each
// complex sample is one M-slot frame group stored as separate real and
// imaginary N x M maps, subcarrier-major.
struct Dataset {
  std::size_t n_subcarriers = 0;
  std::size_t n_slots = 0;
  std::vector<std::vector<float>> input_re, input_im;
  std::vector<std::vector<float>> label_re, label_im;
  std::vector<SampleMeta> meta;

  std::size_t size() const { return input_re.size(); }
  std::size_t map_size() const { return n_subcarriers * n_slots; }

  Dataset slice(std::size_t begin, std::size_t end) const {
    Dataset out;
    out.n_subcarriers = n_subcarriers;
    out.n_slots = n_slots;
    for (std::size_t i = begin; i < end; ++i) {
      out.input_re.push_back(input_re[i]);
      out.input_im.push_back(input_im[i]);
      out.label_re.push_back(label_re[i]);
      out.label_im.push_back(label_im[i]);
      out.meta.push_back(meta[i]);
    }
    return out;
  }
};

struct TrainConfig {
  double lr_pretrain = 1e-4;   // gamma_1
  double lr_finetune = 1e-4;   // gamma_2
  std::size_t batch_size = 20; // V
  std::size_t gradsteps_pretrain = 40000;
  std::size_t gradsteps_finetune = 2000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double validation_fraction = 0.25;  // 6000/2000 split of the source set
  std::vector<double> snr_grid = {0, 5, 10, 15, 20, 25, 30, 35};
  std::uint64_t seed = 1;
};

// Per-sample generation: pick a scenario uniformly, draw an M-slot channel,
// pick an SNR from the grid, run one frame per slot through the DNSP chain
// and the LS estimator, and store the stacked LS maps plus the true channel.
inline Dataset generate_dataset(const std::vector<DomainScenario>& scenarios,
                                std::size_t count, const OfdmConfig& cfg,
                                const std::vector<double>& snr_grid, std::uint64_t seed) {
  require(count > 0, "generate_dataset: count must be positive");
  require(!scenarios.empty(), "generate_dataset: need at least one scenario");
  require(!snr_grid.empty(), "generate_dataset: empty SNR grid");

  const PilotPattern pattern = nulling_pattern(cfg);
  const PrecodingMatrix w = walsh_hadamard(cfg.n_subcarriers);
  const PilotSequence c = make_pilot_sequence(cfg, pattern);
  const std::size_t n = cfg.n_subcarriers, m = cfg.n_slots;

  Dataset ds;
  ds.n_subcarriers = n;
  ds.n_slots = m;
  Rng master(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t sample_seed = master.next_u64();
    Rng rng(sample_seed);
    const DomainScenario& sc = scenarios[scenarios.size() == 1 ? 0 : rng.index(scenarios.size())];
    const double snr_db = snr_grid[rng.index(snr_grid.size())];
    const double sigma2 = snr_to_noise_var(snr_db, cfg.total_power);
    const ChannelRealization ch = draw_channel(sc, cfg, rng);

    std::vector<float> in_re(n * m), in_im(n * m), lb_re(n * m), lb_im(n * m);
    for (std::size_t slot = 0; slot < m; ++slot) {
      std::vector<std::uint8_t> bits(2 * n);
      for (auto& b : bits) b = rng.uniform() < 0.5;
      const FrameSignal f = build_transmit(qpsk_modulate(bits), c, pattern, cfg, w);
      const FrameSignal y = apply_channel(f, ch.freq[slot], sigma2, rng);
      const LsEstimate est = ls_estimate(y.received, c, pattern, cfg);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t idx = k * m + slot;
        in_re[idx] = static_cast<float>(est.full_response[k].real());
        in_im[idx] = static_cast<float>(est.full_response[k].imag());
        lb_re[idx] = static_cast<float>(ch.freq[slot][k].real());
        lb_im[idx] = static_cast<float>(ch.freq[slot][k].imag());
      }
    }
    ds.input_re.push_back(std::move(in_re));
    ds.input_im.push_back(std::move(in_im));
    ds.label_re.push_back(std::move(lb_re));
    ds.label_im.push_back(std::move(lb_im));
    ds.meta.push_back({sc.scenario_id, snr_db, sample_seed});
  }
  return ds;
}

struct TrainReport {
  std::size_t steps = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double best_validation_nmse = 0.0;
  double seconds = 0.0;
};

namespace detail {

// Forward a batch of maps given as (pool index -> map pointer).
template <typename T>
Tensor<T> make_batch(const std::vector<const std::vector<float>*>& maps, std::size_t n,
                     std::size_t m) {
  Tensor<T> t({maps.size(), n, m, 1});
  for (std::size_t b = 0; b < maps.size(); ++b)
    for (std::size_t i = 0; i < n * m; ++i)
      t[b * n * m + i] = static_cast<T>((*maps[b])[i]);
  return t;
}

}  // namespace detail

// Mean per-sample NMSE of the model's channel estimate over a dataset,
// reassembling complex estimates from the real/imaginary passes. Inference
// mode; consumes no randomness.
template <typename T>
double evaluate_nmse(ReCnn<T>& model, const Dataset& ds) {
  require(ds.size() > 0, "evaluate_nmse: empty dataset");
  const std::size_t n = ds.n_subcarriers, m = ds.n_slots, mn = n * m;
  const std::size_t chunk = 32;
  double acc = 0.0;
  for (std::size_t start = 0; start < ds.size(); start += chunk) {
    const std::size_t stop = std::min(ds.size(), start + chunk);
    std::vector<const std::vector<float>*> maps;
    for (std::size_t i = start; i < stop; ++i) {
      maps.push_back(&ds.input_re[i]);
      maps.push_back(&ds.input_im[i]);
    }
    const Tensor<T> out = model.forward(detail::make_batch<T>(maps, n, m), NnMode::kInfer);
    for (std::size_t i = start; i < stop; ++i) {
      const T* re = out.data.data() + (2 * (i - start)) * mn;
      const T* im = out.data.data() + (2 * (i - start) + 1) * mn;
      double num = 0.0, den = 0.0;
      for (std::size_t j = 0; j < mn; ++j) {
        const double dr = static_cast<double>(re[j]) - ds.label_re[i][j];
        const double di = static_cast<double>(im[j]) - ds.label_im[i][j];
        num += dr * dr + di * di;
        den += static_cast<double>(ds.label_re[i][j]) * ds.label_re[i][j] +
               static_cast<double>(ds.label_im[i][j]) * ds.label_im[i][j];
      }
      if (den == 0.0) throw numeric_error("evaluate_nmse: zero reference");
      acc += num / den;
    }
  }
  return acc / static_cast<double>(ds.size());
}

namespace detail {

template <typename T>
TrainReport train_loop(ReCnn<T>& model, const Dataset& train, const Dataset* validation,
                       std::size_t steps, double lr, const TrainConfig& tc, Rng& rng,
                       bool cosine_decay) {
  const std::size_t n = train.n_subcarriers, m = train.n_slots, mn = n * m;
  const std::size_t pool = 2 * train.size();
  const auto params = model.parameters();
  std::vector<AdamState<T>> states;
  states.reserve(params.size());
  for (auto* p : params)
    states.push_back(AdamState<T>::for_parameter(*p, lr, tc.adam_beta1, tc.adam_beta2));

  // Validation cadence: one epoch-equivalent of batches; the final step
  // always validates so short runs still checkpoint.
  const std::size_t eval_every =
      validation ? std::max<std::size_t>(1, pool / tc.batch_size) : steps + 1;

  TrainReport report;
  report.steps = steps;
  ReCnn<T> best = model;
  double best_val = validation ? evaluate_nmse(model, *validation) : 0.0;
  const auto t0 = std::chrono::steady_clock::now();

  for (std::size_t step = 0; step < steps; ++step) {
    if (cosine_decay) {
      // Cosine decay from lr to lr/100; short schedules benefit from a hot
      // start and a cold finish far more than from any constant rate.
      const double lo = lr * 0.01;
      const double cur = lo + 0.5 * (lr - lo) *
                                  (1.0 + std::cos(M_PI * static_cast<double>(step) /
                                                  static_cast<double>(steps)));
      for (auto& s : states) s.learning_rate = cur;
    }
    std::vector<const std::vector<float>*> in_maps, lb_maps;
    for (std::size_t b = 0; b < tc.batch_size; ++b) {
      const std::size_t pick = rng.index(pool);
      const std::size_t sample = pick / 2;
      if (pick % 2 == 0) {
        in_maps.push_back(&train.input_re[sample]);
        lb_maps.push_back(&train.label_re[sample]);
      } else {
        in_maps.push_back(&train.input_im[sample]);
        lb_maps.push_back(&train.label_im[sample]);
      }
    }
    Tensor<T> input = make_batch<T>(in_maps, n, m);
    Tensor<T> label({tc.batch_size, mn});
    for (std::size_t b = 0; b < tc.batch_size; ++b)
      for (std::size_t j = 0; j < mn; ++j)
        label[b * mn + j] = static_cast<T>((*lb_maps[b])[j]);

    model.zero_grad();
    const Tensor<T> out = model.forward(input, NnMode::kTrain);
    auto [loss, grad] = mse_loss(out, label);
    if (!std::isfinite(loss))
      throw numeric_error("training diverged: loss is not finite at step " +
                          std::to_string(step));
    if (step == 0) report.initial_loss = loss;
    report.final_loss = loss;
    model.backward(grad);
    for (std::size_t i = 0; i < params.size(); ++i) adam_step(*params[i], states[i]);

    if (validation && ((step + 1) % eval_every == 0 || step + 1 == steps)) {
      const double val = evaluate_nmse(model, *validation);
      if (val < best_val) {
        best_val = val;
        best = model;
      }
    }
  }
  if (validation) {
    model = best;
    report.best_validation_nmse = best_val;
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace detail

// Pre-training on the source-domain set: Adam on batches sampled with
// replacement, keeping the best-validation checkpoint.
template <typename T>
TrainReport pretrain(ReCnn<T>& model, const Dataset& source, const TrainConfig& tc) {
  require(source.size() > 0, "pretrain: empty source dataset");
  const std::size_t val_count =
      std::min(source.size() - 1,
               static_cast<std::size_t>(std::round(tc.validation_fraction *
                                                   static_cast<double>(source.size()))));
  const std::size_t train_count = source.size() - val_count;
  const Dataset train = source.slice(0, train_count);
  const Dataset val = val_count > 0 ? source.slice(train_count, source.size()) : Dataset{};
  Rng rng(tc.seed ^ 0x707265747261696eull);
  return detail::train_loop(model, train, val_count > 0 ? &val : nullptr,
                            tc.gradsteps_pretrain, tc.lr_pretrain, tc, rng,
                            /*cosine_decay=*/true);
}

template <typename T>
double no_transfer_test(ReCnn<T>& model, const Dataset& target) {
  return evaluate_nmse(model, target);
}

// Freezes the convolutional stack and adapts only the dense parameters on
// the target training split.
template <typename T>
TrainReport finetune(ReCnn<T>& model, const Dataset& target_train, const TrainConfig& tc) {
  require(target_train.size() > 0, "finetune: empty fine-tuning dataset");
  model.freeze_convolutional();
  Rng rng(tc.seed ^ 0x66696e6574756e65ull);
  return detail::train_loop(model, target_train, static_cast<const Dataset*>(nullptr),
                            tc.gradsteps_finetune, tc.lr_finetune, tc, rng,
                            /*cosine_decay=*/false);
}

template <typename T>
double transfer_test(ReCnn<T>& model, const Dataset& target_test) {
  return evaluate_nmse(model, target_test);
}

// ---------------------------------------------------------------------------
// Dataset container: binary arrays plus a plain-text sidecar with per-sample
// provenance.
// ---------------------------------------------------------------------------

namespace detail {
inline constexpr char kDatasetMagic[8] = {'D', 'N', 'S', 'P', 'D', 'S', '0', '1'};
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  detail::ByteWriter w;
  w.raw(detail::kDatasetMagic, 8);
  w.u64(ds.size());
  w.u64(ds.n_subcarriers);
  w.u64(ds.n_slots);
  w.str("subcarrier-major");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto put = [&](const std::vector<float>& v) { w.raw(v.data(), v.size() * sizeof(float)); };
    put(ds.input_re[i]);
    put(ds.input_im[i]);
    put(ds.label_re[i]);
    put(ds.label_im[i]);
  }
  w.u32(crc32(w.bytes.data(), w.bytes.size()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw input_error("save_dataset: cannot open " + path);
  out.write(reinterpret_cast<const char*>(w.bytes.data()),
            static_cast<std::streamsize>(w.bytes.size()));

  std::ofstream meta(path + ".meta.txt", std::ios::trunc);
  meta << "# index scenario_id snr_db seed\n";
  for (std::size_t i = 0; i < ds.size(); ++i)
    meta << i << ' ' << ds.meta[i].scenario_id << ' ' << ds.meta[i].snr_db << ' '
         << ds.meta[i].seed << '\n';
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("load_dataset: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 12) throw input_error("dataset container: truncated file");
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  if (crc32(bytes.data(), bytes.size() - 4) != stored)
    throw input_error("dataset container: checksum failure");

  detail::ByteReader r{bytes};
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, detail::kDatasetMagic, 8) != 0)
    throw input_error("dataset container: bad magic");
  Dataset ds;
  const std::uint64_t count = r.u64();
  ds.n_subcarriers = r.u64();
  ds.n_slots = r.u64();
  if (r.str() != "subcarrier-major")
    throw input_error("dataset container: unknown layout tag");
  const std::size_t mn = ds.map_size();
  for (std::uint64_t i = 0; i < count; ++i) {
    auto get = [&] {
      std::vector<float> v(mn);
      r.raw(v.data(), mn * sizeof(float));
      return v;
    };
    ds.input_re.push_back(get());
    ds.input_im.push_back(get());
    ds.label_re.push_back(get());
    ds.label_im.push_back(get());
  }
  ds.meta.resize(count);

  std::ifstream meta(path + ".meta.txt");
  if (meta) {
    std::string line;
    std::getline(meta, line);  // header
    std::size_t idx;
    SampleMeta sm;
    while (meta >> idx >> sm.scenario_id >> sm.snr_db >> sm.seed)
      if (idx < count) ds.meta[idx] = sm;
  }
  return ds;
}

}  // namespace dnsp
