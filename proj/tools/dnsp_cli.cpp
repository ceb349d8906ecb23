// Command-line driver for the DNSP channel-estimation pipeline.
//
// Stages write their artifacts under --out and later stages read them back,
// so a full run is: gen-data, pretrain, finetune, eval, baselines, ber.
// Exit codes: 0 success, 1 usage or configuration, 2 missing stage inputs,
// 3 numerical failure.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "dnsp/harness.hpp"

namespace {

dnsp::ExperimentConfig load_config(const std::string& config_path, const std::string& scale,
                                   std::uint64_t seed_flag, bool seed_set) {
  dnsp::ExperimentConfig cfg =
      config_path.empty()
          ? dnsp::ExperimentConfig::defaults(scale.empty() ? "paper" : scale)
          : dnsp::ExperimentConfig::from_config(dnsp::ConfigFile::parse_file(config_path),
                                                scale);
  if (seed_set) {
    cfg.seed = seed_flag;
    cfg.train.seed = seed_flag;
  }
  return cfg;
}

void print_train_report(const char* stage, const dnsp::TrainReport& r) {
  std::printf("%s: %zu steps, loss %.6g -> %.6g, best validation nmse %.6g, %.1f s\n", stage,
              r.steps, r.initial_loss, r.final_loss, r.best_validation_nmse, r.seconds);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"superimposed-pilot OFDM channel estimation with transfer learning"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", scale;
  std::uint64_t seed = 1;
  bool seed_set = false;
  app.add_option("--config", config_path, "experiment config file");
  app.add_option("--out", out_dir, "artifact directory");
  app.add_option("--scale", scale, "network scale: small or paper")
      ->check(CLI::IsMember({"small", "paper"}));
  app.add_option("--seed", seed, "master seed")->each([&](const std::string&) {
    seed_set = true;
  });

  auto* gen = app.add_subcommand("gen-data", "generate source and target datasets");
  auto* pre = app.add_subcommand("pretrain", "train on the source datasets");
  auto* fin = app.add_subcommand("finetune", "adapt dense layers on target data");
  auto* evl = app.add_subcommand("eval", "NMSE of all estimators on fresh target frames");
  auto* base = app.add_subcommand("baselines", "classical estimator curves and sweeps");
  auto* berc = app.add_subcommand("ber", "uncoded bit error rate comparison");
  auto* gcheck = app.add_subcommand("grad-check", "finite-difference gradient audit");
  auto* report = app.add_subcommand("report", "print stored result tables");

  std::string table = "nmse";
  report->add_option("--table", table, "table name: nmse, baselines or ber");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const dnsp::ExperimentConfig cfg = load_config(config_path, scale, seed, seed_set);
    if (gen->parsed()) {
      dnsp::run_gen_data(cfg, out_dir);
      std::printf("wrote %s and %s\n", dnsp::paths::source_data(out_dir).c_str(),
                  dnsp::paths::target_data(out_dir).c_str());
    } else if (pre->parsed()) {
      print_train_report("pretrain", dnsp::run_pretrain(cfg, out_dir));
    } else if (fin->parsed()) {
      print_train_report("finetune", dnsp::run_finetune(cfg, out_dir));
    } else if (evl->parsed()) {
      std::fputs(dnsp::to_csv(dnsp::run_eval(cfg, out_dir)).c_str(), stdout);
    } else if (base->parsed()) {
      std::fputs(dnsp::to_csv(dnsp::run_baselines(cfg, out_dir)).c_str(), stdout);
    } else if (berc->parsed()) {
      std::fputs(dnsp::to_csv(dnsp::run_ber(cfg, out_dir)).c_str(), stdout);
    } else if (gcheck->parsed()) {
      // Audit the full network at a reduced size in double precision.
      dnsp::ReCnnArch arch = dnsp::desk_scale_config("small");
      arch.n_subcarriers = 8;
      arch.n_slots = 4;
      arch.conv_layers = 3;
      arch.filters = 4;
      arch.dense_hidden = 16;
      dnsp::ReCnn<double> net(arch);
      dnsp::Rng rng(cfg.seed);
      net.init(rng);
      dnsp::Tensor<double> x({2, arch.n_subcarriers, arch.n_slots, 1});
      dnsp::Tensor<double> label({2, arch.map_size()});
      for (auto& v : x.data) v = rng.gaussian();
      for (auto& v : label.data) v = rng.gaussian();
      net.zero_grad();
      {
        auto out = net.forward(x, dnsp::NnMode::kTrain);
        auto [loss, grad] = dnsp::mse_loss(out, label);
        net.backward(grad);
      }
      const auto rep = dnsp::grad_check(
          net.parameters(),
          [&] {
            auto out = net.forward(x, dnsp::NnMode::kTrain);
            return dnsp::mse_loss(out, label).first;
          },
          1e-4, 20);
      std::printf("grad-check: max relative error %.3g at %s (%s)\n", rep.max_rel_error,
                  rep.worst_parameter.c_str(), rep.passed ? "pass" : "FAIL");
      if (!rep.passed) return 3;
    } else if (report->parsed()) {
      std::fputs(dnsp::read_text_file(out_dir + "/tables/" + table + ".csv").c_str(), stdout);
    }
  } catch (const dnsp::dependency_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dnsp::numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
