#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dnsp/channel.hpp"
#include "dnsp/common.hpp"
#include "dnsp/ofdm.hpp"
#include "dnsp/recnn.hpp"
#include "dnsp/tl.hpp"

namespace dnsp {

// Plain-text key-value configuration with [section] headers and '#'
// comments. Parse errors carry the offending line number.
class ConfigFile {
 public:
  static ConfigFile parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
  }

  static ConfigFile parse_string(const std::string& text, const std::string& origin = "<string>") {
    ConfigFile cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto last = line.find_last_not_of(" \t\r");
      line = line.substr(first, last - first + 1);
      if (line.front() == '[') {
        if (line.back() != ']')
          throw config_error(origin + ":" + std::to_string(lineno) +
                             ": unterminated section header");
        section = line.substr(1, line.size() - 2);
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw config_error(origin + ":" + std::to_string(lineno) +
                           ": expected key = value");
      std::string key = line.substr(0, eq);
      std::string val = line.substr(eq + 1);
      auto trim = [](std::string& s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
      };
      trim(key);
      trim(val);
      if (key.empty())
        throw config_error(origin + ":" + std::to_string(lineno) + ": empty key");
      cfg.values_[section + "." + key] = val;
      cfg.sections_.insert(section);
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw config_error("config: key '" + key + "' is not a number: " + it->second);
    }
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    const double v = get_double(key, static_cast<double>(fallback));
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)))
      throw config_error("config: key '" + key + "' must be a nonnegative integer");
    return static_cast<std::size_t>(v);
  }

  std::vector<double> get_list(const std::string& key, std::vector<double> fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        out.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw config_error("config: key '" + key + "' has a non-numeric entry: " + tok);
      }
    }
    return out;
  }

  const std::set<std::string>& sections() const { return sections_; }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> sections_;
};

// Full experiment description with defaults matching the reference
// simulation parameters (N=256, P=8, L=8, M=16, rho=0.2, V=20, lr 1e-4).
struct ExperimentConfig {
  std::string scale = "paper";
  OfdmConfig ofdm;
  std::vector<DomainScenario> source_scenarios;
  DomainScenario target_scenario;
  TrainConfig train;
  std::size_t source_samples = 8000;
  std::size_t target_samples = 500;
  std::size_t target_train_samples = 300;
  std::vector<double> eval_snr_grid = {0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
  std::size_t eval_frames = 500;
  std::vector<double> sweep_pilots = {4, 8, 16};
  std::vector<double> sweep_power_fractions = {0.1, 0.2, 0.3};
  std::uint64_t seed = 1;

  static ExperimentConfig defaults(const std::string& scale) {
    ExperimentConfig ec;
    ec.scale = scale;
    const ReCnnArch arch = desk_scale_config(scale);
    ec.ofdm = make_ofdm_config(arch.n_subcarriers, 8, arch.n_slots, 8, 0.2, 1.0);
    ec.source_scenarios = {
        {"source1", 2.0, ec.ofdm.n_taps, 0.99, 101},
        {"source2", 4.0, ec.ofdm.n_taps, 0.99, 102},
        {"source3", 8.0, ec.ofdm.n_taps, 0.99, 103},
    };
    ec.target_scenario = {"target", 3.0, ec.ofdm.n_taps, 0.95, 201};
    if (scale == "small") {
      // Shorter schedule wants a hotter pre-train rate; the fine-tune rate
      // stays low because 300 dense-only steps on 300 samples overfit fast.
      ec.train.lr_pretrain = 1e-3;
      ec.train.lr_finetune = 3e-5;
      ec.train.gradsteps_pretrain = 3000;
      ec.train.gradsteps_finetune = 300;
    }
    return ec;
  }

  ReCnnArch arch() const {
    ReCnnArch a = desk_scale_config(scale);
    a.n_subcarriers = ofdm.n_subcarriers;
    a.n_slots = ofdm.n_slots;
    if (scale == "small") a.dense_hidden = std::max<std::size_t>(1, a.map_size() * 5 / 4);
    return a;
  }

  static ExperimentConfig from_config(const ConfigFile& cf, const std::string& scale_flag = "") {
    const std::string scale = !scale_flag.empty() ? scale_flag
                                                  : cf.get("network.scale", "paper");
    ExperimentConfig ec = defaults(scale);
    const ReCnnArch arch = desk_scale_config(scale);
    ec.ofdm = make_ofdm_config(
        cf.get_size("ofdm.n_subcarriers", arch.n_subcarriers),
        cf.get_size("ofdm.n_pilots", 8), cf.get_size("ofdm.n_slots", arch.n_slots),
        cf.get_size("ofdm.n_taps", 8), cf.get_double("ofdm.power_fraction", 0.2),
        cf.get_double("ofdm.total_power", 1.0));

    std::vector<DomainScenario> sources;
    DomainScenario target = ec.target_scenario;
    target.n_taps = ec.ofdm.n_taps;
    bool saw_target = false;
    for (const std::string& sec : cf.sections()) {
      if (sec.rfind("scenario.", 0) != 0) continue;
      const std::string name = sec.substr(9);
      DomainScenario sc;
      sc.scenario_id = name;
      sc.pdp_decay = cf.get_double(sec + ".pdp_decay", 4.0);
      sc.n_taps = ec.ofdm.n_taps;
      sc.slot_correlation = cf.get_double(sec + ".slot_correlation", 0.99);
      sc.seed_space = cf.get_size(sec + ".seed_space", 100);
      if (cf.get(sec + ".role", name == "target" ? "target" : "source") == "target") {
        target = sc;
        saw_target = true;
      } else {
        sources.push_back(sc);
      }
    }
    if (!sources.empty()) ec.source_scenarios = sources;
    if (saw_target) ec.target_scenario = target;
    for (auto& sc : ec.source_scenarios) sc.n_taps = ec.ofdm.n_taps;
    ec.target_scenario.n_taps = ec.ofdm.n_taps;

    TrainConfig& t = ec.train;
    t.lr_pretrain = cf.get_double("training.lr_pretrain", t.lr_pretrain);
    t.lr_finetune = cf.get_double("training.lr_finetune", t.lr_finetune);
    t.batch_size = cf.get_size("training.batch_size", t.batch_size);
    t.gradsteps_pretrain = cf.get_size("training.gradsteps_pretrain", t.gradsteps_pretrain);
    t.gradsteps_finetune = cf.get_size("training.gradsteps_finetune", t.gradsteps_finetune);
    t.snr_grid = cf.get_list("training.snr_grid", t.snr_grid);
    ec.seed = cf.get_size("training.seed", 1);
    t.seed = ec.seed;
    ec.source_samples = cf.get_size("training.source_samples", ec.source_samples);
    ec.target_samples = cf.get_size("training.target_samples", ec.target_samples);
    ec.target_train_samples =
        cf.get_size("training.target_train_samples", ec.target_train_samples);
    if (ec.target_train_samples > ec.target_samples)
      throw config_error("config: target_train_samples exceeds target_samples");
    ec.eval_snr_grid = cf.get_list("eval.snr_grid", ec.eval_snr_grid);
    ec.eval_frames = cf.get_size("eval.frames_per_point", ec.eval_frames);
    ec.sweep_pilots = cf.get_list("sweep.pilots", ec.sweep_pilots);
    ec.sweep_power_fractions =
        cf.get_list("sweep.power_fractions", ec.sweep_power_fractions);
    return ec;
  }

  // Canonical text form; written as the config snapshot so reruns are
  // byte-reproducible.
  std::string snapshot() const {
    std::ostringstream os;
    os << "[network]\nscale = " << scale << "\n\n[ofdm]\n";
    os << "n_subcarriers = " << ofdm.n_subcarriers << "\n";
    os << "n_pilots = " << ofdm.n_pilots << "\n";
    os << "n_slots = " << ofdm.n_slots << "\n";
    os << "n_taps = " << ofdm.n_taps << "\n";
    os << "power_fraction = " << ofdm.power_fraction << "\n";
    os << "total_power = " << ofdm.total_power << "\n";
    auto scenario = [&](const DomainScenario& sc, const std::string& role) {
      os << "\n[scenario." << sc.scenario_id << "]\n";
      os << "role = " << role << "\n";
      os << "pdp_decay = " << sc.pdp_decay << "\n";
      os << "slot_correlation = " << sc.slot_correlation << "\n";
      os << "seed_space = " << sc.seed_space << "\n";
    };
    for (const auto& sc : source_scenarios) scenario(sc, "source");
    scenario(target_scenario, "target");
    os << "\n[training]\n";
    os << "lr_pretrain = " << train.lr_pretrain << "\n";
    os << "lr_finetune = " << train.lr_finetune << "\n";
    os << "batch_size = " << train.batch_size << "\n";
    os << "gradsteps_pretrain = " << train.gradsteps_pretrain << "\n";
    os << "gradsteps_finetune = " << train.gradsteps_finetune << "\n";
    os << "source_samples = " << source_samples << "\n";
    os << "target_samples = " << target_samples << "\n";
    os << "target_train_samples = " << target_train_samples << "\n";
    auto list = [&](const std::vector<double>& v) {
      for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    };
    os << "snr_grid = ";
    list(train.snr_grid);
    os << "\nseed = " << seed << "\n";
    os << "\n[eval]\nsnr_grid = ";
    list(eval_snr_grid);
    os << "\nframes_per_point = " << eval_frames << "\n";
    os << "\n[sweep]\npilots = ";
    list(sweep_pilots);
    os << "\npower_fractions = ";
    list(sweep_power_fractions);
    os << "\n";
    return os.str();
  }
};

}  // namespace dnsp
