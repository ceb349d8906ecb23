#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "dnsp/tl.hpp"

using namespace dnsp;

namespace {

OfdmConfig tiny_ofdm() { return make_ofdm_config(16, 4, 2, 4, 0.2, 1.0); }

std::vector<DomainScenario> tiny_scenarios() {
  return {{"a", 2.0, 4, 0.99, 1}, {"b", 6.0, 4, 0.99, 2}};
}

ReCnnArch arch_for(const OfdmConfig& cfg, std::size_t hidden) {
  ReCnnArch arch;
  arch.scale = "tiny";
  arch.n_subcarriers = cfg.n_subcarriers;
  arch.n_slots = cfg.n_slots;
  arch.conv_layers = 3;
  arch.filters = 4;
  arch.kernel = 3;
  arch.dense_hidden = hidden;
  return arch;
}

// Zero conv stack plus identity dense layers: the network output equals its
// input, so network NMSE must equal the LS NMSE of the dataset.
ReCnn<float> passthrough_model(const OfdmConfig& cfg) {
  ReCnnArch arch = arch_for(cfg, cfg.n_subcarriers * cfg.n_slots);
  ReCnn<float> net(arch);
  for (Parameter<float>* p : net.conv_parameters())
    for (auto& v : p->value.data) v = 0.0f;
  auto dense = net.dense_parameters();
  const std::size_t mn = arch.map_size();
  for (std::size_t i = 0; i < mn; ++i)
    for (std::size_t j = 0; j < mn; ++j) {
      dense[0]->value[i * mn + j] = i == j ? 1.0f : 0.0f;
      dense[2]->value[i * mn + j] = i == j ? 1.0f : 0.0f;
    }
  return net;
}

}  // namespace

TEST_CASE("dataset generation shapes and provenance") {
  const OfdmConfig cfg = tiny_ofdm();
  const std::vector<double> grid = {0, 10, 20};
  const Dataset ds = generate_dataset(tiny_scenarios(), 25, cfg, grid, 42);

  REQUIRE(ds.size() == 25);
  CHECK(ds.n_subcarriers == 16);
  CHECK(ds.n_slots == 2);
  bool saw_a = false, saw_b = false;
  for (const auto& m : ds.meta) {
    CHECK((m.scenario_id == "a" || m.scenario_id == "b"));
    saw_a |= m.scenario_id == "a";
    saw_b |= m.scenario_id == "b";
    CHECK((m.snr_db == 0 || m.snr_db == 10 || m.snr_db == 20));
  }
  CHECK(saw_a);
  CHECK(saw_b);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(ds.input_re[i].size() == ds.map_size());
    CHECK(ds.label_im[i].size() == ds.map_size());
  }
}

TEST_CASE("dataset generation is deterministic in the seed") {
  const OfdmConfig cfg = tiny_ofdm();
  const Dataset a = generate_dataset(tiny_scenarios(), 10, cfg, {10}, 7);
  const Dataset b = generate_dataset(tiny_scenarios(), 10, cfg, {10}, 7);
  const Dataset c = generate_dataset(tiny_scenarios(), 10, cfg, {10}, 8);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.input_re[i] == b.input_re[i]);
    CHECK(a.label_im[i] == b.label_im[i]);
  }
  CHECK(a.input_re[0] != c.input_re[0]);
}

TEST_CASE("inputs converge to labels as noise vanishes") {
  // At extreme SNR the least-squares input equals the true channel up to
  // float rounding because the tap count does not exceed the pilot count.
  const OfdmConfig cfg = tiny_ofdm();
  const Dataset ds = generate_dataset(tiny_scenarios(), 5, cfg, {300.0}, 3);
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t j = 0; j < ds.map_size(); ++j) {
      CHECK(ds.input_re[i][j] == Catch::Approx(ds.label_re[i][j]).margin(2e-5));
      CHECK(ds.input_im[i][j] == Catch::Approx(ds.label_im[i][j]).margin(2e-5));
    }
}

TEST_CASE("evaluate_nmse of a passthrough network equals the dataset LS error") {
  const OfdmConfig cfg = tiny_ofdm();
  const Dataset ds = generate_dataset(tiny_scenarios(), 12, cfg, {5}, 19);
  ReCnn<float> net = passthrough_model(cfg);

  double direct = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < ds.map_size(); ++j) {
      const double dr = ds.input_re[i][j] - ds.label_re[i][j];
      const double di = ds.input_im[i][j] - ds.label_im[i][j];
      num += dr * dr + di * di;
      den += double(ds.label_re[i][j]) * ds.label_re[i][j] +
             double(ds.label_im[i][j]) * ds.label_im[i][j];
    }
    direct += num / den;
  }
  direct /= static_cast<double>(ds.size());
  CHECK(evaluate_nmse(net, ds) == Catch::Approx(direct).epsilon(1e-4));
}

TEST_CASE("training reduces the loss on a small set") {
  const OfdmConfig cfg = tiny_ofdm();
  const Dataset ds = generate_dataset(tiny_scenarios(), 8, cfg, {10}, 5);
  ReCnn<float> net(arch_for(cfg, 40));
  Rng init(1);
  net.init(init);

  TrainConfig tc;
  tc.batch_size = 8;
  tc.gradsteps_pretrain = 200;
  tc.lr_pretrain = 1e-3;
  tc.seed = 2;
  const TrainReport rep = pretrain(net, ds, tc);
  CHECK(rep.steps == 200);
  CHECK(rep.final_loss < rep.initial_loss);
  CHECK(rep.best_validation_nmse > 0.0);
}

TEST_CASE("pretraining is deterministic") {
  const OfdmConfig cfg = tiny_ofdm();
  const Dataset ds = generate_dataset(tiny_scenarios(), 8, cfg, {10}, 5);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.gradsteps_pretrain = 50;
  tc.seed = 9;

  auto run = [&] {
    ReCnn<float> net(arch_for(cfg, 40));
    Rng init(4);
    net.init(init);
    pretrain(net, ds, tc);
    return net;
  };
  ReCnn<float> a = run();
  ReCnn<float> b = run();
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.data == pb[i]->value.data);
}

TEST_CASE("fine-tuning leaves the conv stack bit identical") {
  const OfdmConfig cfg = tiny_ofdm();
  const Dataset source = generate_dataset(tiny_scenarios(), 8, cfg, {10}, 5);
  const Dataset target = generate_dataset({{"t", 3.0, 4, 0.95, 9}}, 6, cfg, {10}, 6);

  ReCnn<float> net(arch_for(cfg, 40));
  Rng init(2);
  net.init(init);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.gradsteps_pretrain = 30;
  tc.gradsteps_finetune = 30;
  tc.lr_finetune = 1e-3;
  pretrain(net, source, tc);

  std::vector<std::vector<float>> conv_before;
  for (Parameter<float>* p : net.conv_parameters()) conv_before.push_back(p->value.data);
  std::vector<std::vector<float>> dense_before;
  for (Parameter<float>* p : net.dense_parameters()) dense_before.push_back(p->value.data);

  finetune(net, target, tc);

  const auto conv = net.conv_parameters();
  for (std::size_t i = 0; i < conv.size(); ++i) CHECK(conv[i]->value.data == conv_before[i]);
  bool dense_moved = false;
  const auto dense = net.dense_parameters();
  for (std::size_t i = 0; i < dense.size(); ++i)
    dense_moved |= dense[i]->value.data != dense_before[i];
  CHECK(dense_moved);
}

TEST_CASE("dataset container round trip") {
  const OfdmConfig cfg = tiny_ofdm();
  const Dataset ds = generate_dataset(tiny_scenarios(), 7, cfg, {0, 20}, 13);
  const std::string path = "/tmp/dnsp_test_ds.bin";
  save_dataset(ds, path);
  const Dataset back = load_dataset(path);

  REQUIRE(back.size() == ds.size());
  CHECK(back.n_subcarriers == ds.n_subcarriers);
  CHECK(back.n_slots == ds.n_slots);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.input_re[i] == ds.input_re[i]);
    CHECK(back.input_im[i] == ds.input_im[i]);
    CHECK(back.label_re[i] == ds.label_re[i]);
    CHECK(back.label_im[i] == ds.label_im[i]);
    CHECK(back.meta[i].scenario_id == ds.meta[i].scenario_id);
    CHECK(back.meta[i].snr_db == ds.meta[i].snr_db);
    CHECK(back.meta[i].seed == ds.meta[i].seed);
  }

  SECTION("corrupted payload is rejected") {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekg(64);
    char b = 0;
    f.read(&b, 1);
    b ^= 0x5a;
    f.seekp(64);
    f.write(&b, 1);
    f.close();
    CHECK_THROWS_WITH(load_dataset(path), Catch::Matchers::ContainsSubstring("checksum"));
  }
  std::remove(path.c_str());
  std::remove((path + ".meta.txt").c_str());
}
