#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "dnsp/recnn.hpp"
#include "dnsp/serialize.hpp"

using namespace dnsp;

namespace {

ReCnnArch tiny_arch() {
  ReCnnArch arch;
  arch.scale = "tiny";
  arch.n_subcarriers = 8;
  arch.n_slots = 4;
  arch.conv_layers = 3;
  arch.filters = 4;
  arch.kernel = 3;
  arch.dense_hidden = 12;
  return arch;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/dnsp_test_" + name) {}
  ~TempFile() {
    std::remove(path.c_str());
  }
};

}  // namespace

TEST_CASE("crc32 known vectors") {
  // Standard reflected polynomial; value for "123456789" is the usual
  // check constant.
  const char* s = "123456789";
  CHECK(crc32(reinterpret_cast<const std::uint8_t*>(s), 9) == 0xcbf43926u);
  CHECK(crc32(nullptr, 0) == 0u);
}

TEST_CASE("model round trip is bit identical") {
  ReCnn<float> net(tiny_arch());
  Rng rng(77);
  net.init(rng);
  // Push the running statistics off their init values so they are covered.
  Tensor<float> x({4, 8, 4, 1});
  for (auto& v : x.data) v = static_cast<float>(rng.gaussian());
  net.forward(x, NnMode::kTrain);

  TempFile f("model_rt.bin");
  save_model(net, f.path);
  ReCnn<float> back = load_model<float>(f.path);

  const auto a = net.parameters();
  const auto b = back.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i]->value.shape == b[i]->value.shape);
    for (std::size_t j = 0; j < a[i]->value.numel(); ++j)
      CHECK(a[i]->value[j] == b[i]->value[j]);
    CHECK(a[i]->frozen == b[i]->frozen);
  }
  for (std::size_t i = 0; i < net.batch_norms().size(); ++i) {
    CHECK(net.batch_norms()[i].running_mean.data == back.batch_norms()[i].running_mean.data);
    CHECK(net.batch_norms()[i].running_var.data == back.batch_norms()[i].running_var.data);
  }

  // Identical forward passes after reload.
  const Tensor<float> y1 = net.forward(x, NnMode::kInfer);
  const Tensor<float> y2 = back.forward(x, NnMode::kInfer);
  CHECK(y1.data == y2.data);
}

TEST_CASE("freeze flags survive the round trip") {
  ReCnn<float> net(tiny_arch());
  Rng rng(12);
  net.init(rng);
  net.freeze_convolutional();

  TempFile f("model_frozen.bin");
  save_model(net, f.path);
  ReCnn<float> back = load_model<float>(f.path);
  CHECK(back.trainable_parameter_count() == net.trainable_parameter_count());
  for (Parameter<float>* p : back.conv_parameters()) CHECK(p->frozen);

  // Locked statistics must stay locked: a train-mode pass may not move them.
  Tensor<float> x({4, 8, 4, 1});
  for (auto& v : x.data) v = static_cast<float>(rng.gaussian());
  const auto before = back.batch_norms()[0].running_mean.data;
  back.forward(x, NnMode::kTrain);
  CHECK(back.batch_norms()[0].running_mean.data == before);
}

TEST_CASE("corruption and truncation are rejected") {
  ReCnn<float> net(tiny_arch());
  Rng rng(5);
  net.init(rng);
  TempFile f("model_corrupt.bin");
  save_model(net, f.path);

  std::ifstream in(f.path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  SECTION("flipped payload byte fails the checksum") {
    bytes[bytes.size() / 2] ^= 0x40;
    std::ofstream out(f.path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_WITH(load_model<float>(f.path), Catch::Matchers::ContainsSubstring("checksum"));
  }

  SECTION("truncated file is rejected") {
    std::ofstream out(f.path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS(load_model<float>(f.path), input_error);
  }

  SECTION("bad magic is rejected even with a valid checksum") {
    bytes[0] = 'X';
    // Recompute the trailing checksum so only the magic is wrong.
    const std::uint32_t crc =
        crc32(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size() - 4);
    std::memcpy(bytes.data() + bytes.size() - 4, &crc, 4);
    std::ofstream out(f.path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_WITH(load_model<float>(f.path), Catch::Matchers::ContainsSubstring("magic"));
  }

  SECTION("missing file is rejected") {
    CHECK_THROWS_AS(load_model<float>("/tmp/dnsp_no_such_file.bin"), input_error);
  }
}

TEST_CASE("loading into a mismatched architecture is rejected") {
  ReCnn<float> net(tiny_arch());
  Rng rng(5);
  net.init(rng);
  TempFile f("model_arch.bin");
  save_model(net, f.path);

  // The container records the architecture; a reload always reconstructs
  // it, so a mismatch can only come from a tampered header.
  ReCnn<float> back = load_model<float>(f.path);
  CHECK(back.arch().n_subcarriers == 8);
  CHECK(back.arch().conv_layers == 3);
  CHECK(back.parameter_count() == net.parameter_count());
}
