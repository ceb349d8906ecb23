#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dnsp/common.hpp"
#include "dnsp/recnn.hpp"

static_assert(std::endian::native == std::endian::little,
              "model container is little-endian; big-endian hosts need byte swaps");

namespace dnsp {

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t len,
                           std::uint32_t crc = 0) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc = ~crc;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return ~crc;
}

namespace detail {

inline constexpr char kModelMagic[8] = {'D', 'N', 'S', 'P', 'M', 'D', 'L', '1'};
inline constexpr std::uint32_t kModelVersion = 1;

struct ByteWriter {
  std::vector<std::uint8_t> bytes;

  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
};

struct ByteReader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  void raw(void* p, std::size_t n) {
    if (pos + n > bytes.size()) throw input_error("model container: truncated file");
    std::memcpy(p, bytes.data() + pos, n);
    pos += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  double f64() {
    double v;
    raw(&v, 8);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
};

template <typename T>
void write_array(ByteWriter& w, const Tensor<T>& t) {
  for (const T& v : t.data) w.f64(static_cast<double>(v));
}

template <typename T>
void read_array(ByteReader& r, Tensor<T>& t) {
  for (T& v : t.data) v = static_cast<T>(r.f64());
}

}  // namespace detail

// Versioned binary container: magic, version, architecture text header,
// parameter manifest (name, shape, freeze flag), BN running statistics, then
// the arrays as little-endian IEEE-754 doubles in manifest order, and a
// trailing CRC32 of everything before it.
template <typename T>
void save_model(ReCnn<T>& model, const std::string& path) {
  detail::ByteWriter w;
  w.raw(detail::kModelMagic, 8);
  w.u32(detail::kModelVersion);

  const ReCnnArch& a = model.arch();
  std::ostringstream arch_text;
  arch_text << "scale=" << a.scale << " n=" << a.n_subcarriers << " m=" << a.n_slots
            << " conv_layers=" << a.conv_layers << " filters=" << a.filters
            << " kernel=" << a.kernel << " dense_hidden=" << a.dense_hidden;
  w.str(arch_text.str());

  const auto params = model.parameters();
  w.u64(params.size());
  for (const Parameter<T>* p : params) {
    w.str(p->name);
    w.u32(static_cast<std::uint32_t>(p->value.shape.size()));
    for (std::size_t d : p->value.shape) w.u64(d);
    w.u32(p->frozen ? 1 : 0);
  }
  w.u64(model.batch_norms().size());
  for (const Parameter<T>* p : params) detail::write_array(w, p->value);
  for (auto& bn : model.batch_norms()) {
    detail::write_array(w, bn.running_mean);
    detail::write_array(w, bn.running_var);
    w.u32(bn.stats_locked() ? 1 : 0);
  }

  const std::uint32_t crc = crc32(w.bytes.data(), w.bytes.size());
  w.u32(crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw input_error("save_model: cannot open " + path);
  out.write(reinterpret_cast<const char*>(w.bytes.data()),
            static_cast<std::streamsize>(w.bytes.size()));
}

template <typename T>
ReCnn<T> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("load_model: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw input_error("model container: truncated file");

  const std::uint32_t stored_crc = [&] {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + bytes.size() - 4, 4);
    return v;
  }();
  if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
    throw input_error("model container: checksum failure");

  detail::ByteReader r{bytes};
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, detail::kModelMagic, 8) != 0)
    throw input_error("model container: bad magic");
  if (r.u32() != detail::kModelVersion)
    throw input_error("model container: version mismatch");

  const std::string arch_text = r.str();
  ReCnnArch arch;
  std::istringstream as(arch_text);
  std::string tok;
  while (as >> tok) {
    const auto eq = tok.find('=');
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "scale") arch.scale = val;
    else if (key == "n") arch.n_subcarriers = std::stoul(val);
    else if (key == "m") arch.n_slots = std::stoul(val);
    else if (key == "conv_layers") arch.conv_layers = std::stoul(val);
    else if (key == "filters") arch.filters = std::stoul(val);
    else if (key == "kernel") arch.kernel = std::stoul(val);
    else if (key == "dense_hidden") arch.dense_hidden = std::stoul(val);
  }

  ReCnn<T> model(arch);
  const auto params = model.parameters();
  const std::uint64_t n_params = r.u64();
  if (n_params != params.size()) throw input_error("model container: manifest mismatch");
  std::vector<bool> frozen(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = r.str();
    if (name != params[i]->name) throw input_error("model container: manifest mismatch");
    const std::uint32_t ndim = r.u32();
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = r.u64();
    if (shape != params[i]->value.shape)
      throw input_error("model container: shape mismatch for " + name);
    frozen[i] = r.u32() != 0;
  }
  const std::uint64_t n_bn = r.u64();
  if (n_bn != model.batch_norms().size())
    throw input_error("model container: manifest mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    detail::read_array(r, params[i]->value);
    params[i]->frozen = frozen[i];
  }
  for (auto& bn : model.batch_norms()) {
    detail::read_array(r, bn.running_mean);
    detail::read_array(r, bn.running_var);
    if (r.u32() != 0) bn.lock_stats();
  }
  return model;
}

}  // namespace dnsp
