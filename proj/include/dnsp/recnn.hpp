#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "dnsp/common.hpp"
#include "dnsp/nn.hpp"

namespace dnsp {

// Architecture descriptor. `paper` is the full-size network; `small` keeps
// the same topology at CI-friendly dimensions.
struct ReCnnArch {
  std::string scale = "paper";
  std::size_t n_subcarriers = 256;  // map height
  std::size_t n_slots = 16;         // map width
  std::size_t conv_layers = 14;
  std::size_t filters = 48;
  std::size_t kernel = 5;
  std::size_t dense_hidden = 5120;

  std::size_t map_size() const { return n_subcarriers * n_slots; }
};

inline ReCnnArch desk_scale_config(const std::string& scale) {
  ReCnnArch arch;
  if (scale == "paper") {
    arch = ReCnnArch{};
  } else if (scale == "small") {
    arch.scale = "small";
    arch.n_subcarriers = 64;
    arch.n_slots = 8;
    arch.conv_layers = 6;
    arch.filters = 16;
    arch.dense_hidden = 640;  // 1.25 * MN
  } else {
    throw config_error("desk_scale_config: unknown scale '" + scale + "'");
  }
  return arch;
}

// Residual denoising CNN: C1 (+ReLU), C2..C_{K-1} (+ReLU+BN), C_K linear,
// then denoised = input - conv output, flatten, F1, F2 (both linear).
// Input maps are (B, N, M, 1); the flatten is subcarrier-major.
template <typename T>
class ReCnn {
 public:
  explicit ReCnn(const ReCnnArch& arch)
      : arch_(arch),
        f1_("F1", arch.map_size(), arch.dense_hidden),
        f2_("F2", arch.dense_hidden, arch.map_size()) {
    if (arch.conv_layers < 2) throw config_error("recnn: need at least 2 conv layers");
    convs_.reserve(arch.conv_layers);
    for (std::size_t i = 0; i < arch.conv_layers; ++i) {
      const std::size_t cin = i == 0 ? 1 : arch.filters;
      const std::size_t cout = i + 1 == arch.conv_layers ? 1 : arch.filters;
      convs_.emplace_back("C" + std::to_string(i + 1), arch.kernel, cin, cout);
      if (i > 0 && i + 1 < arch.conv_layers)
        bns_.emplace_back("C" + std::to_string(i + 1) + ".bn", arch.filters);
    }
    relus_.resize(arch.conv_layers - 1);
  }

  // He init for the conv bulk; the last conv layer is zeroed and the dense
  // head is a damped-random identity composition, so the freshly initialized
  // network is a near-passthrough: its estimate starts at the LS input and
  // training can only improve on it. A randomly initialized head would have
  // to learn the identity from scratch, which floors the high-SNR accuracy
  // on short training schedules.
  void init(Rng& rng) {
    for (auto& c : convs_) c.init_he(rng);
    convs_.back().kernels.value.fill(T(0));
    convs_.back().bias.value.fill(T(0));
    f1_.init_he(rng);
    f2_.init_he(rng);
    const T damp = T(0.05);
    for (auto& v : f1_.weights.value.data) v *= damp;
    for (auto& v : f2_.weights.value.data) v *= damp;
    const std::size_t mn = arch_.map_size();
    for (std::size_t j = 0; j < std::min(mn, arch_.dense_hidden); ++j) {
      f1_.weights.value[j * mn + j] += T(1);
      f2_.weights.value[j * arch_.dense_hidden + j] += T(1);
    }
  }

  const ReCnnArch& arch() const { return arch_; }

  // (B, N, M, 1) -> (B, MN).
  Tensor<T> forward(const Tensor<T>& input, NnMode mode) {
    if (input.shape.size() != 4 || input.dim(1) != arch_.n_subcarriers ||
        input.dim(2) != arch_.n_slots || input.dim(3) != 1)
      throw config_error("recnn: input must be (B, N, M, 1)");
    const std::size_t b = input.dim(0);
    Tensor<T> x = input;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      x = convs_[i].forward(x);
      if (i + 1 < convs_.size()) {
        x = relus_[i].forward(x);
        if (i > 0) x = bns_[i - 1].forward(x, mode);
      }
    }
    // Residual subtraction: the conv stack estimates the noise.
    Tensor<T> denoised({b, arch_.map_size()});
    for (std::size_t i = 0; i < denoised.data.size(); ++i)
      denoised[i] = input.data[i] - x.data[i];
    Tensor<T> hidden = f1_.forward(denoised);
    return f2_.forward(hidden);
  }

  // grad_out: (B, MN). Returns the gradient wrt the input map; the skip path
  // and the conv path both contribute. With the conv stack frozen no
  // parameter upstream of the dense head can move, so backpropagation stops
  // at the residual join and the conv-path input contribution is skipped.
  Tensor<T> backward(const Tensor<T>& grad_out) {
    Tensor<T> g = f1_.backward(f2_.backward(grad_out));
    const std::size_t b = g.dim(0);
    if (!convs_.empty() && convs_.front().kernels.frozen) {
      Tensor<T> grad_skip({b, arch_.n_subcarriers, arch_.n_slots, 1});
      for (std::size_t i = 0; i < grad_skip.data.size(); ++i) grad_skip[i] = g.data[i];
      return grad_skip;
    }
    // d denoised / d input = I; d denoised / d conv_out = -I.
    Tensor<T> g_conv({b, arch_.n_subcarriers, arch_.n_slots, 1});
    for (std::size_t i = 0; i < g.data.size(); ++i) g_conv[i] = -g.data[i];
    for (std::size_t i = convs_.size(); i-- > 0;) {
      if (i + 1 < convs_.size()) {
        if (i > 0) g_conv = bns_[i - 1].backward(g_conv);
        g_conv = relus_[i].backward(g_conv);
      }
      g_conv = convs_[i].backward(g_conv);
    }
    Tensor<T> grad_in({b, arch_.n_subcarriers, arch_.n_slots, 1});
    for (std::size_t i = 0; i < grad_in.data.size(); ++i)
      grad_in[i] = g.data[i] + g_conv.data[i];
    return grad_in;
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& c : convs_) {
      out.push_back(&c.kernels);
      out.push_back(&c.bias);
    }
    for (auto& bn : bns_) {
      out.push_back(&bn.gamma);
      out.push_back(&bn.beta);
    }
    out.push_back(&f1_.weights);
    out.push_back(&f1_.bias);
    out.push_back(&f2_.weights);
    out.push_back(&f2_.bias);
    return out;
  }

  std::vector<Parameter<T>*> conv_parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& c : convs_) {
      out.push_back(&c.kernels);
      out.push_back(&c.bias);
    }
    for (auto& bn : bns_) {
      out.push_back(&bn.gamma);
      out.push_back(&bn.beta);
    }
    return out;
  }

  std::vector<Parameter<T>*> dense_parameters() {
    return {&f1_.weights, &f1_.bias, &f2_.weights, &f2_.bias};
  }

  // Marks all conv and BN parameters frozen and locks BN running statistics
  // to their inference values. Idempotent.
  void freeze_convolutional() {
    for (Parameter<T>* p : conv_parameters()) p->frozen = true;
    for (auto& bn : bns_) bn.lock_stats();
  }

  void zero_grad() {
    for (Parameter<T>* p : parameters()) p->zero_grad();
  }

  std::size_t parameter_count() {
    std::size_t total = 0;
    for (Parameter<T>* p : parameters()) total += p->value.numel();
    return total;
  }

  std::size_t trainable_parameter_count() {
    std::size_t total = 0;
    for (Parameter<T>* p : parameters())
      if (!p->frozen) total += p->value.numel();
    return total;
  }

  std::vector<BatchNorm<T>>& batch_norms() { return bns_; }
  std::vector<Conv2d<T>>& conv_layers() { return convs_; }

 private:
  ReCnnArch arch_;
  std::vector<Conv2d<T>> convs_;
  std::vector<BatchNorm<T>> bns_;
  std::vector<Relu<T>> relus_;
  Dense<T> f1_, f2_;
};

}  // namespace dnsp
