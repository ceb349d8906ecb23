#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dnsp/common.hpp"
#include "dnsp/rng.hpp"

namespace dnsp {

// Row-major dense tensor. Double precision for gradient checks, single
// precision for training.
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(numel(), T(0));
  }

  std::size_t numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<std::size_t>());
  }
  std::size_t dim(std::size_t i) const { return shape[i]; }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, std::vector<std::size_t> shape)
      : name(std::move(n)), value(std::move(shape)) {
    grad = Tensor<T>(value.shape);
  }
  void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using ConstMapRM = Eigen::Map<const MatRM<T>>;

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
  Tensor<T> m;
  Tensor<T> v;
  std::int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-4;

  static AdamState for_parameter(const Parameter<T>& p, double lr, double b1 = 0.9,
                                 double b2 = 0.999) {
    AdamState s;
    s.m = Tensor<T>(p.value.shape);
    s.v = Tensor<T>(p.value.shape);
    s.learning_rate = lr;
    s.beta1 = b1;
    s.beta2 = b2;
    return s;
  }
};

// Standard bias-corrected Adam update; frozen parameters are skipped.
template <typename T>
void adam_step(Parameter<T>& param, AdamState<T>& state) {
  if (param.frozen) return;
  state.step_count += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < param.value.data.size(); ++i) {
    const double g = static_cast<double>(param.grad[i]);
    const double m = b1 * static_cast<double>(state.m[i]) + (1.0 - b1) * g;
    const double v = b2 * static_cast<double>(state.v[i]) + (1.0 - b2) * g * g;
    state.m[i] = static_cast<T>(m);
    state.v[i] = static_cast<T>(v);
    const double m_hat = m / corr1;
    const double v_hat = v / corr2;
    param.value[i] = static_cast<T>(static_cast<double>(param.value[i]) -
                                    state.learning_rate * m_hat /
                                        (std::sqrt(v_hat) + state.epsilon));
  }
}

// ---------------------------------------------------------------------------
// Layers. Activations are (batch, H, W, C) row-major, so the channel axis is
// contiguous and the conv inner loops vectorize across channels.
// ---------------------------------------------------------------------------

namespace detail {

// One output position, C channels at a time with a compile-time-sized
// accumulator so it stays in registers across the tap loop.
template <typename T, std::size_t C>
inline void conv_point(const T* src, std::size_t pitch, std::size_t x, std::size_t c_in,
                       std::size_t c_out, const T* wts, std::size_t kernel, const T* bias,
                       T* out) {
  T acc[C];
  if (bias)
    for (std::size_t c = 0; c < C; ++c) acc[c] = bias[c];
  else
    for (std::size_t c = 0; c < C; ++c) acc[c] = T(0);
  const std::size_t run = kernel * c_in;
  for (std::size_t ky = 0; ky < kernel; ++ky) {
    const T* __restrict s = src + (ky * pitch + x) * c_in;
    const T* __restrict wrow = wts + ky * run * c_out;
    for (std::size_t t = 0; t < run; ++t) {
      const T v = s[t];
      const T* __restrict wr = wrow + t * c_out;
      for (std::size_t c = 0; c < C; ++c) acc[c] += v * wr[c];
    }
  }
  for (std::size_t c = 0; c < C; ++c) out[c] = acc[c];
}

// Direct "valid" convolution on a pre-padded image. `src` points at the
// receptive-field origin of output position (0, 0); `pitch` is the padded row
// width in positions. Every output element accumulates its taps in one fixed
// order, which keeps results independent of heap alignment.
template <typename T>
void conv_direct(const T* src, std::size_t pitch, std::size_t h, std::size_t w,
                 const T* wts, std::size_t kernel, std::size_t c_in, std::size_t c_out,
                 const T* bias, T* out) {
  for (std::size_t y = 0; y < h; ++y) {
    const T* row = src + y * pitch * c_in;
    for (std::size_t x = 0; x < w; ++x) {
      T* o = out + (y * w + x) * c_out;
      std::size_t c0 = 0;
      for (; c0 + 16 <= c_out; c0 += 16)
        conv_point<T, 16>(row, pitch, x, c_in, c_out, wts + c0,
                          kernel, bias ? bias + c0 : nullptr, o + c0);
      for (; c0 + 4 <= c_out; c0 += 4)
        conv_point<T, 4>(row, pitch, x, c_in, c_out, wts + c0,
                         kernel, bias ? bias + c0 : nullptr, o + c0);
      for (; c0 < c_out; ++c0)
        conv_point<T, 1>(row, pitch, x, c_in, c_out, wts + c0,
                         kernel, bias ? bias + c0 : nullptr, o + c0);
    }
  }
}

}  // namespace detail

template <typename T>
class Conv2d {
 public:
  Conv2d(std::string name, std::size_t kernel, std::size_t c_in, std::size_t c_out)
      : kernel_(kernel), c_in_(c_in), c_out_(c_out),
        kernels(name + ".kernels", {kernel, kernel, c_in, c_out}),
        bias(name + ".bias", {c_out}) {
    if (kernel % 2 == 0) throw config_error("conv2d: kernel size must be odd");
  }

  void init_he(Rng& rng) {
    const double fan_in = static_cast<double>(kernel_ * kernel_ * c_in_);
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : kernels.value.data)
      v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
    bias.value.fill(T(0));
  }

  // input: (B, H, W, c_in) -> (B, H, W, c_out), "same" zero padding, stride 1.
  Tensor<T> forward(const Tensor<T>& input) {
    check_input(input);
    const std::size_t b = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t pad = kernel_ / 2;
    const std::size_t hp = h + 2 * pad, wp = w + 2 * pad;
    pad_image(input.data.data(), b, h, w, c_in_, pad, padded_);
    Tensor<T> out({b, h, w, c_out_});
    for (std::size_t bi = 0; bi < b; ++bi)
      detail::conv_direct(padded_.data() + bi * hp * wp * c_in_, wp, h, w,
                          kernels.value.data.data(), kernel_, c_in_, c_out_,
                          bias.value.data.data(), out.data.data() + bi * h * w * c_out_);
    in_shape_ = input.shape;
    return out;
  }

  // Accumulates parameter gradients, returns the input gradient. Uses the
  // forward-pass padded input kept by the layer.
  Tensor<T> backward(const Tensor<T>& grad_out) {
    const std::size_t b = in_shape_[0], h = in_shape_[1], w = in_shape_[2];
    const std::size_t rows = b * h * w, run = kernel_ * c_in_;
    const std::size_t pad = kernel_ / 2;
    const std::size_t hp = h + 2 * pad, wp = w + 2 * pad;

    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < c_out_; ++c)
        bias.grad.data[c] += grad_out.data[r * c_out_ + c];

    // Kernel gradient: rank-1 updates per window position into the small
    // L1-resident gradient block, vectorized across output channels.
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const T* __restrict g = grad_out.data.data() + ((bi * h + y) * w + x) * c_out_;
          for (std::size_t ky = 0; ky < kernel_; ++ky) {
            const T* __restrict s =
                padded_.data() + ((bi * hp + y + ky) * wp + x) * c_in_;
            T* __restrict gw = kernels.grad.data.data() + ky * run * c_out_;
            for (std::size_t t = 0; t < run; ++t) {
              const T v = s[t];
              T* __restrict gwr = gw + t * c_out_;
              for (std::size_t c = 0; c < c_out_; ++c) gwr[c] += v * g[c];
            }
          }
        }

    // Input gradient is the same-padded convolution of grad_out with the
    // spatially flipped, channel-transposed kernel; reuses the forward kernel.
    if (wflip_.size() != kernels.value.numel()) wflip_.resize(kernels.value.numel());
    for (std::size_t ky = 0; ky < kernel_; ++ky)
      for (std::size_t kx = 0; kx < kernel_; ++kx)
        for (std::size_t ci = 0; ci < c_in_; ++ci)
          for (std::size_t co = 0; co < c_out_; ++co)
            wflip_[((ky * kernel_ + kx) * c_out_ + co) * c_in_ + ci] =
                kernels.value
                    .data[(((kernel_ - 1 - ky) * kernel_ + (kernel_ - 1 - kx)) * c_in_ + ci) *
                              c_out_ +
                          co];
    pad_image(grad_out.data.data(), b, h, w, c_out_, pad, gopad_);
    Tensor<T> grad_in(in_shape_);
    for (std::size_t bi = 0; bi < b; ++bi)
      detail::conv_direct(gopad_.data() + bi * hp * wp * c_out_, wp, h, w, wflip_.data(),
                          kernel_, c_out_, c_in_, static_cast<const T*>(nullptr),
                          grad_in.data.data() + bi * h * w * c_in_);
    return grad_in;
  }

  Parameter<T> kernels;
  Parameter<T> bias;

 private:
  void check_input(const Tensor<T>& input) const {
    if (input.shape.size() != 4 || input.dim(3) != c_in_)
      throw config_error("conv2d: input must be (B,H,W,C_in)");
  }

  // Zero-padded copy; the border stays zero across calls because only the
  // interior is rewritten.
  static void pad_image(const T* src, std::size_t b, std::size_t h, std::size_t w,
                        std::size_t ch, std::size_t pad, std::vector<T>& buf) {
    const std::size_t hp = h + 2 * pad, wp = w + 2 * pad;
    if (buf.size() != b * hp * wp * ch) buf.assign(b * hp * wp * ch, T(0));
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t y = 0; y < h; ++y)
        std::memcpy(buf.data() + ((bi * hp + y + pad) * wp + pad) * ch,
                    src + ((bi * h + y) * w) * ch, w * ch * sizeof(T));
  }

  std::size_t kernel_, c_in_, c_out_;
  std::vector<T> padded_, gopad_, wflip_;
  std::vector<std::size_t> in_shape_;
};

enum class NnMode { kTrain, kInfer };

template <typename T>
class BatchNorm {
 public:
  BatchNorm(std::string name, std::size_t channels)
      : channels_(channels),
        gamma(name + ".gamma", {channels}),
        beta(name + ".beta", {channels}),
        running_mean({channels}),
        running_var({channels}) {
    gamma.value.fill(T(1));
    running_var.fill(T(1));
  }

  // Normalizes per channel over batch x H x W. eps 1e-5, momentum 0.9.
  Tensor<T> forward(const Tensor<T>& input, NnMode mode) {
    if (input.shape.size() != 4 || input.dim(3) != channels_)
      throw config_error("batch_norm: input must be (B,H,W,C)");
    if (mode == NnMode::kTrain && input.dim(0) < 2)
      throw input_error("batch_norm: train mode needs batch >= 2");
    const std::size_t rows = input.numel() / channels_;
    Tensor<T> out(input.shape);
    mean_.assign(channels_, 0.0);
    inv_std_.assign(channels_, 0.0);

    if (mode == NnMode::kTrain && !stats_locked_) {
      std::vector<double> var(channels_, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* src = input.data.data() + r * channels_;
        for (std::size_t c = 0; c < channels_; ++c) mean_[c] += src[c];
      }
      for (double& m : mean_) m /= static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* src = input.data.data() + r * channels_;
        for (std::size_t c = 0; c < channels_; ++c) {
          const double d = src[c] - mean_[c];
          var[c] += d * d;
        }
      }
      for (double& v : var) v /= static_cast<double>(rows);
      for (std::size_t c = 0; c < channels_; ++c) {
        inv_std_[c] = 1.0 / std::sqrt(var[c] + kEps);
        running_mean[c] = static_cast<T>(kMomentum * static_cast<double>(running_mean[c]) +
                                         (1.0 - kMomentum) * mean_[c]);
        running_var[c] = static_cast<T>(kMomentum * static_cast<double>(running_var[c]) +
                                        (1.0 - kMomentum) * var[c]);
      }
      train_rows_ = rows;
      x_hat_ = Tensor<T>(input.shape);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* src = input.data.data() + r * channels_;
        T* xh = x_hat_.data.data() + r * channels_;
        T* dst = out.data.data() + r * channels_;
        for (std::size_t c = 0; c < channels_; ++c) {
          xh[c] = static_cast<T>((src[c] - mean_[c]) * inv_std_[c]);
          dst[c] = static_cast<T>(static_cast<double>(gamma.value[c]) * xh[c] +
                                  static_cast<double>(beta.value[c]));
        }
      }
      trained_with_batch_stats_ = true;
    } else {
      for (std::size_t c = 0; c < channels_; ++c) {
        mean_[c] = static_cast<double>(running_mean[c]);
        inv_std_[c] = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + kEps);
      }
      x_hat_ = Tensor<T>(input.shape);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* src = input.data.data() + r * channels_;
        T* xh = x_hat_.data.data() + r * channels_;
        T* dst = out.data.data() + r * channels_;
        for (std::size_t c = 0; c < channels_; ++c) {
          xh[c] = static_cast<T>((src[c] - mean_[c]) * inv_std_[c]);
          dst[c] = static_cast<T>(static_cast<double>(gamma.value[c]) * xh[c] +
                                  static_cast<double>(beta.value[c]));
        }
      }
      trained_with_batch_stats_ = false;
    }
    return out;
  }

  // Standard batch-norm backward (batch-statistics path). In the
  // frozen/inference path the statistics are constants and the gradient is a
  // plain affine backprop.
  Tensor<T> backward(const Tensor<T>& grad_out) {
    const std::size_t rows = grad_out.numel() / channels_;
    Tensor<T> grad_in(grad_out.shape);
    std::vector<double> sum_g(channels_, 0.0), sum_gx(channels_, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* go = grad_out.data.data() + r * channels_;
      const T* xh = x_hat_.data.data() + r * channels_;
      for (std::size_t c = 0; c < channels_; ++c) {
        sum_g[c] += go[c];
        sum_gx[c] += static_cast<double>(go[c]) * xh[c];
      }
    }
    for (std::size_t c = 0; c < channels_; ++c) {
      gamma.grad[c] = static_cast<T>(static_cast<double>(gamma.grad[c]) + sum_gx[c]);
      beta.grad[c] = static_cast<T>(static_cast<double>(beta.grad[c]) + sum_g[c]);
    }
    const double n = static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* go = grad_out.data.data() + r * channels_;
      const T* xh = x_hat_.data.data() + r * channels_;
      T* gi = grad_in.data.data() + r * channels_;
      for (std::size_t c = 0; c < channels_; ++c) {
        const double g = static_cast<double>(gamma.value[c]);
        if (trained_with_batch_stats_) {
          gi[c] = static_cast<T>(g * inv_std_[c] *
                                 (static_cast<double>(go[c]) - sum_g[c] / n -
                                  static_cast<double>(xh[c]) * sum_gx[c] / n));
        } else {
          gi[c] = static_cast<T>(g * inv_std_[c] * static_cast<double>(go[c]));
        }
      }
    }
    return grad_in;
  }

  // After freezing, train-mode forwards keep using the running statistics.
  void lock_stats() { stats_locked_ = true; }
  bool stats_locked() const { return stats_locked_; }

  Parameter<T> gamma;
  Parameter<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.9;

 private:
  std::size_t channels_;
  std::vector<double> mean_, inv_std_;
  Tensor<T> x_hat_;
  std::size_t train_rows_ = 0;
  bool trained_with_batch_stats_ = false;
  bool stats_locked_ = false;
};

template <typename T>
class Relu {
 public:
  Tensor<T> forward(const Tensor<T>& input) {
    mask_.assign(input.data.size(), 0);
    Tensor<T> out(input.shape);
    for (std::size_t i = 0; i < input.data.size(); ++i) {
      if (input[i] > T(0)) {
        out[i] = input[i];
        mask_[i] = 1;
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    Tensor<T> grad_in(grad_out.shape);
    for (std::size_t i = 0; i < grad_out.data.size(); ++i)
      if (mask_[i]) grad_in[i] = grad_out[i];
    return grad_in;
  }

 private:
  std::vector<std::uint8_t> mask_;
};

template <typename T>
class Dense {
 public:
  Dense(std::string name, std::size_t in, std::size_t out)
      : in_(in), out_(out),
        weights(name + ".weights", {out, in}),
        bias(name + ".bias", {out}) {}

  void init_he(Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in_));
    for (auto& v : weights.value.data)
      v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
    bias.value.fill(T(0));
  }

  // input: (B, in) -> (B, out); y = x W^T + b.
  Tensor<T> forward(const Tensor<T>& input) {
    if (input.shape.size() != 2 || input.dim(1) != in_)
      throw config_error("dense: input must be (B, in)");
    input_ = input;
    const std::size_t b = input.dim(0);
    Tensor<T> out({b, out_});
    ConstMapRM<T> x(input.data.data(), b, in_);
    ConstMapRM<T> w(weights.value.data.data(), out_, in_);
    MapRM<T> y(out.data.data(), b, out_);
    y.noalias() = x * w.transpose();
    y.rowwise() +=
        Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.value.data.data(), out_);
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    const std::size_t b = input_.dim(0);
    ConstMapRM<T> go(grad_out.data.data(), b, out_);
    ConstMapRM<T> x(input_.data.data(), b, in_);
    MapRM<T> gw(weights.grad.data.data(), out_, in_);
    gw.noalias() += go.transpose() * x;
    // Fixed-order scalar reduction, see the conv bias gradient.
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t c = 0; c < out_; ++c)
        bias.grad.data[c] += grad_out.data[r * out_ + c];
    Tensor<T> grad_in({b, in_});
    ConstMapRM<T> w(weights.value.data.data(), out_, in_);
    MapRM<T> gi(grad_in.data.data(), b, in_);
    gi.noalias() = go * w;
    return grad_in;
  }

  Parameter<T> weights;
  Parameter<T> bias;

 private:
  std::size_t in_, out_;
  Tensor<T> input_;
};

// Mean of squared differences over every element; grad = 2 (pred-label)/count.
template <typename T>
std::pair<double, Tensor<T>> mse_loss(const Tensor<T>& prediction, const Tensor<T>& label) {
  if (prediction.shape != label.shape) throw input_error("mse_loss: shape mismatch");
  const std::size_t count = prediction.numel();
  Tensor<T> grad(prediction.shape);
  double loss = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = static_cast<double>(prediction[i]) - static_cast<double>(label[i]);
    loss += d * d;
    grad[i] = static_cast<T>(2.0 * d / static_cast<double>(count));
  }
  return {loss / static_cast<double>(count), grad};
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification (double precision only).
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  bool passed = false;
};

// `loss` must run a full forward pass and return the scalar loss without
// touching gradients. Analytic gradients must already be stored in each
// parameter's grad field. Checks up to max_entries entries per parameter
// (deterministically chosen); pass 0 to check all entries.
inline GradCheckReport grad_check(const std::vector<Parameter<double>*>& params,
                                  const std::function<double()>& loss, double tolerance,
                                  std::size_t max_entries = 0, double step = 1e-5) {
  GradCheckReport report;
  Rng pick(2024);
  for (Parameter<double>* p : params) {
    const std::size_t n = p->value.data.size();
    std::vector<std::size_t> idx;
    if (max_entries == 0 || n <= max_entries) {
      idx.resize(n);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
    } else {
      for (std::size_t i = 0; i < max_entries; ++i) idx.push_back(pick.index(n));
    }
    for (std::size_t i : idx) {
      const double an = p->grad[i];
      auto rel_at = [&](double h) {
        const double saved = p->value[i];
        p->value[i] = saved + h;
        const double up = loss();
        p->value[i] = saved - h;
        const double down = loss();
        p->value[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        return std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      };
      // A wrong gradient disagrees at every step size; a ReLU kink inside the
      // difference stencil or roundoff disagrees only at particular ones, so
      // an entry over tolerance is retried at a finer and a coarser step.
      double rel = rel_at(step);
      if (rel > tolerance) rel = std::min(rel, rel_at(step * 0.1));
      if (rel > tolerance) rel = std::min(rel, rel_at(step * 10.0));
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_parameter = p->name;
      }
    }
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace dnsp
