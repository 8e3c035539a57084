#pragma once

// Parameterized building blocks: convolution wrappers, batch norm, the
// residual block and the recursive hourglass module.

#include <spin/nn_ops.hpp>

#include <random>
#include <string>
#include <vector>

namespace spin {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

// Flat registry of a model's learnable parameters and persistent buffers.
template <typename T>
struct ParamSet {
  std::vector<NamedTensor<T>> params;
  std::vector<NamedTensor<T>> buffers;

  void param(const std::string& name, const Tensor<T>& t) { params.push_back({name, t}); }
  void buffer(const std::string& name, const Tensor<T>& t) { buffers.push_back({name, t}); }

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.tensor);
    return out;
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.tensor.numel();
    return n;
  }
};

using Rng = std::mt19937_64;

template <typename T>
Tensor<T> he_normal(Shape shape, int fan_in, Rng& rng) {
  return Tensor<T>::randn(std::move(shape), rng, static_cast<T>(std::sqrt(2.0 / fan_in)), true);
}

template <typename T>
struct Conv2d {
  Tensor<T> weight, bias;
  ConvGeometry geom;

  Conv2d() = default;
  Conv2d(int cin, int cout, int k, int stride, int padding, bool with_bias, Rng& rng)
      : weight(he_normal<T>({cout, cin, k, k}, cin * k * k, rng)), geom{stride, padding} {
    if (with_bias) bias = Tensor<T>::zeros({cout}, true);
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, geom); }

  void zero() {
    std::fill(weight.data().begin(), weight.data().end(), T(0));
    if (bias.defined()) std::fill(bias.data().begin(), bias.data().end(), T(0));
  }

  void collect(ParamSet<T>& ps, const std::string& prefix) const {
    ps.param(prefix + ".weight", weight);
    if (bias.defined()) ps.param(prefix + ".bias", bias);
  }
};

template <typename T>
struct ConvTranspose2d {
  Tensor<T> weight, bias;

  ConvTranspose2d() = default;
  ConvTranspose2d(int cin, int cout, int k, Rng& rng)
      : weight(he_normal<T>({cin, cout, k, k}, cin * k * k / 4, rng)), bias(Tensor<T>::zeros({cout}, true)) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return conv_transpose2d(x, weight, bias, 2); }

  void collect(ParamSet<T>& ps, const std::string& prefix) const {
    ps.param(prefix + ".weight", weight);
    ps.param(prefix + ".bias", bias);
  }
};

template <typename T>
struct BatchNorm2d {
  Tensor<T> gamma, beta;
  mutable Tensor<T> running_mean, running_var;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int c)
      : gamma(Tensor<T>({c}, T(1), true)),
        beta(Tensor<T>::zeros({c}, true)),
        running_mean(Tensor<T>::zeros({c})),
        running_var(Tensor<T>({c}, T(1))) {}

  Tensor<T> operator()(const Tensor<T>& x, NormMode mode) const {
    return batchnorm2d(x, gamma, beta, running_mean, running_var, mode);
  }

  void collect(ParamSet<T>& ps, const std::string& prefix) const {
    ps.param(prefix + ".gamma", gamma);
    ps.param(prefix + ".beta", beta);
    ps.buffer(prefix + ".running_mean", running_mean);
    ps.buffer(prefix + ".running_var", running_var);
  }
};

// Conv -> BN -> ReLU.
template <typename T>
struct ConvBnRelu {
  Conv2d<T> conv;
  BatchNorm2d<T> bn;

  ConvBnRelu() = default;
  ConvBnRelu(int cin, int cout, int k, int stride, Rng& rng)
      : conv(cin, cout, k, stride, k / 2, false, rng), bn(cout) {}

  Tensor<T> operator()(const Tensor<T>& x, NormMode mode) const { return relu(bn(conv(x), mode)); }

  void collect(ParamSet<T>& ps, const std::string& prefix) const {
    conv.collect(ps, prefix + ".conv");
    bn.collect(ps, prefix + ".bn");
  }
};

// out = F(x) + skip(x), F = conv3x3-BN-ReLU-conv3x3-BN. The skip is the
// identity when widths match, otherwise a 1x1 projection with BN.
template <typename T>
struct ResidualBlock {
  int in_channels = 0, out_channels = 0;
  Conv2d<T> conv1, conv2;
  BatchNorm2d<T> bn1, bn2;
  bool project = false;
  Conv2d<T> proj;
  BatchNorm2d<T> proj_bn;

  ResidualBlock() = default;
  ResidualBlock(int cin, int cout, Rng& rng)
      : in_channels(cin),
        out_channels(cout),
        conv1(cin, cout, 3, 1, 1, false, rng),
        conv2(cout, cout, 3, 1, 1, false, rng),
        bn1(cout),
        bn2(cout),
        project(cin != cout) {
    if (project) {
      proj = Conv2d<T>(cin, cout, 1, 1, 0, false, rng);
      proj_bn = BatchNorm2d<T>(cout);
    }
  }

  Tensor<T> operator()(const Tensor<T>& x, NormMode mode) const {
    const MapDims d = detail::map_dims(x, "residual_forward");
    if (d.c != in_channels)
      throw ShapeError("residual_forward: input has " + std::to_string(d.c) + " channels, block expects " +
                       std::to_string(in_channels));
    const Tensor<T> f = bn2(conv2(relu(bn1(conv1(x), mode))), mode);
    const Tensor<T> skip = project ? proj_bn(proj(x), mode) : x;
    return add(f, skip);
  }

  void zero_convs() {
    conv1.zero();
    conv2.zero();
  }

  void collect(ParamSet<T>& ps, const std::string& prefix) const {
    conv1.collect(ps, prefix + ".conv1");
    bn1.collect(ps, prefix + ".bn1");
    conv2.collect(ps, prefix + ".conv2");
    bn2.collect(ps, prefix + ".bn2");
    if (project) {
      proj.collect(ps, prefix + ".proj");
      proj_bn.collect(ps, prefix + ".proj_bn");
    }
  }
};

// Recursive hourglass: at each level, an upper residual path at the current
// scale and a lower path (maxpool -> residual -> inner hourglass or residual
// -> residual -> bilinear x2) merged by addition.
template <typename T>
class Hourglass {
public:
  Hourglass() = default;
  Hourglass(int channels, int depth, Rng& rng) : channels_(channels), depth_(depth) {
    if (depth < 1) throw std::invalid_argument("hourglass depth must be >= 1");
    for (int l = 0; l < depth; ++l) {
      Level lv;
      lv.up = ResidualBlock<T>(channels, channels, rng);
      lv.low1 = ResidualBlock<T>(channels, channels, rng);
      lv.low3 = ResidualBlock<T>(channels, channels, rng);
      levels_.push_back(std::move(lv));
    }
    bottom_ = ResidualBlock<T>(channels, channels, rng);
  }

  int depth() const { return depth_; }
  int channels() const { return channels_; }

  Tensor<T> operator()(const Tensor<T>& x, NormMode mode) const {
    const MapDims d = detail::map_dims(x, "hourglass_forward");
    const int divisor = 1 << depth_;
    if (d.h % divisor != 0 || d.w % divisor != 0)
      throw ShapeError("hourglass_forward: spatial extents " + std::to_string(d.h) + "x" + std::to_string(d.w) +
                       " must be divisible by " + std::to_string(divisor) + " for depth " + std::to_string(depth_));
    if (d.c != channels_)
      throw ShapeError("hourglass_forward: expected " + std::to_string(channels_) + " channels, got " +
                       std::to_string(d.c));
    return level(0, x, mode);
  }

  void collect(ParamSet<T>& ps, const std::string& prefix) const {
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      const std::string p = prefix + ".level" + std::to_string(l);
      levels_[l].up.collect(ps, p + ".up");
      levels_[l].low1.collect(ps, p + ".low1");
      levels_[l].low3.collect(ps, p + ".low3");
    }
    bottom_.collect(ps, prefix + ".bottom");
  }

private:
  struct Level {
    ResidualBlock<T> up, low1, low3;
  };

  Tensor<T> level(int l, const Tensor<T>& x, NormMode mode) const {
    const Level& lv = levels_[static_cast<std::size_t>(l)];
    const Tensor<T> up = lv.up(x, mode);
    Tensor<T> low = lv.low1(maxpool2d(x, 2, 2), mode);
    low = (l + 1 < depth_) ? level(l + 1, low, mode) : bottom_(low, mode);
    low = lv.low3(low, mode);
    const MapDims d = detail::map_dims(x, "hourglass_forward");
    return add(up, bilinear_resize_to(low, d.h, d.w));
  }

  int channels_ = 0;
  int depth_ = 0;
  std::vector<Level> levels_;
  ResidualBlock<T> bottom_;
};

}  // namespace spin
