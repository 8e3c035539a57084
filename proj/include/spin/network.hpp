#pragma once

// Road segmentation network: feature extractor -> stacked hourglasses ->
// segmentation branch (with SPIN pyramid) and orientation branch, each with
// heads at 1/4, 1/2 and full resolution.

#include <spin/reasoning.hpp>

#include <array>

namespace spin {

constexpr int kOrientationClasses = 37;

struct NetworkConfig {
  int base_width = 64;
  int hourglass_depth = 4;
  int num_hourglasses = 2;
  int input_size = 256;
  int transpose_kernel = 4;
  int n_orientation_classes = kOrientationClasses;
  SpinVariant spin_variant = SpinVariant::kFull;
  int spin_m_div = 2;
  int spin_n_div = 4;
  int spin_s_div = 2;
  PyramidAggregation pyramid_aggregation = PyramidAggregation::kMean;
  bool spin_zero_init = false;

  // Multiple of the input extent required by the architecture.
  int required_divisor() const { return 4 * (1 << hourglass_depth); }

  void validate() const {
    if (base_width < 4) throw std::invalid_argument("base_width must be >= 4");
    if (hourglass_depth < 1) throw std::invalid_argument("hourglass_depth must be >= 1");
    if (num_hourglasses < 1) throw std::invalid_argument("num_hourglasses must be >= 1");
    if (n_orientation_classes != kOrientationClasses)
      throw std::invalid_argument("n_orientation_classes must be 37");
    if (transpose_kernel != 2 && transpose_kernel != 4) throw std::invalid_argument("transpose_kernel must be 2 or 4");
    if (input_size % required_divisor() != 0)
      throw std::invalid_argument("input_size " + std::to_string(input_size) + " must be divisible by " +
                                  std::to_string(required_divisor()));
  }

  SpinDims spin_dims() const { return SpinDims::from_channels(base_width, spin_m_div, spin_n_div, spin_s_div); }
};

// Index 0: full resolution, 1: half, 2: quarter.
template <typename T>
struct ModelOutput {
  std::array<Tensor<T>, 3> seg;     // N x 1 x sH x sW logits
  std::array<Tensor<T>, 3> orient;  // N x 37 x sH x sW logits
};

template <typename T>
class RoadNetwork {
public:
  RoadNetwork() = default;
  RoadNetwork(NetworkConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    Rng spin_rng(seed ^ 0x5a17c0deULL);
    const int c = cfg_.base_width, c2 = c / 2, c4 = c / 4;
    stem_ = ConvBnRelu<T>(3, c2, 7, 2, rng);
    res_a_ = ResidualBlock<T>(c2, c2, rng);
    res_b_ = ResidualBlock<T>(c2, c, rng);
    res_c_ = ResidualBlock<T>(c, c, rng);
    for (int i = 0; i < cfg_.num_hourglasses; ++i) hourglasses_.emplace_back(c, cfg_.hourglass_depth, rng);
    seg_ = Branch(c, c2, c4, 1, cfg_.transpose_kernel, rng);
    orient_ = Branch(c, c2, c4, cfg_.n_orientation_classes, cfg_.transpose_kernel, rng);
    if (cfg_.spin_variant != SpinVariant::kNone) {
      for (auto& b : pyramid_) {
        b = SpinParams<T>(cfg_.spin_dims(), cfg_.spin_variant, spin_rng);
        if (cfg_.spin_zero_init) b.zero_output_transforms();
      }
    }
  }

  const NetworkConfig& config() const { return cfg_; }

  // 3 x H x W (or batched) -> C x H/4 x W/4.
  Tensor<T> feature_extract(const Tensor<T>& image, NormMode mode) const {
    const MapDims d = detail::map_dims(image, "feature_extract");
    if (d.c != 3) throw ShapeError("feature_extract: expected 3 input channels, got " + std::to_string(d.c));
    if (d.h % 4 != 0 || d.w % 4 != 0)
      throw ShapeError("feature_extract: input " + std::to_string(d.h) + "x" + std::to_string(d.w) +
                       " must be divisible by 4");
    Tensor<T> x = res_a_(stem_(image, mode), mode);
    x = maxpool2d(x, 2, 2);
    return res_c_(res_b_(x, mode), mode);
  }

  Tensor<T> bottleneck(const Tensor<T>& features, NormMode mode) const {
    Tensor<T> x = features;
    for (const auto& hg : hourglasses_) x = hg(x, mode);
    return x;
  }

  // Logits at full, 1/2 and 1/4 resolution of the network input.
  std::array<Tensor<T>, 3> segmentation_branch(const Tensor<T>& f, NormMode mode) const {
    return seg_.run(f, mode, [this](const Tensor<T>& t) {
      return cfg_.spin_variant == SpinVariant::kNone ? t : spin_pyramid(t, pyramid_, cfg_.pyramid_aggregation);
    });
  }

  std::array<Tensor<T>, 3> orientation_branch(const Tensor<T>& f, NormMode mode) const {
    return orient_.run(f, mode, [](const Tensor<T>& t) { return t; });
  }

  ModelOutput<T> forward(const Tensor<T>& image, NormMode mode) const {
    const MapDims d = detail::map_dims(image, "forward");
    const int div = cfg_.required_divisor();
    if (d.h % div != 0 || d.w % div != 0)
      throw ShapeError("forward: input " + std::to_string(d.h) + "x" + std::to_string(d.w) +
                       " must be divisible by " + std::to_string(div));
    const Tensor<T> f = bottleneck(feature_extract(image, mode), mode);
    return {segmentation_branch(f, mode), orientation_branch(f, mode)};
  }

  ParamSet<T> parameters() const {
    ParamSet<T> ps;
    stem_.collect(ps, "stem");
    res_a_.collect(ps, "res_a");
    res_b_.collect(ps, "res_b");
    res_c_.collect(ps, "res_c");
    for (std::size_t i = 0; i < hourglasses_.size(); ++i) hourglasses_[i].collect(ps, "hourglass" + std::to_string(i));
    seg_.collect(ps, "seg");
    orient_.collect(ps, "orient");
    if (cfg_.spin_variant != SpinVariant::kNone)
      for (std::size_t i = 0; i < pyramid_.size(); ++i) pyramid_[i].collect(ps, "spin" + std::to_string(i));
    return ps;
  }

  std::array<SpinParams<T>, 3>& pyramid() { return pyramid_; }
  std::array<Tensor<T>, 3> head_weights(bool segmentation) const {
    const Branch& b = segmentation ? seg_ : orient_;
    return {b.head1.weight, b.head2.weight, b.head4.weight};
  }

private:
  struct Branch {
    ConvBnRelu<T> trunk;
    ConvTranspose2d<T> up2, up1;
    ConvBnRelu<T> refine2, refine1;
    Conv2d<T> head4, head2, head1;

    Branch() = default;
    Branch(int c, int c2, int c4, int classes, int tk, Rng& rng)
        : trunk(c, c, 3, 1, rng),
          up2(c, c2, tk, rng),
          up1(c2, c4, tk, rng),
          refine2(c2, c2, 3, 1, rng),
          refine1(c4, c4, 3, 1, rng),
          head4(c, classes, 1, 1, 0, true, rng),
          head2(c2, classes, 1, 1, 0, true, rng),
          head1(c4, classes, 1, 1, 0, true, rng) {}

    template <typename Reason>
    std::array<Tensor<T>, 3> run(const Tensor<T>& f, NormMode mode, Reason&& reason) const {
      const Tensor<T> t4 = reason(trunk(f, mode));
      const Tensor<T> t2 = refine2(relu(up2(t4)), mode);
      const Tensor<T> t1 = refine1(relu(up1(t2)), mode);
      return {head1(t1), head2(t2), head4(t4)};
    }

    void collect(ParamSet<T>& ps, const std::string& prefix) const {
      trunk.collect(ps, prefix + ".trunk");
      up2.collect(ps, prefix + ".up2");
      refine2.collect(ps, prefix + ".refine2");
      up1.collect(ps, prefix + ".up1");
      refine1.collect(ps, prefix + ".refine1");
      head4.collect(ps, prefix + ".head4");
      head2.collect(ps, prefix + ".head2");
      head1.collect(ps, prefix + ".head1");
    }
  };

  NetworkConfig cfg_;
  ConvBnRelu<T> stem_;
  ResidualBlock<T> res_a_, res_b_, res_c_;
  std::vector<Hourglass<T>> hourglasses_;
  Branch seg_, orient_;
  std::array<SpinParams<T>, 3> pyramid_;
};

template <typename T>
std::size_t count_parameters(const RoadNetwork<T>& model) {
  return model.parameters().count();
}

// Closed-form SPIN overhead of a network config (three pyramid blocks).
inline std::size_t spin_overhead(const NetworkConfig& cfg) {
  if (cfg.spin_variant == SpinVariant::kNone) return 0;
  return 3 * spin_param_count(cfg.spin_dims(), cfg.spin_variant);
}

}  // namespace spin
