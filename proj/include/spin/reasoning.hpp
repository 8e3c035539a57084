#pragma once

// Spatial and interaction-space graph reasoning (SPIN) and its multi-scale
// pyramid.
//
// Feature-matrix operations use the L x C layout (one row per pixel, L = H*W).
// A 1x1 convolution C -> M acts on such a matrix as X * W^T + b.
//
//   spatial:      A_S = softmax_rows(P diag(lambda) P^T),  P = ReLU(phi_S(X))
//                 X_S = ReLU(W_S(A_S X))
//   interaction:  V = theta(X)^T phi_I(X)          (N x S)
//                 Z = ((I - A_I) V) W_I^T          (N x S)
//                 X_I = phi'_I(theta(X) Z)         (L x C)
//   fusion:       ReLU(X_S + X + X_I)

#include <spin/layers.hpp>

#include <array>

namespace spin {

enum class SpinVariant { kNone, kSpatial, kInteraction, kFull };

inline const char* to_string(SpinVariant v) {
  switch (v) {
    case SpinVariant::kNone: return "none";
    case SpinVariant::kSpatial: return "spatial";
    case SpinVariant::kInteraction: return "interaction";
    case SpinVariant::kFull: return "full";
  }
  return "?";
}

inline SpinVariant parse_spin_variant(const std::string& s) {
  if (s == "none") return SpinVariant::kNone;
  if (s == "spatial") return SpinVariant::kSpatial;
  if (s == "interaction") return SpinVariant::kInteraction;
  if (s == "full") return SpinVariant::kFull;
  throw std::invalid_argument("unknown spin variant '" + s + "' (none|spatial|interaction|full)");
}

inline bool uses_spatial(SpinVariant v) { return v == SpinVariant::kSpatial || v == SpinVariant::kFull; }
inline bool uses_interaction(SpinVariant v) { return v == SpinVariant::kInteraction || v == SpinVariant::kFull; }

struct SpinDims {
  int channels = 0;  // C
  int m = 0;         // intermediate width of the spatial similarity
  int nodes = 0;     // N
  int states = 0;    // S

  // M = C/2, N = C/4, S = C/2, each at least 1.
  static SpinDims from_channels(int c, int m_div = 2, int n_div = 4, int s_div = 2) {
    return {c, std::max(1, c / m_div), std::max(1, c / n_div), std::max(1, c / s_div)};
  }
};

// Closed-form learnable parameter count of one SPIN block.
inline std::size_t spin_param_count(const SpinDims& d, SpinVariant v = SpinVariant::kFull) {
  const std::size_t c = static_cast<std::size_t>(d.channels), m = static_cast<std::size_t>(d.m),
                    n = static_cast<std::size_t>(d.nodes), s = static_cast<std::size_t>(d.states);
  std::size_t total = 0;
  if (uses_spatial(v)) total += (c * m + m) /* phi_S */ + (c * m + m) /* Lambda */ + (c * c + c) /* W_S */;
  if (uses_interaction(v))
    total += (c * n + n) /* theta */ + (c * s + s) /* phi_I */ + n * n /* A_I */ + s * s /* W_I */ +
             (s * c + c) /* phi'_I */;
  return total;
}

template <typename T>
struct SpinParams {
  SpinDims dims;
  SpinVariant variant = SpinVariant::kFull;
  Conv2d<T> phi_s;       // C -> M, followed by ReLU
  Conv2d<T> lambda;      // C -> M on the pooled feature, gives diag(Lambda)
  Conv2d<T> w_s;         // C -> C
  Conv2d<T> theta;       // C -> N
  Conv2d<T> phi_i;       // C -> S
  Tensor<T> a_i;         // N x N node adjacency
  Tensor<T> w_i;         // S x S state update (1-D conv, kernel 1, no bias)
  Conv2d<T> phi_i_back;  // S -> C

  SpinParams() = default;
  SpinParams(SpinDims d, SpinVariant v, Rng& rng) : dims(d), variant(v) {
    if (uses_spatial(v)) {
      phi_s = Conv2d<T>(d.channels, d.m, 1, 1, 0, true, rng);
      lambda = Conv2d<T>(d.channels, d.m, 1, 1, 0, true, rng);
      w_s = Conv2d<T>(d.channels, d.channels, 1, 1, 0, true, rng);
    }
    if (uses_interaction(v)) {
      theta = Conv2d<T>(d.channels, d.nodes, 1, 1, 0, true, rng);
      phi_i = Conv2d<T>(d.channels, d.states, 1, 1, 0, true, rng);
      a_i = Tensor<T>::randn({d.nodes, d.nodes}, rng, static_cast<T>(1.0 / d.nodes), true);
      w_i = he_normal<T>({d.states, d.states}, d.states, rng);
      phi_i_back = Conv2d<T>(d.states, d.channels, 1, 1, 0, true, rng);
    }
  }

  // Zeroes W_S and phi'_I so the block starts as the identity on
  // non-negative input.
  void zero_output_transforms() {
    if (uses_spatial(variant)) w_s.zero();
    if (uses_interaction(variant)) phi_i_back.zero();
  }

  void collect(ParamSet<T>& ps, const std::string& prefix) const {
    if (uses_spatial(variant)) {
      phi_s.collect(ps, prefix + ".phi_s");
      lambda.collect(ps, prefix + ".lambda");
      w_s.collect(ps, prefix + ".w_s");
    }
    if (uses_interaction(variant)) {
      theta.collect(ps, prefix + ".theta");
      phi_i.collect(ps, prefix + ".phi_i");
      ps.param(prefix + ".a_i", a_i);
      ps.param(prefix + ".w_i", w_i);
      phi_i_back.collect(ps, prefix + ".phi_i_back");
    }
  }
};

// 1x1 convolution applied to an L x C feature matrix: X * W^T + b.
template <typename T>
Tensor<T> pointwise(const Tensor<T>& x, const Conv2d<T>& conv) {
  const int cout = conv.weight.dim(0), cin = conv.weight.dim(1);
  if (x.rank() != 2 || x.dim(1) != cin)
    throw ShapeError("pointwise: feature matrix " + to_string(x.shape()) + " does not have " + std::to_string(cin) +
                     " columns");
  Tensor<T> y = matmul(x, transpose(reshape(conv.weight, {cout, cin})));
  if (conv.bias.defined()) y = add_row_bias(y, conv.bias);
  return y;
}

// C x H x W -> L x C.
template <typename T>
Tensor<T> to_feature_matrix(const Tensor<T>& x) {
  if (x.rank() != 3) throw ShapeError("to_feature_matrix: expected C x H x W, got " + to_string(x.shape()));
  return transpose(reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}));
}

// L x C -> C x H x W.
template <typename T>
Tensor<T> from_feature_matrix(const Tensor<T>& x, int h, int w) {
  if (x.rank() != 2 || x.dim(0) != h * w)
    throw ShapeError("from_feature_matrix: " + to_string(x.shape()) + " is not " + std::to_string(h * w) + " x C");
  return reshape(transpose(x), {x.dim(1), h, w});
}

// A_S = softmax_rows(P diag(lambda) P^T), P = ReLU(phi_S(X)),
// lambda = Lambda(mean over rows of X). Returns an L x L row-stochastic matrix.
template <typename T>
Tensor<T> spatial_similarity(const Tensor<T>& x, const SpinParams<T>& p) {
  if (x.rank() != 2 || x.dim(1) != p.dims.channels)
    throw ShapeError("spatial_similarity: expected L x " + std::to_string(p.dims.channels) + ", got " +
                     to_string(x.shape()));
  const int l = x.dim(0);
  const Tensor<T> proj = relu(pointwise(x, p.phi_s));                                   // L x M
  const Tensor<T> pooled = matmul(Tensor<T>({1, l}, T(1) / static_cast<T>(l)), x);     // 1 x C
  const Tensor<T> diag = reshape(pointwise(pooled, p.lambda), {p.dims.m});              // M
  const Tensor<T> scaled = scale_rows(transpose(proj), diag);                           // M x L
  return softmax_rows(matmul(proj, scaled));
}

// X_S = ReLU(W_S(A_S X)).
template <typename T>
Tensor<T> spatial_reason(const Tensor<T>& x, const Tensor<T>& a_s, const Conv2d<T>& w_s) {
  if (a_s.rank() != 2 || a_s.dim(0) != a_s.dim(1) || a_s.dim(1) != x.dim(0))
    throw ShapeError("spatial_reason: similarity " + to_string(a_s.shape()) + " incompatible with features " +
                     to_string(x.shape()));
  return relu(pointwise(matmul(a_s, x), w_s));
}

template <typename T>
struct InteractionProjection {
  Tensor<T> theta;  // L x N, reused by the reverse projection
  Tensor<T> v;      // N x S
};

// V_I = theta(X)^T phi_I(X).
template <typename T>
InteractionProjection<T> project_interaction(const Tensor<T>& x, const Conv2d<T>& theta, const Conv2d<T>& phi_i) {
  Tensor<T> th = pointwise(x, theta);
  Tensor<T> ph = pointwise(x, phi_i);
  Tensor<T> v = matmul(transpose(th), ph);
  return {th, v};
}

// Z_I = ((I - A_I) V_I) W_I^T.
template <typename T>
Tensor<T> interaction_reason(const Tensor<T>& v, const Tensor<T>& a_i, const Tensor<T>& w_i) {
  if (a_i.rank() != 2 || a_i.dim(0) != a_i.dim(1) || a_i.dim(1) != v.dim(0))
    throw ShapeError("interaction_reason: adjacency " + to_string(a_i.shape()) + " incompatible with " +
                     to_string(v.shape()));
  if (w_i.rank() != 2 || w_i.dim(0) != w_i.dim(1) || w_i.dim(1) != v.dim(1))
    throw ShapeError("interaction_reason: state weight " + to_string(w_i.shape()) + " incompatible with " +
                     to_string(v.shape()));
  return matmul(sub(v, matmul(a_i, v)), transpose(w_i));
}

// Y_I = theta(X) Z_I (L x S), X_I = phi'_I(Y_I) (L x C).
template <typename T>
Tensor<T> reverse_project(const Tensor<T>& z, const Tensor<T>& theta_x, const Conv2d<T>& phi_back) {
  if (theta_x.rank() != 2 || z.rank() != 2 || theta_x.dim(1) != z.dim(0))
    throw ShapeError("reverse_project: projection " + to_string(theta_x.shape()) + " incompatible with " +
                     to_string(z.shape()));
  return pointwise(matmul(theta_x, z), phi_back);
}

// Reasoning on one L x C feature matrix: ReLU(X_S + X + X_I), keeping only
// the branches the variant enables.
template <typename T>
Tensor<T> spin_features(const Tensor<T>& x, const SpinParams<T>& p) {
  if (p.variant == SpinVariant::kNone) return x;
  std::vector<Tensor<T>> terms;
  if (uses_spatial(p.variant)) terms.push_back(spatial_reason(x, spatial_similarity(x, p), p.w_s));
  terms.push_back(x);
  if (uses_interaction(p.variant)) {
    const auto proj = project_interaction(x, p.theta, p.phi_i);
    terms.push_back(reverse_project(interaction_reason(proj.v, p.a_i, p.w_i), proj.theta, p.phi_i_back));
  }
  return relu(add_n(terms));
}

// Shape-preserving SPIN block on C x H x W or N x C x H x W maps.
template <typename T>
Tensor<T> spin_forward(const Tensor<T>& x, const SpinParams<T>& p) {
  const MapDims d = detail::map_dims(x, "spin_forward");
  if (d.c != p.dims.channels)
    throw ShapeError("spin_forward: input has " + std::to_string(d.c) + " channels, block expects " +
                     std::to_string(p.dims.channels));
  if (p.variant == SpinVariant::kNone) return x;
  if (!d.batched) return from_feature_matrix(spin_features(to_feature_matrix(x), p), d.h, d.w);
  std::vector<Tensor<T>> outs;
  outs.reserve(static_cast<std::size_t>(d.n));
  for (int n = 0; n < d.n; ++n)
    outs.push_back(from_feature_matrix(spin_features(to_feature_matrix(select(x, n)), p), d.h, d.w));
  return stack(outs);
}

enum class PyramidAggregation { kMean, kSum };

// Multi-scale SPIN at scales 1, 1/2 and 1/4 with independent parameters.
// Each branch contributes a residual update at full resolution,
//   delta_1 = spin(X) - X,  delta_k = up_k(spin(down_k X) - down_k X),
// and out = ReLU(X + mean_k delta_k) (or the sum under kSum). The mean form
// equals ReLU(mean_k(X + delta_k)).
template <typename T>
Tensor<T> spin_pyramid(const Tensor<T>& x, const std::array<SpinParams<T>, 3>& blocks,
                       PyramidAggregation agg = PyramidAggregation::kMean) {
  const MapDims d = detail::map_dims(x, "spin_pyramid");
  if (d.h % 4 != 0 || d.w % 4 != 0)
    throw ShapeError("spin_pyramid: spatial extents " + std::to_string(d.h) + "x" + std::to_string(d.w) +
                     " must be divisible by 4");
  std::vector<Tensor<T>> deltas;
  deltas.push_back(sub(spin_forward(x, blocks[0]), x));
  for (int k = 1; k < 3; ++k) {
    const int f = 1 << k;
    const Tensor<T> small = bilinear_resize_to(x, d.h / f, d.w / f);
    const Tensor<T> delta = sub(spin_forward(small, blocks[static_cast<std::size_t>(k)]), small);
    deltas.push_back(bilinear_resize_to(delta, d.h, d.w));
  }
  Tensor<T> update = add_n(deltas);
  if (agg == PyramidAggregation::kMean) update = scale(update, T(1) / T(3));
  return relu(add(x, update));
}

}  // namespace spin
