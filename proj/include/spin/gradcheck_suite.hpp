#pragma once

// Registry of finite-difference checks over every differentiable op and the
// composed blocks, shared by the CLI and the test suite.

#include <spin/gradcheck.hpp>
#include <spin/losses.hpp>

namespace spin {

struct GradcheckCase {
  std::string name;
  double tolerance;
  std::function<GradcheckResult(std::uint64_t seed)> run;
};

namespace detail {

using D = double;
using TD = Tensor<double>;

inline GradcheckResult check(std::uint64_t seed, const GradFn& f, std::vector<TD> in) {
  GradcheckOptions opt;
  opt.seed = seed;
  return gradcheck(f, std::move(in), opt);
}

// Values in (0.05, 0.95), away from the clamp edges.
inline TD unit_interval(Shape s, Rng& rng) {
  return Tensor<double>::uniform(std::move(s), rng, 0.05, 0.95);
}

inline std::vector<TD> with_params(std::vector<TD> lead, const ParamSet<double>& ps) {
  for (const auto& p : ps.params) lead.push_back(p.tensor);
  return lead;
}

}  // namespace detail

inline std::vector<GradcheckCase> gradcheck_cases() {
  using detail::check;
  using detail::TD;
  using In = const std::vector<TD>&;
  constexpr double kTight = 1e-4, kLoose = 1e-3;
  std::vector<GradcheckCase> c;

  const auto unary = [&](const char* name, Shape s, std::function<TD(const TD&)> f) {
    c.push_back({name, kTight, [s, f](std::uint64_t seed) {
                   Rng rng(seed);
                   return check(seed, [f](In x) { return f(x[0]); }, {gradcheck_input(s, rng)});
                 }});
  };
  const auto binary = [&](const char* name, Shape a, Shape b, std::function<TD(const TD&, const TD&)> f) {
    c.push_back({name, kTight, [a, b, f](std::uint64_t seed) {
                   Rng rng(seed);
                   return check(seed, [f](In x) { return f(x[0], x[1]); }, {gradcheck_input(a, rng), gradcheck_input(b, rng)});
                 }});
  };

  binary("add", {3, 4}, {3, 4}, [](const TD& a, const TD& b) { return add(a, b); });
  binary("sub", {3, 4}, {3, 4}, [](const TD& a, const TD& b) { return sub(a, b); });
  binary("mul", {3, 4}, {3, 4}, [](const TD& a, const TD& b) { return mul(a, b); });
  binary("matmul", {3, 4}, {4, 2}, [](const TD& a, const TD& b) { return matmul(a, b); });
  binary("scale_rows", {3, 4}, {3}, [](const TD& a, const TD& v) { return scale_rows(a, v); });
  binary("add_row_bias", {3, 4}, {4}, [](const TD& a, const TD& b) { return add_row_bias(a, b); });
  unary("scale", {2, 3}, [](const TD& a) { return scale(a, 0.7); });
  unary("add_scalar", {2, 3}, [](const TD& a) { return add_scalar(a, 0.3); });
  unary("relu", {4, 5}, [](const TD& a) { return relu(a); });
  unary("sigmoid", {4, 5}, [](const TD& a) { return sigmoid(a); });
  unary("sum", {3, 3}, [](const TD& a) { return sum(a); });
  unary("mean", {3, 3}, [](const TD& a) { return mean(a); });
  unary("transpose", {3, 5}, [](const TD& a) { return transpose(a); });
  unary("reshape", {2, 6}, [](const TD& a) { return reshape(a, {3, 4}); });
  unary("softmax_rows", {3, 5}, [](const TD& a) { return softmax_rows(a); });
  unary("select_stack", {2, 2, 3, 3}, [](const TD& a) { return stack(std::vector<TD>{select(a, 1), select(a, 0)}); });

  c.push_back({"conv2d_k3", kTight, [](std::uint64_t seed) {
                 Rng rng(seed);
                 return check(seed, [](In x) { return conv2d(x[0], x[1], x[2], {1, 1}); },
                              {gradcheck_input({2, 5, 5}, rng), gradcheck_input({3, 2, 3, 3}, rng), gradcheck_input({3}, rng)});
               }});
  c.push_back({"conv2d_k1", kTight, [](std::uint64_t seed) {
                 Rng rng(seed);
                 return check(seed, [](In x) { return conv2d(x[0], x[1], x[2], {1, 0}); },
                              {gradcheck_input({2, 3, 4, 4}, rng), gradcheck_input({3, 3, 1, 1}, rng), gradcheck_input({3}, rng)});
               }});
  c.push_back({"conv2d_k7_s2", kTight, [](std::uint64_t seed) {
                 Rng rng(seed);
                 return check(seed, [](In x) { return conv2d(x[0], x[1], TD(), {2, 3}); },
                              {gradcheck_input({2, 8, 8}, rng), gradcheck_input({2, 2, 7, 7}, rng)});
               }});
  for (int k : {2, 4}) {
    c.push_back({"conv_transpose2d_k" + std::to_string(k), kTight, [k](std::uint64_t seed) {
                   Rng rng(seed);
                   return check(seed, [](In x) { return conv_transpose2d(x[0], x[1], x[2], 2); },
                                {gradcheck_input({2, 3, 3}, rng), gradcheck_input({2, 3, k, k}, rng), gradcheck_input({3}, rng)});
                 }});
  }
  unary("maxpool2d", {2, 4, 4}, [](const TD& a) { return maxpool2d(a, 2, 2); });
  unary("global_avg_pool", {2, 4, 4}, [](const TD& a) { return global_avg_pool(a); });
  unary("bilinear_up2", {2, 4, 4}, [](const TD& a) { return bilinear_resize(a, 2.0); });
  unary("bilinear_down2", {2, 4, 4}, [](const TD& a) { return bilinear_resize(a, 0.5); });

  c.push_back({"batchnorm2d_train", kLoose, [](std::uint64_t seed) {
                 Rng rng(seed);
                 auto rm = TD::zeros({3});
                 auto rv = TD({3}, 1.0);
                 return check(seed,
                              [rm, rv](In x) mutable { return batchnorm2d(x[0], x[1], x[2], rm, rv, NormMode::kTrain); },
                              {gradcheck_input({2, 3, 3, 3}, rng), gradcheck_input({3}, rng), gradcheck_input({3}, rng)});
               }});
  c.push_back({"cross_entropy", kTight, [](std::uint64_t seed) {
                 Rng rng(seed);
                 std::vector<int> labels(2 * 3 * 3);
                 for (auto& l : labels) l = std::uniform_int_distribution<int>(0, 4)(rng);
                 return check(seed, [labels](In x) { return cross_entropy_channels(x[0], labels); },
                              {gradcheck_input({2, 5, 3, 3}, rng)});
               }});
  c.push_back({"soft_iou", kTight, [](std::uint64_t seed) {
                 Rng rng(seed);
                 std::vector<double> gt(16);
                 for (auto& g : gt) g = std::bernoulli_distribution(0.4)(rng) ? 1.0 : 0.0;
                 gt[0] = 1.0;
                 return check(seed, [gt](In x) { return soft_iou(x[0], gt); }, {detail::unit_interval({1, 4, 4}, rng)});
               }});

  // SPIN pieces at C=4, L=16, M=N=S=2.
  const SpinDims dims{4, 2, 2, 2};
  c.push_back({"spatial_similarity", kTight, [dims](std::uint64_t seed) {
                 Rng rng(seed);
                 SpinParams<double> p(dims, SpinVariant::kSpatial, rng);
                 ParamSet<double> ps;
                 p.phi_s.collect(ps, "phi_s");
                 p.lambda.collect(ps, "lambda");
                 return check(seed, [p](In x) { return spatial_similarity(x[0], p); },
                              detail::with_params({gradcheck_input({16, 4}, rng)}, ps));
               }});
  c.push_back({"spatial_reason", kTight, [](std::uint64_t seed) {
                 Rng rng(seed);
                 Conv2d<double> w(4, 4, 1, 1, 0, true, rng);
                 return check(seed,
                              [w](In x) {
                                Conv2d<double> ws = w;
                                ws.weight = x[2];
                                return spatial_reason(x[0], softmax_rows(x[1]), ws);
                              },
                              {gradcheck_input({16, 4}, rng), gradcheck_input({16, 16}, rng), w.weight});
               }});
  c.push_back({"interaction_reason", kTight, [](std::uint64_t seed) {
                 Rng rng(seed);
                 return check(seed, [](In x) { return interaction_reason(x[0], x[1], x[2]); },
                              {gradcheck_input({3, 2}, rng), gradcheck_input({3, 3}, rng), gradcheck_input({2, 2}, rng)});
               }});
  c.push_back({"reverse_project", kTight, [](std::uint64_t seed) {
                 Rng rng(seed);
                 Conv2d<double> back(2, 4, 1, 1, 0, true, rng);
                 return check(seed,
                              [back](In x) {
                                Conv2d<double> b = back;
                                b.weight = x[2];
                                return reverse_project(x[0], x[1], b);
                              },
                              {gradcheck_input({2, 2}, rng), gradcheck_input({16, 2}, rng), back.weight});
               }});
  c.push_back({"spin_forward", kTight, [dims](std::uint64_t seed) {
                 Rng rng(seed);
                 SpinParams<double> p(dims, SpinVariant::kFull, rng);
                 ParamSet<double> ps;
                 p.collect(ps, "spin");
                 return check(seed, [p](In x) { return spin_forward(x[0], p); },
                              detail::with_params({gradcheck_input({4, 4, 4}, rng)}, ps));
               }});
  c.push_back({"spin_pyramid", kLoose, [dims](std::uint64_t seed) {
                 Rng rng(seed);
                 std::array<SpinParams<double>, 3> blocks;
                 for (auto& b : blocks) b = SpinParams<double>(dims, SpinVariant::kFull, rng);
                 ParamSet<double> ps;
                 blocks[1].collect(ps, "spin1");
                 return check(seed, [blocks](In x) { return spin_pyramid(x[0], blocks); },
                              detail::with_params({gradcheck_input({4, 8, 8}, rng)}, ps));
               }});

  c.push_back({"residual_block", kLoose, [](std::uint64_t seed) {
                 Rng rng(seed);
                 ResidualBlock<double> block(4, 4, rng);
                 ParamSet<double> ps;
                 block.collect(ps, "res");
                 return check(seed, [block](In x) { return block(x[0], NormMode::kTrain); },
                              detail::with_params({gradcheck_input({2, 4, 6, 6}, rng)}, ps));
               }});
  c.push_back({"hourglass", kLoose, [](std::uint64_t seed) {
                 Rng rng(seed);
                 Hourglass<double> hg(4, 2, rng);
                 return check(seed, [hg](In x) { return hg(x[0], NormMode::kTrain); }, {gradcheck_input({2, 4, 8, 8}, rng)});
               }});
  c.push_back({"network_loss", kLoose, [](std::uint64_t seed) {
                 NetworkConfig cfg;
                 cfg.base_width = 8;
                 cfg.hourglass_depth = 1;
                 cfg.num_hourglasses = 1;
                 cfg.input_size = 16;
                 auto model = std::make_shared<RoadNetwork<double>>(cfg, seed);
                 Rng rng(seed + 1);
                 Targets<double> tgt;
                 for (int s = 0; s < 3; ++s) {
                   const int n = 2 * (16 >> s) * (16 >> s);
                   for (int i = 0; i < n; ++i) {
                     tgt.mask[static_cast<std::size_t>(s)].push_back(std::bernoulli_distribution(0.3)(rng) ? 1.0 : 0.0);
                     tgt.orient[static_cast<std::size_t>(s)].push_back(std::uniform_int_distribution<int>(0, 36)(rng));
                   }
                 }
                 const auto heads = model->head_weights(true);
                 const auto orient_heads = model->head_weights(false);
                 return check(seed,
                              [model, tgt](In x) { return total_loss(model->forward(x[0], NormMode::kTrain), tgt).first; },
                              {Tensor<double>::uniform({2, 3, 16, 16}, rng, 0.0, 1.0), heads[0], orient_heads[2]});
               }});
  return c;
}

}  // namespace spin
