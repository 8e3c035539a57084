#include "oracles.hpp"

#include <map>

using namespace spin;
using TD = Tensor<double>;
using TF = Tensor<float>;

namespace {

NetworkConfig toy(int width = 8, int depth = 2, int input = 32) {
  NetworkConfig c;
  c.base_width = width;
  c.hourglass_depth = depth;
  c.input_size = input;
  return c;
}

template <typename T>
Tensor<T>* find_param(ParamSet<T>& ps, const std::string& name) {
  for (auto& p : ps.params)
    if (p.name == name) return &p.tensor;
  return nullptr;
}

}  // namespace

TEST(Network, OutputShapesAtSeveralSizes) {
  for (int size : {64, 128, 256}) {
    NetworkConfig c = toy(8, 4, size);
    RoadNetwork<float> net(c, 1);
    Rng rng(static_cast<std::uint64_t>(size));
    const ModelOutput<float> out = net.forward(TF::uniform({1, 3, size, size}, rng, 0.f, 1.f), NormMode::kEval);
    for (int s = 0; s < 3; ++s) {
      const int e = size >> s;
      EXPECT_EQ(out.seg[static_cast<std::size_t>(s)].shape(), (Shape{1, 1, e, e}));
      EXPECT_EQ(out.orient[static_cast<std::size_t>(s)].shape(), (Shape{1, 37, e, e}));
    }
  }
}

TEST(Network, FeatureExtractAndBottleneckContracts) {
  RoadNetwork<float> net(toy(8, 2, 64), 2);
  EXPECT_EQ(net.feature_extract(TF({3, 64, 64}, 0.5f), NormMode::kEval).shape(), (Shape{8, 16, 16}));
  EXPECT_EQ(net.bottleneck(TF({8, 16, 16}, 0.5f), NormMode::kEval).shape(), (Shape{8, 16, 16}));
  EXPECT_THROW(net.feature_extract(TF({3, 250, 250}), NormMode::kEval), ShapeError);
  EXPECT_THROW(net.forward(TF({3, 40, 40}), NormMode::kEval), ShapeError);

  NetworkConfig one = toy(8, 2, 64);
  one.num_hourglasses = 1;
  RoadNetwork<float> single(one, 2);
  EXPECT_EQ(single.forward(TF({3, 64, 64}, 0.5f), NormMode::kEval).seg[0].shape(), (Shape{1, 64, 64}));
}

TEST(Network, RejectsInvalidConfig) {
  NetworkConfig c = toy();
  c.input_size = 40;
  EXPECT_THROW(RoadNetwork<float>(c, 1), std::invalid_argument);
  c = toy();
  c.n_orientation_classes = 36;
  EXPECT_THROW(RoadNetwork<float>(c, 1), std::invalid_argument);
}

TEST(Network, OrientationSoftmaxSumsToOne) {
  RoadNetwork<float> net(toy(), 3);
  Rng rng(3);
  const auto out = net.forward(TF::uniform({1, 3, 32, 32}, rng, 0.f, 1.f), NormMode::kEval);
  const TF& o = out.orient[1];
  const int plane = 16 * 16;
  for (int i = 0; i < plane; ++i) {
    double mx = -1e30, s = 0;
    for (int c = 0; c < 37; ++c) mx = std::max(mx, static_cast<double>(o[static_cast<std::size_t>(c * plane + i)]));
    for (int c = 0; c < 37; ++c) s += std::exp(o[static_cast<std::size_t>(c * plane + i)] - mx);
    double total = 0;
    for (int c = 0; c < 37; ++c) total += std::exp(o[static_cast<std::size_t>(c * plane + i)] - mx) / s;
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Network, ForwardIsDeterministic) {
  RoadNetwork<float> a(toy(), 4), b(toy(), 4);
  Rng rng(4);
  const TF x = TF::uniform({2, 3, 32, 32}, rng, 0.f, 1.f);
  const auto o1 = a.forward(x, NormMode::kEval), o2 = a.forward(x, NormMode::kEval), o3 = b.forward(x, NormMode::kEval);
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(o1.seg[s].data(), o2.seg[s].data());
    EXPECT_EQ(o1.orient[s].data(), o2.orient[s].data());
    EXPECT_EQ(o1.seg[s].data(), o3.seg[s].data());
  }
}

TEST(Network, ZeroClassifierGivesBiasOnlyLogits) {
  RoadNetwork<float> net(toy(), 5);
  ParamSet<float> ps = net.parameters();
  for (const char* head : {"seg.head1", "seg.head2", "seg.head4"}) {
    auto* w = find_param(ps, std::string(head) + ".weight");
    auto* b = find_param(ps, std::string(head) + ".bias");
    ASSERT_TRUE(w && b);
    std::fill(w->data().begin(), w->data().end(), 0.f);
    (*b)[0] = 0.375f;
  }
  Rng rng(5);
  const auto out = net.forward(TF::uniform({1, 3, 32, 32}, rng, 0.f, 1.f), NormMode::kEval);
  for (const auto& s : out.seg)
    for (float v : s.data()) EXPECT_EQ(v, 0.375f);
}

TEST(Network, GradientReachesEveryParameter) {
  RoadNetwork<double> net(toy(8, 2, 32), 6);
  auto data = generate_synthetic(6, 2, 32);
  auto [x, tgt] = make_batch<double>({&data[0], &data[1]});
  auto loss = total_loss(net.forward(x, NormMode::kTrain), tgt).first;
  backward(loss);
  const ParamSet<double> ps = net.parameters();
  std::size_t nonzero = 0, total = 0;
  bool saw_ai = false, saw_lambda = false;
  for (const auto& p : ps.params) {
    EXPECT_TRUE(p.tensor.has_grad()) << p.name;
    std::size_t here = 0;
    for (double g : p.tensor.grad()) here += g != 0.0;
    EXPECT_GT(here, 0u) << p.name;
    nonzero += here;
    total += p.tensor.numel();
    saw_ai = saw_ai || p.name.find(".a_i") != std::string::npos;
    saw_lambda = saw_lambda || p.name.find(".lambda.") != std::string::npos;
  }
  EXPECT_TRUE(saw_ai);
  EXPECT_TRUE(saw_lambda);
  EXPECT_GE(static_cast<double>(nonzero), 0.9 * static_cast<double>(total));
}

TEST(Network, VariantsDifferOnlyBySpinParameters) {
  std::map<std::string, Shape> base;
  NetworkConfig c = toy(16, 2, 32);
  c.spin_variant = SpinVariant::kNone;
  const auto none = RoadNetwork<float>(c, 7).parameters();
  for (const auto& p : none.params) base[p.name] = p.tensor.shape();
  for (SpinVariant v : {SpinVariant::kSpatial, SpinVariant::kInteraction, SpinVariant::kFull}) {
    c.spin_variant = v;
    const auto ps = RoadNetwork<float>(c, 7).parameters();
    std::size_t shared = 0;
    for (const auto& p : ps.params) {
      if (p.name.rfind("spin", 0) == 0) continue;
      ASSERT_TRUE(base.count(p.name)) << p.name;
      EXPECT_EQ(base[p.name], p.tensor.shape());
      ++shared;
    }
    EXPECT_EQ(shared, base.size());
    EXPECT_EQ(ps.count() - none.count(), spin_overhead(c));
  }
}

TEST(Network, SharedWeightsIdenticalAcrossVariants) {
  NetworkConfig c = toy(8, 2, 32);
  c.spin_variant = SpinVariant::kNone;
  const auto a = RoadNetwork<float>(c, 8).parameters();
  c.spin_variant = SpinVariant::kFull;
  const auto b = RoadNetwork<float>(c, 8).parameters();
  for (std::size_t i = 0; i < a.params.size(); ++i) EXPECT_EQ(a.params[i].tensor.data(), b.params[i].tensor.data());
}

TEST(Losses, SoftIouExamples) {
  EXPECT_EQ(soft_iou(TD({4}, {1, 0, 1, 0}), {1, 0, 1, 0}).item(), 1.0);
  EXPECT_DOUBLE_EQ(soft_iou(TD({5}, 0.5), std::vector<double>(5, 1.0)).item(), 0.5);
  EXPECT_EQ(soft_iou(TD({3}, 0.0), std::vector<double>(3, 0.0)).item(), 1.0);
  EXPECT_THROW(soft_iou(TD({2}, {0.5, 1.5}), {1.0, 0.0}), std::domain_error);
}

TEST(Losses, SegLossSumsScales) {
  std::array<TD, 3> probs{TD({1, 1, 2, 2}, {1, 0, 0, 1}), TD({1, 1, 1, 2}, 0.5), TD({1, 1, 1, 1}, 0.5)};
  std::array<std::vector<double>, 3> gt{std::vector<double>{1, 0, 0, 1}, std::vector<double>{1, 1}, std::vector<double>{1}};
  EXPECT_DOUBLE_EQ(seg_loss_from_probs(probs, gt).item(), 1.0);
  probs[1] = TD({1, 1, 1, 2}, 1.0);
  probs[2] = TD({1, 1, 1, 1}, 1.0);
  EXPECT_EQ(seg_loss_from_probs(probs, gt).item(), 0.0);
}

TEST(Losses, OrientationClosedForms) {
  std::array<TD, 3> logits;
  std::array<std::vector<int>, 3> gt;
  for (std::size_t s = 0; s < 3; ++s) {
    const int e = 4 >> s;
    logits[s] = TD({1, 37, e, e}, 0.0);
    gt[s].assign(static_cast<std::size_t>(e * e), static_cast<int>(s * 7));
  }
  std::array<double, 3> per{};
  orientation_loss(logits, gt, OrientWeighting::kUniform, &per);
  for (double v : per) EXPECT_NEAR(v, std::log(37.0), 1e-12);

  for (std::size_t s = 0; s < 3; ++s) {
    const int plane = static_cast<int>(gt[s].size());
    for (int i = 0; i < plane; ++i) logits[s][static_cast<std::size_t>(gt[s][static_cast<std::size_t>(i)] * plane + i)] = 20.0;
  }
  orientation_loss(logits, gt, OrientWeighting::kUniform, &per);
  for (double v : per) EXPECT_LT(v, 1e-3);
  gt[0][0] = 37;
  EXPECT_THROW(orientation_loss(logits, gt), std::out_of_range);
}

TEST(Losses, SoftIouMonotoneInRoadPixels) {
  Rng rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(20), g(20);
    for (std::size_t i = 0; i < 20; ++i) {
      p[i] = u(rng);
      g[i] = u(rng) < 0.5 ? 1 : 0;
    }
    g[0] = 1;
    const double before = soft_iou(TD({20}, p), g).item();
    p[0] = std::min(1.0, p[0] + u(rng) * (1 - p[0]));
    EXPECT_GE(soft_iou(TD({20}, p), g).item(), before - 1e-15);
  }
}

TEST(Losses, BatchPermutationInvariant) {
  Rng rng(10);
  auto data = generate_synthetic(10, 3, 32);
  RoadNetwork<double> net(toy(8, 2, 32), 10);
  const auto [x, t] = make_batch<double>({&data[0], &data[1], &data[2]});
  const auto [xp, tp] = make_batch<double>({&data[2], &data[0], &data[1]});
  NoGradGuard ng;
  const auto o = net.forward(x, NormMode::kEval), op = net.forward(xp, NormMode::kEval);
  EXPECT_NEAR(seg_loss(o.seg, t.mask).item(), seg_loss(op.seg, tp.mask).item(), 1e-12);
  EXPECT_NEAR(orientation_loss(o.orient, t.orient).item(), orientation_loss(op.orient, tp.orient).item(), 1e-12);
}

TEST(Losses, FinalIsSumOfParts) {
  auto data = generate_synthetic(11, 2, 32);
  RoadNetwork<float> net(toy(8, 2, 32), 11);
  const auto [x, t] = make_batch<float>({&data[0], &data[1]});
  const auto [loss, rep] = total_loss(net.forward(x, NormMode::kTrain), t);
  EXPECT_EQ(rep.l_final, static_cast<double>(loss.item()));
  EXPECT_NEAR(rep.l_final, rep.l_seg + rep.l_orient, 1e-5);
  EXPECT_GE(rep.l_seg, 0.0);
  EXPECT_LE(rep.l_seg, 3.0);
  EXPECT_GE(rep.l_orient, 0.0);
}

TEST(Schedule, StepDecay) {
  const Schedule s;
  EXPECT_EQ(lr_at(0, s), 0.01);
  EXPECT_EQ(lr_at(49, s), 0.01);
  EXPECT_DOUBLE_EQ(lr_at(50, s), 0.001);
  EXPECT_DOUBLE_EQ(lr_at(90, s), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(110, s), 1e-5);
  EXPECT_DOUBLE_EQ(lr_at(119, s), 1e-5);
  double prev = lr_at(0, s);
  for (int e = 1; e < s.epochs; ++e) {
    EXPECT_LE(lr_at(e, s), prev);
    EXPECT_GT(lr_at(e, s), 0.0);
    prev = lr_at(e, s);
  }
}

TEST(Fit, LossFallsEarlyAndRejectsEmptyData) {
  NetworkConfig c = toy(16, 2, 32);
  RoadNetwork<float> net(c, 12);
  auto data = generate_synthetic(12, 8, 32);
  FitOptions fo;
  fo.schedule.initial_lr = 0.05;
  fo.schedule.steps = {};
  fo.schedule.epochs = 25;
  fo.train.batch_size = 4;
  fo.train.augment = false;
  fo.evaluate_val = false;
  const auto r = fit(net, data, {}, fo);
  ASSERT_EQ(r.iter_losses.size(), 50u);
  const auto avg = [&](std::size_t lo) {
    double s = 0;
    for (std::size_t i = lo; i < lo + 10; ++i) s += r.iter_losses[i];
    return s / 10;
  };
  EXPECT_LT(avg(40), avg(0));
  EXPECT_THROW(fit(net, {}, {}, fo), std::invalid_argument);
}
