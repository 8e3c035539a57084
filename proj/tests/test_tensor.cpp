#include "oracles.hpp"

using namespace spin;
using TD = Tensor<double>;

TEST(Matmul, IdentityLeavesMatrix) {
  const TD eye({2, 2}, {1, 0, 0, 1});
  const TD m({2, 2}, {3, 4, 5, 6});
  EXPECT_EQ(matmul(eye, m).data(), m.data());
}

TEST(Matmul, RowTimesColumn) {
  EXPECT_EQ(matmul(TD({1, 2}, {1, 2}), TD({2, 1}, {3, 4})).item(), 11.0);
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = oracle::random_mat(3 + trial % 4, 5, rng), b = oracle::random_mat(5, 2 + trial % 3, rng);
    const auto want = oracle::matmul(a, b);
    const auto got = oracle::from_tensor(matmul(oracle::to_tensor(a), oracle::to_tensor(b)));
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_ALL_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(TD({2, 3}), TD({4, 2}));
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos);
    EXPECT_NE(msg.find("4x2"), std::string::npos);
  }
}

TEST(Conv2d, IdentityPointwise) {
  std::mt19937_64 rng(1);
  const TD x = TD::randn({3, 4, 5}, rng);
  TD w({3, 3, 1, 1}, 0.0);
  for (int i = 0; i < 3; ++i) w[static_cast<std::size_t>(i * 3 + i)] = 1.0;
  EXPECT_EQ(conv2d(x, w, TD::zeros({3}), {1, 0}).data(), x.data());
}

TEST(Conv2d, OnesKernelSumsWindow) {
  const TD out = conv2d(TD({1, 3, 3}, 1.0), TD({1, 1, 3, 3}, 1.0), TD(), {1, 0});
  EXPECT_EQ(out.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(out.item(), 9.0);
}

TEST(Conv2d, MatchesDirectLoop) {
  std::mt19937_64 rng(2);
  for (auto [k, stride, pad] : {std::tuple{3, 1, 1}, {7, 2, 3}, {1, 1, 0}, {3, 2, 0}}) {
    const TD x = TD::randn({2, 9, 9}, rng), w = TD::randn({3, 2, k, k}, rng);
    int ho = 0, wo = 0;
    const auto want = oracle::conv2d(x.data(), 2, 9, 9, w.data(), 3, k, stride, pad, &ho, &wo);
    const TD got = conv2d(x, w, TD(), {stride, pad});
    EXPECT_EQ(got.shape(), (Shape{3, ho, wo}));
    EXPECT_ALL_NEAR(got.data(), want, 1e-12);
  }
}

TEST(Conv2d, RejectsUnsupportedKernelAndChannelMismatch) {
  EXPECT_THROW(conv2d(TD({1, 5, 5}), TD({1, 1, 5, 5}), TD(), {1, 2}), std::invalid_argument);
  EXPECT_THROW(conv2d(TD({2, 5, 5}), TD({1, 3, 3, 3}), TD(), {1, 1}), ShapeError);
}

TEST(Conv2d, PointwiseIsBitIdenticalToMatmul) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const TD x = TD::randn({6, 7, 5}, rng), w = TD::randn({4, 6, 1, 1}, rng);
    const TD conv = conv2d(x, w, TD(), {1, 0});
    const TD mm = matmul(reshape(w, {4, 6}), reshape(x, {6, 35}));
    EXPECT_EQ(conv.data(), mm.data());
  }
}

TEST(ConvTranspose2d, OnesKernelSpreadsValue) {
  const TD out = conv_transpose2d(TD({1, 1, 1}, {2.5}), TD({1, 1, 2, 2}, 1.0), TD(), 2);
  EXPECT_EQ(out.shape(), (Shape{1, 2, 2}));
  for (double v : out.data()) EXPECT_EQ(v, 2.5);
}

TEST(ConvTranspose2d, DoublesExtentAndRejectsStride) {
  std::mt19937_64 rng(4);
  for (int k : {2, 4}) {
    const TD out = conv_transpose2d(TD::randn({8, 16, 16}, rng), TD::randn({8, 4, k, k}, rng), TD::zeros({4}), 2);
    EXPECT_EQ(out.shape(), (Shape{4, 32, 32}));
  }
  EXPECT_THROW(conv_transpose2d(TD({1, 2, 2}), TD({1, 1, 2, 2}), TD(), 3), std::invalid_argument);
}

TEST(Pooling, MaxAndAverage) {
  EXPECT_EQ(maxpool2d(TD({1, 2, 2}, {1, 2, 3, 4})).item(), 4.0);
  const TD g = global_avg_pool(TD({3, 4, 4}, 1.75));
  EXPECT_EQ(g.shape(), (Shape{3}));
  for (double v : g.data()) EXPECT_DOUBLE_EQ(v, 1.75);
  EXPECT_THROW(maxpool2d(TD({1, 3, 4})), ShapeError);
}

TEST(Activation, ReluAndSoftmax) {
  EXPECT_EQ(relu(TD({3}, {-1, 0, 2})).data(), (std::vector<double>{0, 0, 2}));
  EXPECT_EQ(softmax_rows(TD({1, 2}, {0, 0})).data(), (std::vector<double>{0.5, 0.5}));
  const TD big = softmax_rows(TD({1, 2}, {1000, 1000}));
  EXPECT_EQ(big.data(), (std::vector<double>{0.5, 0.5}));
}

TEST(Activation, SoftmaxRowsSumToOneAtLargeMagnitude) {
  std::mt19937_64 rng(6);
  for (double scale_ : {1.0, 30.0, 1e3}) {
    const TD s = softmax_rows(TD::randn({8, 11}, rng, scale_));
    for (int r = 0; r < 8; ++r) {
      double sum_ = 0;
      for (int c = 0; c < 11; ++c) {
        const double v = s[static_cast<std::size_t>(r * 11 + c)];
        EXPECT_GE(v, 0.0);
        sum_ += v;
      }
      EXPECT_NEAR(sum_, 1.0, 1e-6);
    }
  }
}

TEST(Bilinear, ConstantStaysConstant) {
  for (double s : {0.25, 0.5, 2.0, 4.0}) {
    const TD out = bilinear_resize(TD({2, 8, 8}, 3.25), s);
    for (double v : out.data()) EXPECT_NEAR(v, 3.25, 1e-12);
  }
  const TD up = bilinear_resize(TD({1, 1, 1}, {7.0}), 2.0);
  EXPECT_EQ(up.shape(), (Shape{1, 2, 2}));
  for (double v : up.data()) EXPECT_EQ(v, 7.0);
  EXPECT_THROW(bilinear_resize_to(TD({1, 4, 4}), 0, 4), std::invalid_argument);
}

TEST(BatchNorm, EvalIdentityAndTrainStatistics) {
  std::mt19937_64 rng(7);
  const TD x = TD::randn({4, 3, 5, 5}, rng, 2.0);
  TD rm = TD::zeros({3}), rv({3}, 1.0);
  const TD id = batchnorm2d(x, TD({3}, 1.0), TD::zeros({3}), rm, rv, NormMode::kEval);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(id[i], x[i] / std::sqrt(1.0 + 1e-5), 1e-12);

  const TD gamma({3}, {0.5, 2.0, 1.5}), beta({3}, {-1.0, 0.0, 3.0});
  const TD y = batchnorm2d(x, gamma, beta, rm, rv, NormMode::kTrain);
  for (int c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i) m += y[static_cast<std::size_t>((n * 3 + c) * 25 + i)];
    m /= 100;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i) v += std::pow(y[static_cast<std::size_t>((n * 3 + c) * 25 + i)] - m, 2);
    EXPECT_NEAR(m, beta[static_cast<std::size_t>(c)], 1e-4);
    EXPECT_NEAR(std::sqrt(v / 100), gamma[static_cast<std::size_t>(c)], 1e-4);
  }
  EXPECT_NE(rm[0], 0.0);
  TD bad = TD::zeros({2});
  EXPECT_THROW(batchnorm2d(x, gamma, beta, bad, rv, NormMode::kTrain), ShapeError);
}

TEST(Backward, SimpleGradients) {
  std::mt19937_64 rng(8);
  TD x = TD::randn({3, 4}, rng, 1.0, true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);

  TD y = TD::randn({3, 4}, rng, 1.0, true);
  backward(scale(sum(mul(y, y)), 0.5));
  EXPECT_ALL_NEAR(y.grad(), y.data(), 1e-15);
  EXPECT_THROW(backward(mul(y, y)), ShapeError);
}

TEST(Backward, GradientsAccumulate) {
  TD x({2}, {1.0, 2.0}, true);
  backward(sum(x));
  backward(sum(x));
  EXPECT_EQ(x.grad(), (std::vector<double>{2.0, 2.0}));
}

TEST(Backward, IsLinearInTheLoss) {
  std::mt19937_64 rng(9);
  const TD w = TD::randn({4, 4}, rng);
  for (int trial = 0; trial < 3; ++trial) {
    TD x = TD::randn({3, 4}, rng, 1.0, true);
    const auto l1 = [&] { return sum(softmax_rows(matmul(x, w))); };
    const auto l2 = [&] { return sum(mul(sigmoid(x), x)); };
    const double a = 0.7, b = -1.3;
    backward(l1());
    const auto g1 = x.grad();
    x.zero_grad();
    backward(l2());
    const auto g2 = x.grad();
    x.zero_grad();
    backward(add(scale(l1(), a), scale(l2(), b)));
    for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(x.grad()[i], a * g1[i] + b * g2[i], 1e-10);
  }
}

TEST(Sgd, PlainStepSubtractsGradient) {
  TD p({3}, {1.0, 2.0, 3.0}, true);
  p.grad() = {0.5, -1.0, 2.0};
  std::vector<TD> params{p};
  OptimizerState<double> st(params, {1.0, 0.0, 0.0});
  sgd_step(params, st);
  EXPECT_EQ(p.data(), (std::vector<double>{0.5, 3.0, 1.0}));
}

TEST(Sgd, DefaultsAndMomentumRecurrence) {
  const SgdHyper h;
  EXPECT_EQ(h.momentum, 0.9);
  EXPECT_EQ(h.weight_decay, 0.0005);
  TD p({1}, {0.0}, true);
  std::vector<TD> params{p};
  OptimizerState<double> st(params, {1.0, 0.9, 0.0});
  for (double v : st.velocity[0]) EXPECT_EQ(v, 0.0);
  const double g = 0.25;
  for (int i = 0; i < 2; ++i) {
    p.grad() = {g};
    sgd_step(params, st);
  }
  EXPECT_DOUBLE_EQ(p[0], -(g + 1.9 * g));
  TD q({1}, {0.0}, true);
  std::vector<TD> missing{q};
  OptimizerState<double> st2(missing, {});
  EXPECT_THROW(sgd_step(missing, st2), std::runtime_error);
}

class OpGradcheck : public ::testing::TestWithParam<std::string> {};

TEST_P(OpGradcheck, ThreeSeedsWithinTolerance) {
  for (const auto& c : gradcheck_cases()) {
    if (c.name != GetParam()) continue;
    for (std::uint64_t seed : {11u, 12u, 13u}) {
      const GradcheckResult r = c.run(seed);
      EXPECT_LT(r.max_rel_error, c.tolerance) << c.name << " seed " << seed;
      EXPECT_GT(r.checked, 0u);
      EXPECT_LE(r.skipped, r.checked + r.skipped) << c.name;
    }
    return;
  }
  FAIL() << "no case " << GetParam();
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradcheck, ::testing::ValuesIn([] {
                           std::vector<std::string> names;
                           for (const auto& c : gradcheck_cases()) names.push_back(c.name);
                           return names;
                         }()));

TEST(Gradcheck, DetectsAWrongBackward) {
  // y = x^2 with a backward that claims 3x.
  const GradFn broken = [](const std::vector<TD>& in) {
    std::vector<double> out(in[0].numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[0][i] * in[0][i];
    return TD::from_op(in[0].shape(), out, {in[0]}, [](Node<double>& o) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) o.parents[0]->grad[i] += 3 * o.parents[0]->data[i] * o.grad[i];
    });
  };
  std::mt19937_64 rng(1);
  EXPECT_GT(gradcheck(broken, {gradcheck_input({4}, rng)}).max_rel_error, 0.1);
}
