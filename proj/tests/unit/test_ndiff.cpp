#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <functional>

#include "cdisent/core/random.hpp"
#include "cdisent/ndiff/adam.hpp"
#include "cdisent/ndiff/gradcheck.hpp"
#include "cdisent/ndiff/graph.hpp"
#include "cdisent/ndiff/mlp.hpp"
#include "cdisent/ndiff/params.hpp"

using namespace cdisent;
using namespace cdisent::ndiff;

namespace {

Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

using UnaryOp = std::function<Var<double>(Var<double>)>;

double check_unary(const UnaryOp& op, double lo, double hi, std::uint64_t seed) {
  Rng rng(seed);
  ParamSet<double> p;
  p.add("a", random_tensor({3, 4}, rng, lo, hi));
  return grad_check(
      [&](Graph<double>& g, const ParamSet<double>& ps) {
        // Weighted sum so that every entry gets a distinct upstream gradient.
        Var<double> y = op(g.param(ps, "a"));
        Tensor<double> w(y.value().shape());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.1 * static_cast<double>(i);
        return sum(y * g.constant(w));
      },
      p, 1e-5);
}

}  // namespace

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor<double>({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor<double>({0, 2}), ShapeError);
}

TEST(Tensor, RowsAndCols) {
  Tensor<float> t({2, 3, 4});
  EXPECT_EQ(t.rows(), 6u);
  EXPECT_EQ(t.cols(), 4u);
  Tensor<float> v({5});
  EXPECT_EQ(v.rows(), 1u);
  EXPECT_EQ(v.cols(), 5u);
}

TEST(Mlp, ZeroWeightsGiveZeroOutput) {
  ParamSet<double> p;
  MlpArch arch{"f", {3, 5, 2}, Activation::Tanh};
  Rng rng(1);
  init_mlp(p, arch, rng);
  for (auto& e : p) e.value.fill(0.0);
  Graph<double> g;
  auto y = mlp_forward(g, p, g.constant(Tensor<double>::from_rows({{1, -2, 3}, {0.5, 4, -1}})), arch);
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, IdentityLayer) {
  ParamSet<double> p;
  p.add("f.w0", Tensor<double>::from_rows({{1, 0}, {0, 1}}));
  p.add("f.b0", Tensor<double>({2}, 0.0));
  Graph<double> g;
  auto y = mlp_forward(g, p, g.constant(Tensor<double>::from_rows({{1, 2}})), MlpArch{"f", {2, 2}});
  EXPECT_EQ(y.value()[0], 1.0);
  EXPECT_EQ(y.value()[1], 2.0);
}

TEST(Mlp, DeterministicForward) {
  ParamSet<float> p;
  MlpArch arch{"f", {4, 8, 3}, Activation::Relu};
  Rng rng(42);
  init_mlp(p, arch, rng);
  Tensor<float> x = Tensor<float>::from_rows({{0.1f, 0.2f, -0.3f, 0.4f}});
  Graph<float> g1, g2;
  auto a = mlp_forward(g1, p, g1.constant(x), arch).value();
  auto b = mlp_forward(g2, p, g2.constant(x), arch).value();
  EXPECT_EQ(a, b);
}

TEST(Mlp, ShapeMismatchIsDescriptive) {
  ParamSet<double> p;
  MlpArch arch{"enc", {4, 2}};
  Rng rng(1);
  init_mlp(p, arch, rng);
  Graph<double> g;
  try {
    mlp_forward(g, p, g.constant(Tensor<double>::matrix(1, 3)), arch);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("enc"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
}

TEST(Backward, SumGivesOnes) {
  ParamSet<double> p;
  p.add("w", Tensor<double>::from_rows({{1, -2, 3}}));
  Graph<double> g;
  g.backward(sum(g.param(p, "w")), p);
  for (double v : p.grad("w").data()) EXPECT_EQ(v, 1.0);
}

TEST(Backward, HalfSquaredNormGivesW) {
  ParamSet<double> p;
  p.add("w", Tensor<double>::from_rows({{1.5, -2, 0.25}}));
  Graph<double> g;
  g.backward(scale(sum(square(g.param(p, "w"))), 0.5), p);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(p.grad("w")[i], p.value("w")[i]);
}

TEST(Backward, UnreachableParamHasZeroGradient) {
  ParamSet<double> p;
  p.add("used", Tensor<double>::scalar(2.0));
  p.add("unused", Tensor<double>::scalar(5.0));
  p.grad("unused").fill(7.0);
  Graph<double> g;
  g.backward(square(g.param(p, "used")), p);
  EXPECT_EQ(p.grad("unused").item(), 0.0);
  EXPECT_EQ(p.grad("used").item(), 4.0);
}

TEST(Backward, NonScalarLossThrows) {
  ParamSet<double> p;
  p.add("w", Tensor<double>::matrix(2, 2, 1.0));
  Graph<double> g;
  EXPECT_THROW(g.backward(g.param(p, "w"), p), ShapeError);
}

TEST(Backward, RandomMlpMseMatchesFiniteDifferences) {
  ParamSet<double> p;
  MlpArch arch{"f", {3, 6, 2}, Activation::Tanh};
  Rng rng(7);
  init_mlp(p, arch, rng);
  for (auto& e : p)
    for (auto& v : e.value.data()) v += 0.1 * rng.normal();
  Tensor<double> x = random_tensor({4, 3}, rng), y = random_tensor({4, 2}, rng);
  const double err = grad_check(
      [&](Graph<double>& g, const ParamSet<double>& ps) {
        return mse(mlp_forward(g, ps, g.constant(x), arch), g.constant(y));
      },
      p, 1e-3);
  EXPECT_LT(err, 1e-4);
}

TEST(GradCheck, SquareAtThree) {
  ParamSet<double> p;
  p.add("w", Tensor<double>::scalar(3.0));
  const double err = grad_check([](Graph<double>& g, const ParamSet<double>& ps) { return square(g.param(ps, "w")); },
                                p, 1e-4);
  EXPECT_LT(err, 1e-9);
}

TEST(GradCheck, SoftplusSum) {
  Rng rng(11);
  ParamSet<double> p;
  p.add("w", random_tensor({2, 5}, rng, -3, 3));
  const double err = grad_check(
      [](Graph<double>& g, const ParamSet<double>& ps) { return sum(softplus(g.param(ps, "w"))); }, p, 1e-5);
  EXPECT_LT(err, 1e-5);
}

TEST(GradCheck, DetectsDoubledGradient) {
  // With the max(|a|, |n|) denominator a gradient scaled by 2 scores |2n - n| / 2n = 0.5.
  ParamSet<double> p;
  p.add("w", Tensor<double>::from_rows({{0.5, -1.0, 2.0}}));
  auto loss = [](Graph<double>& g, const ParamSet<double>& ps) { return sum(square(g.param(ps, "w"))); };
  {
    Graph<double> g;
    g.backward(loss(g, p), p);
  }
  ParamSet<double> wrong = p;
  for (auto& v : wrong.grad("w").data()) v *= 2.0;
  auto value = [&](const ParamSet<double>& ps) {
    Graph<double> g;
    return loss(g, ps).value().item();
  };
  const double err = grad_check_against(value, p, wrong, 1e-5);
  EXPECT_NEAR(err, 0.5, 1e-6);
}

TEST(GradCheck, NonFiniteThrows) {
  ParamSet<double> p;
  p.add("w", Tensor<double>::scalar(700.0));
  auto value = [](const ParamSet<double>& ps) { return std::exp(ps.value("w").item() * 2.0); };
  EXPECT_THROW(grad_check_against(value, p, p, 1e-3), NumericError);
}

TEST(GradCheck, EveryOp) {
  const std::vector<std::pair<std::string, UnaryOp>> ops = {
      {"exp", [](Var<double> a) { return exp(a); }},
      {"tanh", [](Var<double> a) { return tanh(a); }},
      {"sigmoid", [](Var<double> a) { return sigmoid(a); }},
      {"softplus", [](Var<double> a) { return softplus(a); }},
      {"square", [](Var<double> a) { return square(a); }},
      {"neg", [](Var<double> a) { return -a; }},
      {"affine", [](Var<double> a) { return affine(a, 2.5, -1.0); }},
      {"softmax", [](Var<double> a) { return softmax_rows(a); }},
      {"log_softmax", [](Var<double> a) { return log_softmax_rows(a); }},
      {"sum_rows", [](Var<double> a) { return sum_rows(a) * sum_rows(a); }},
      {"mean_rows", [](Var<double> a) { return square(mean_rows(a)); }},
      {"sum_cols", [](Var<double> a) { return square(sum_cols(a)); }},
      {"slice", [](Var<double> a) { return square(slice_cols(a, 1, 3)); }},
      {"concat", [](Var<double> a) { return concat_cols<double>({a, square(a)}); }},
      {"mul_bcast", [](Var<double> a) { return a * mean_rows(a); }},
      {"sub_bcast", [](Var<double> a) { return square(a - sum_cols(a)); }},
      {"pick", [](Var<double> a) { return pick(a, {0, 3, 1}); }},
  };
  for (const auto& [name, op] : ops) {
    EXPECT_LT(check_unary(op, -1.5, 1.5, 3), 1e-6) << name;
  }
  // Ops needing a positive domain.
  EXPECT_LT(check_unary([](Var<double> a) { return log(a); }, 0.5, 2.0, 4), 1e-6);
  EXPECT_LT(check_unary([](Var<double> a) { return sqrt(a); }, 0.5, 2.0, 5), 1e-6);
  EXPECT_LT(check_unary([](Var<double> a) { return exp(a) / a; }, 0.5, 2.0, 6), 1e-6);
  // Away from the kinks.
  EXPECT_LT(check_unary([](Var<double> a) { return relu(a); }, 0.1, 1.0, 7), 1e-6);
  EXPECT_LT(check_unary([](Var<double> a) { return clamp(a, -2.0, 2.0); }, -1.0, 1.0, 8), 1e-6);

  Rng rng(9);
  ParamSet<double> p;
  p.add("a", random_tensor({3, 4}, rng));
  p.add("b", random_tensor({4, 2}, rng));
  const double err = grad_check(
      [](Graph<double>& g, const ParamSet<double>& ps) {
        return sum(square(matmul(g.param(ps, "a"), g.param(ps, "b"))));
      },
      p, 1e-5);
  EXPECT_LT(err, 1e-6);

  const double ce = grad_check(
      [](Graph<double>& g, const ParamSet<double>& ps) {
        return cross_entropy_logits(g.param(ps, "a"), {0, 2, 3});
      },
      p, 1e-5);
  EXPECT_LT(ce, 1e-6);
}

TEST(Numeric, LogClampsAndCounts) {
  Graph<double> g;
  auto y = log(g.constant(Tensor<double>::from_rows({{0.0, 1.0}})));
  EXPECT_DOUBLE_EQ(y.value()[0], std::log(kClampFloor));
  EXPECT_EQ(g.clamp_events(), 1u);
}

TEST(Numeric, OverflowIsAnError) {
  Graph<double> g;
  EXPECT_THROW(exp(g.constant(Tensor<double>::scalar(1000.0))), NumericError);
}

TEST(Adam, ZeroGradientLeavesParams) {
  ParamSet<double> p;
  p.add("w", Tensor<double>::from_rows({{1, 2, 3}}));
  AdamState<double> st(p, AdamConfig{});
  const auto before = p.value("w");
  adam_step(p, st);
  EXPECT_EQ(p.value("w"), before);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // m_hat = v_hat = 1 after bias correction, so the step is lr / (1 + eps).
  ParamSet<double> p;
  p.add("w", Tensor<double>::scalar(0.0));
  p.grad("w").fill(1.0);
  AdamState<double> st(p, AdamConfig{0.1, 0.9, 0.999, 1e-8});
  adam_step(p, st);
  EXPECT_NEAR(p.value("w").item(), -0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, IdenticalRunsIdenticalTrajectories) {
  auto run = [] {
    ParamSet<float> p;
    MlpArch arch{"f", {2, 4, 1}, Activation::Tanh};
    Rng rng(5);
    init_mlp(p, arch, rng);
    AdamState<float> st(p, AdamConfig{0.01});
    Tensor<float> x = Tensor<float>::from_rows({{1, 0}, {0, 1}, {1, 1}});
    Tensor<float> y = Tensor<float>::from_rows({{1}, {1}, {0}});
    for (int i = 0; i < 20; ++i) {
      Graph<float> g;
      g.backward(mse(mlp_forward(g, p, g.constant(x), arch), g.constant(y)), p);
      adam_step(p, st);
    }
    return p;
  };
  EXPECT_EQ(run(), run());
}

TEST(Checkpoint, RoundTripIsBitExact) {
  ParamSet<float> p;
  MlpArch arch{"enc", {3, 5, 2}, Activation::Tanh};
  Rng rng(17);
  init_mlp(p, arch, rng);
  const std::string bytes = encode_checkpoint(p);
  ParamSet<float> q = decode_checkpoint<float>(bytes);
  EXPECT_EQ(p, q);
  EXPECT_EQ(encode_checkpoint(q), bytes);
  EXPECT_EQ(bytes.substr(0, 4), "CDPT");

  const auto path = std::filesystem::temp_directory_path() / "cdisent_ckpt_test.cdpt";
  save_checkpoint(p, path);
  EXPECT_EQ(load_checkpoint<float>(path), p);
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptionIsReported) {
  ParamSet<float> p;
  p.add("w", Tensor<float>::matrix(2, 3, 1.5f));
  std::string bytes = encode_checkpoint(p);
  EXPECT_THROW(decode_checkpoint<float>(bytes.substr(0, bytes.size() - 3)), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint<float>(bad), FormatError);
  std::string v2 = bytes;
  v2[4] = 2;
  try {
    decode_checkpoint<float>(v2);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported version"), std::string::npos);
  }
}

TEST(ParamSet, NamesUnique) {
  ParamSet<float> p;
  p.add("w", Tensor<float>::scalar(1));
  EXPECT_THROW(p.add("w", Tensor<float>::scalar(2)), Error);
}
