#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ddcml/loss.hpp"
#include "ddcml/nd/conv.hpp"
#include "support.hpp"

using namespace ddcml;
using D = nd::Tensor<double>;

namespace {

D vec(std::vector<double> v) {
  const auto n = v.size();
  return D(nd::Shape{n}, std::move(v));
}

}  // namespace

TEST(ReconLoss, Values) {
  EXPECT_EQ(recon_loss(vec({0.3, 0.4}), vec({0.3, 0.4})).item(), 0.0);
  EXPECT_NEAR(recon_loss(vec({0.0, 1.0}), vec({1.0, 1.0})).item(), 0.5, 1e-15);
  EXPECT_THROW(recon_loss(vec({0.0}), vec({0.0, 1.0})), Error);
  for (int s = 0; s < 10; ++s)
    EXPECT_GE(recon_loss(ddcml::testing::random_tensor<double>({9}, s), ddcml::testing::random_tensor<double>({9}, s + 100)).item(), 0.0);
}

TEST(EmbeddedSimilarity, TwoPointExample) {
  const auto p = embedded_similarity(vec({0.0}), {vec({0.0}), vec({1.0})});
  const double e = std::exp(-1.0);
  EXPECT_NEAR(p.data()[0], 1.0 / (1.0 + e), 1e-15);
  EXPECT_NEAR(p.data()[1], e / (1.0 + e), 1e-15);
  EXPECT_NEAR(p.data()[0], 0.7311, 1e-4);
  EXPECT_NEAR(p.data()[1], 0.2689, 1e-4);
}

TEST(EmbeddedSimilarity, EquidistantIsUniform) {
  const auto p = embedded_similarity(vec({0.0, 0.0}), {vec({1.0, 0.0}), vec({0.0, 1.0}), vec({-1.0, 0.0}), vec({0.0, -1.0})});
  for (double v : p.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(EmbeddedSimilarity, SumsToOneAndIsTranslationInvariant) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t dim = 1 + rng() % 6, c = 2 + rng() % 4;
    auto draw = [&] {
      std::vector<double> v(dim);
      for (auto& x : v) x = n(rng);
      return v;
    };
    std::vector<double> shift = draw();
    auto moved = [&](std::vector<double> v) {
      for (std::size_t i = 0; i < dim; ++i) v[i] += shift[i];
      return vec(v);
    };
    const auto z = draw();
    std::vector<D> ex, ex_moved;
    for (std::size_t i = 0; i < c; ++i) {
      const auto e = draw();
      ex.push_back(vec(e));
      ex_moved.push_back(moved(e));
    }
    const auto p = embedded_similarity(vec(z), ex);
    const auto q = embedded_similarity(moved(z), ex_moved);
    double s = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
      s += p.data()[i];
      EXPECT_GE(p.data()[i], 0.0);
      EXPECT_NEAR(p.data()[i], q.data()[i], 1e-12);
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(EmbeddedSimilarity, FarExemplarsDoNotOverflow) {
  const auto p = embedded_similarity(vec({0.0}), {vec({40.0}), vec({41.0})});
  EXPECT_GT(p.data()[0], 0.99);
  EXPECT_NEAR(p.data()[0] + p.data()[1], 1.0, 1e-12);
}

TEST(EmbeddedSimilarity, LengthMismatch) {
  EXPECT_THROW(embedded_similarity(vec({0.0, 1.0}), {vec({0.0}), vec({1.0})}), Error);
  EXPECT_THROW(embedded_similarity(vec({0.0}), {}), Error);
}

TEST(EmbeddedSimilarity, EmbeddingOverload) {
  const std::vector<Embedding> ex{{{0.0}}, {{1.0}}};
  const auto p = embedded_similarity(Embedding{{0.0}}, ex);
  ASSERT_EQ(p.values.size(), 2u);
  EXPECT_NEAR(p.values[0], 0.7311, 1e-4);
}

TEST(DiscriminativeLoss, Values) {
  EXPECT_EQ(discriminative_loss(vec({0.0, 1.0}), 1).item(), 0.0);
  EXPECT_NEAR(discriminative_loss(vec({0.5, 0.5}), 0).item(), std::log(2.0), 1e-15);
  const auto p = embedded_similarity(vec({0.0}), {vec({0.0}), vec({1.0})});
  EXPECT_NEAR(discriminative_loss(p, 0).item(), 0.3133, 1e-4);
  EXPECT_NEAR(discriminative_loss(vec({1.0, 0.0}), 1).item(), -std::log(kProbabilityFloor), 1e-9);
  EXPECT_THROW(discriminative_loss(vec({0.5, 0.5}), 2), Error);
  EXPECT_THROW(discriminative_loss(vec({0.5, 0.5}), -1), Error);
}

TEST(DiscriminativeLoss, NonnegativeAndZeroOnlyAtCertainty) {
  for (int s = 0; s < 20; ++s) {
    const auto p = nd::softmax(ddcml::testing::random_tensor<double>({4}, s, false, 3.0));
    for (int c = 0; c < 4; ++c) EXPECT_GT(discriminative_loss(p, c).item(), 0.0);
  }
}

TEST(TotalLoss, AlphaZeroIsReconstructionOnly) {
  const auto x = vec({0.0, 1.0}), xh = vec({1.0, 1.0});
  LossConfig cfg;
  cfg.alpha = 0.0;
  const auto t = total_loss(x, xh, vec({0.0}), {}, 0, cfg);
  EXPECT_EQ(t.total.item(), recon_loss(x, xh).item());
  EXPECT_EQ(t.disc, 0.0);
}

TEST(TotalLoss, PinnedSum) {
  const auto t = total_loss(vec({0.0, 1.0}), vec({1.0, 1.0}), vec({0.0}), {vec({0.0}), vec({1.0})}, 0, LossConfig{});
  EXPECT_NEAR(t.recon, 0.5, 1e-15);
  EXPECT_NEAR(t.disc, 0.3133, 1e-4);
  EXPECT_NEAR(t.total.item(), 0.8133, 1e-4);
  LossConfig half;
  half.alpha = 0.5;
  const auto h = total_loss(vec({0.0, 1.0}), vec({1.0, 1.0}), vec({0.0}), {vec({0.0}), vec({1.0})}, 0, half);
  EXPECT_NEAR(h.total.item(), 0.5 + 0.5 * t.disc, 1e-15);
}

TEST(TotalLoss, AgreesWithClampedFormAboveTheFloor) {
  for (int s = 0; s < 20; ++s) {
    const auto z = ddcml::testing::random_tensor<double>({3}, s);
    std::vector<D> ex{ddcml::testing::random_tensor<double>({3}, s + 50), ddcml::testing::random_tensor<double>({3}, s + 90)};
    const auto t = total_loss(vec({0.0}), vec({0.0}), z, ex, s % 2, LossConfig{});
    EXPECT_NEAR(t.disc, discriminative_loss(embedded_similarity(z, ex), s % 2).item(), 1e-12);
  }
}

TEST(TotalLoss, KeepsGradientBeyondTheFloor) {
  // P_label ~ exp(-100): the clamped form would give a zero gradient.
  D z(nd::Shape{1}, {0.0}, true);
  const auto t = total_loss(vec({0.0}), vec({0.0}), z, {vec({0.0}), vec({10.0})}, 1, LossConfig{});
  EXPECT_NEAR(t.disc, 100.0, 1e-9);
  nd::backward(t.total);
  EXPECT_NEAR(z.grad()[0], -20.0, 1e-9);
}

TEST(TotalLoss, Errors) {
  EXPECT_THROW(total_loss(vec({0.0}), vec({0.0}), vec({0.0}), {vec({0.0})}, 0, LossConfig{}), Error);
  EXPECT_THROW(total_loss(vec({0.0}), vec({0.0}), vec({0.0}), {vec({0.0}), vec({1.0})}, 2, LossConfig{}), Error);
  LossConfig neg;
  neg.alpha = -1.0;
  EXPECT_THROW(total_loss(vec({0.0}), vec({0.0}), vec({0.0}), {}, 0, neg), Error);
  LossConfig one_class;
  one_class.class_count = 1;
  EXPECT_THROW(validate(one_class), Error);
}

TEST(TotalLoss, GradientCheckOnToyModel) {
  // 1x1x1 convolutions as dense layers: x[5] -> z[2] -> x_hat[5]; the
  // exemplars go through the same encoder.
  auto We = ddcml::testing::random_tensor<double>({2, 5, 1, 1, 1}, 1, true, 0.5);
  auto be = ddcml::testing::random_tensor<double>({2}, 2, true, 0.1);
  auto Wd = ddcml::testing::random_tensor<double>({5, 2, 1, 1, 1}, 3, true, 0.5);
  auto bd = ddcml::testing::random_tensor<double>({5}, 4, true, 0.1);
  std::vector<D> xs;
  for (int i = 0; i < 3; ++i) xs.push_back(ddcml::testing::random_tensor<double>({5, 1, 1, 1}, 10 + i));
  auto encode = [&](const D& x) { return nd::flatten(nd::conv3d(x, We, be)); };
  auto loss = [&] {
    const auto z = encode(xs[0]);
    const auto xh = nd::relu(nd::conv3d(nd::reshape(z, {2, 1, 1, 1}), Wd, bd));
    return total_loss(xs[0], xh, z, {encode(xs[1]), encode(xs[2])}, 1, LossConfig{}).total;
  };
  const auto r = ddcml::testing::check_gradients({{"We", We}, {"be", be}, {"Wd", Wd}, {"bd", bd}}, loss);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  EXPECT_EQ(r.checked, 27u);
}
