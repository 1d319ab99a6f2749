#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "ddcml/cae.hpp"
#include "ddcml/checkpoint.hpp"
#include "ddcml/phantom.hpp"
#include "support.hpp"

using namespace ddcml;
using ddcml::testing::TempDir;

namespace {

NetworkSpec tiny_spec() {
  NetworkSpec s;
  s.input_dims = {16, 16, 16};
  s.block_channels = {2, 3, 4, 4};
  return s;
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no ddcml::Error thrown";
  return Errc::io;
}

}  // namespace

TEST(NetworkSpec, FullSizeCompression) {
  const auto s = full_spec();
  EXPECT_EQ(s.latent_dims(), (Dims3{5, 6, 5}));
  EXPECT_EQ(s.embedding_dim(), 150u);
  EXPECT_EQ(s.input_dims.count() % s.embedding_dim(), 0u);
  EXPECT_EQ(s.input_dims.count() / s.embedding_dim(), 4096u);
  EXPECT_EQ(s.kernel * s.kernel * s.kernel, 27u);
}

TEST(NetworkSpec, DeskCompressionRatioMatches) {
  const auto s = desk_spec();
  EXPECT_EQ(s.embedding_dim(), 8u);
  EXPECT_EQ(s.input_dims.count() / s.embedding_dim(), 4096u);
  EXPECT_EQ(s.input_dims.count() % s.embedding_dim(), 0u);
}

TEST(NetworkSpec, Validation) {
  auto s = desk_spec();
  s.input_dims = {40, 32, 32};
  EXPECT_EQ(code_of([&] { validate(s); }), Errc::invalid_argument);
  s = desk_spec();
  s.kernel = 2;
  EXPECT_EQ(code_of([&] { validate(s); }), Errc::invalid_argument);
  s = desk_spec();
  s.bypass_sites = {{1, 3}};
  EXPECT_EQ(code_of([&] { validate(s); }), Errc::invalid_argument);
  s = desk_spec();
  s.block_channels[2] = 0;
  EXPECT_EQ(code_of([&] { validate(s); }), Errc::invalid_argument);
}

TEST(NetworkSpec, ParameterCountMatchesBuiltModel) {
  std::vector<NetworkSpec> specs{desk_spec(), tiny_spec(), full_spec()};
  auto no_bypass = desk_spec();
  no_bypass.bypass_sites.clear();
  specs.push_back(no_bypass);
  auto wide = tiny_spec();
  wide.block_channels = {3, 5, 7, 9};
  wide.convs_per_block = {2, 1, 2, 3};
  wide.bottleneck_channels = 2;
  wide.bypass_sites = {{1, 2}, {2, 3}, {3, 4}};
  specs.push_back(wide);
  for (const auto& s : specs)
    EXPECT_EQ(parameter_count(s), Model<float>::build(s, 1).params().scalar_count());
  EXPECT_EQ(parameter_count(desk_spec()), 78370u);
}

TEST(Model, ShapesAndLayout) {
  const auto m = Model<double>::build(tiny_spec(), 3);
  const auto v = ddcml::testing::random_volume({16, 16, 16}, 4);
  const auto x = m.to_input(v);
  ASSERT_EQ(x.shape(), (nd::Shape{1, 16, 16, 16}));
  EXPECT_EQ(x.data()[v.index(3, 5, 7)], static_cast<double>(v.at(3, 5, 7)) / 255.0);
  const auto out = m.forward(x);
  EXPECT_EQ(out.embedding.shape(), (nd::Shape{1}));
  EXPECT_EQ(out.reconstruction.shape(), x.shape());
  EXPECT_EQ(code_of([&] { m.to_input(ddcml::testing::random_volume({16, 16, 32}, 1)); }), Errc::dimension_mismatch);
}

TEST(Model, DecodeDependsOnlyOnTheEmbedding) {
  auto spec = tiny_spec();
  spec.input_dims = {32, 16, 16};
  const auto m = Model<float>::build(spec, 8);
  const auto x = m.to_input(ddcml::testing::random_volume(spec.input_dims, 9));
  const auto out = m.forward(x);
  const auto again = m.decode(out.embedding.detach());
  for (std::size_t i = 0; i < again.size(); ++i) ASSERT_EQ(again.data()[i], out.reconstruction.data()[i]);

  const auto z = m.encode(ddcml::testing::random_volume(spec.input_dims, 9));
  EXPECT_EQ(z.size(), spec.embedding_dim());
  EXPECT_EQ(m.decode(z), m.to_volume(out.reconstruction));
}

TEST(Model, BuildIsDeterministicInTheSeed) {
  const auto a = Model<float>::build(tiny_spec(), 5);
  const auto b = Model<float>::build(tiny_spec(), 5);
  const auto c = Model<float>::build(tiny_spec(), 6);
  const auto& wa = a.params().get("enc3.conv1.weight");
  const auto& wb = b.params().get("enc3.conv1.weight");
  const auto& wc = c.params().get("enc3.conv1.weight");
  EXPECT_TRUE(std::equal(wa.data().begin(), wa.data().end(), wb.data().begin()));
  EXPECT_FALSE(std::equal(wa.data().begin(), wa.data().end(), wc.data().begin()));
}

TEST(Model, HeInitializationScale) {
  auto s = desk_spec();
  s.block_channels = {4, 8, 32, 32};
  const auto m = Model<double>::build(s, 21);
  const auto& w = m.params().get("enc4.conv2.weight");  // fan_in 32 * 27
  double ss = 0.0;
  for (double v : w.data()) ss += v * v;
  const double sd = std::sqrt(ss / static_cast<double>(w.size()));
  EXPECT_NEAR(sd, std::sqrt(2.0 / (32.0 * 27.0)), 0.03 * sd);
  for (double v : m.params().get("enc4.conv2.bias").data()) EXPECT_EQ(v, 0.0);
}

TEST(Model, BypassProjectionOnlyWhenChannelsDiffer) {
  const auto m = Model<float>::build(desk_spec(), 1);
  EXPECT_TRUE(m.params().contains("enc3.bypass.weight"));   // 8 -> 16
  EXPECT_FALSE(m.params().contains("enc4.bypass.weight"));  // 16 -> 16
}

TEST(Model, GradientCheckOnTinyNetwork) {
  auto s = tiny_spec();
  s.block_channels = {1, 2, 2, 2};
  auto m = Model<double>::build(s, 31);
  // Zero biases put every ReLU fed by background or by the zero-filled
  // unpooled maps exactly on its kink; move off it.
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (auto& [name, t] : m.params())
    if (name.ends_with(".bias"))
      for (auto& v : t.mutable_data()) v = u(rng);
  const auto x = m.to_input(ddcml::testing::random_volume(s.input_dims, 32));
  std::vector<std::pair<std::string, nd::Tensor<double>>> params;
  for (const auto& [name, t] : m.params()) params.emplace_back(name, t);
  const auto r = ddcml::testing::check_gradients(params, [&] { return nd::mean_squared_error(x, m.forward(x).reconstruction); },
                                                 {.retry_above = 1e-5});
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  EXPECT_EQ(r.checked, parameter_count(s));
}

// ---------------------------------------------------------------------------

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  const auto m = Model<float>::build(desk_spec(), 12);
  save_checkpoint(m, dir / "m.ddck");
  const auto back = load_checkpoint<float>(dir / "m.ddck", desk_spec());
  EXPECT_EQ(back.spec(), m.spec());
  for (const auto& [name, t] : m.params()) {
    const auto& u = back.params().get(name);
    ASSERT_TRUE(std::equal(t.data().begin(), t.data().end(), u.data().begin())) << name;
  }
  PhantomSpec ps;
  ps.subject_seed = 3;
  const auto v = gen_phantom(ps);
  EXPECT_EQ(back.encode(v), m.encode(v));

  save_checkpoint(back, dir / "again.ddck");
  std::ifstream a(dir / "m.ddck", std::ios::binary), b(dir / "again.ddck", std::ios::binary);
  EXPECT_TRUE(std::equal(std::istreambuf_iterator<char>(a), {}, std::istreambuf_iterator<char>(b)));
}

TEST(Checkpoint, DeskCheckpointSize) {
  TempDir dir;
  save_checkpoint(Model<float>::build(desk_spec(), 1), dir / "m.ddck");
  const auto bytes = std::filesystem::file_size(dir / "m.ddck");
  EXPECT_GT(bytes, parameter_count(desk_spec()) * 8);
  EXPECT_LT(bytes, parameter_count(desk_spec()) * 8 + 4096);
  EXPECT_LT(bytes, 10u * 1024 * 1024);
}

TEST(Checkpoint, RejectsDamageAndMismatch) {
  TempDir dir;
  save_checkpoint(Model<float>::build(tiny_spec(), 1), dir / "m.ddck");
  EXPECT_EQ(code_of([&] { load_checkpoint<float>(dir / "m.ddck", desk_spec()); }), Errc::spec_mismatch);

  const auto full = std::filesystem::file_size(dir / "m.ddck");
  std::filesystem::copy_file(dir / "m.ddck", dir / "short.ddck");
  std::filesystem::resize_file(dir / "short.ddck", full - 5);
  EXPECT_EQ(code_of([&] { load_checkpoint<float>(dir / "short.ddck"); }), Errc::truncated);

  std::filesystem::copy_file(dir / "m.ddck", dir / "long.ddck");
  std::ofstream(dir / "long.ddck", std::ios::app | std::ios::binary) << "x";
  EXPECT_EQ(code_of([&] { load_checkpoint<float>(dir / "long.ddck"); }), Errc::corrupt);

  std::ofstream(dir / "magic.ddck", std::ios::binary) << "NOPE";
  EXPECT_EQ(code_of([&] { load_checkpoint<float>(dir / "magic.ddck"); }), Errc::bad_magic);
}
