#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "hazelevel/procedural.hpp"
#include "hazelevel/synth.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace hazelevel;

namespace {

DepthMap random_depth(std::mt19937_64& rng, int w, int h) { return DepthMap(oracle::random_map(rng, w, h, 0.0, 300.0), 300.0); }

TEST(ApplyHaze, VanishingKIsIdentity) {
  std::mt19937_64 rng(30);
  const auto scene = oracle::random_image(rng, 16, 12);
  const auto depth = random_depth(rng, 16, 12);
  for (auto kind : kAllConditions) {
    HazeCondition cond;
    cond.kind = kind;
    cond.k = 1e-300;
    EXPECT_EQ(apply_haze(scene, depth, cond), scene) << to_string(kind);
  }
}

TEST(ApplyHaze, ZeroDepthIsIdentity) {
  std::mt19937_64 rng(31);
  const auto scene = oracle::random_image(rng, 16, 12);
  const DepthMap depth(ScalarMap(16, 12, 0.0), 300.0);
  for (auto kind : kAllConditions) {
    HazeCondition cond;
    cond.kind = kind;
    cond.k = 3.0;
    EXPECT_EQ(apply_haze(scene, depth, cond), scene) << to_string(kind);
  }
}

TEST(ApplyHaze, GrayScenePromoted) {
  std::mt19937_64 rng(32);
  const auto scene = oracle::random_image(rng, 5, 4, 1);
  const DepthMap depth(ScalarMap(5, 4, 0.0), 300.0);
  HazeCondition cond;
  EXPECT_EQ(apply_haze(scene, depth, cond), scene.to_rgb());
}

TEST(ApplyHaze, BlackSceneScalarModel) {
  const RasterImage scene(8, 6, 3, 0.0);
  const DepthMap depth(ScalarMap(8, 6, 2.0), 300.0);
  HazeCondition cond;
  cond.k = 0.5;
  cond.sky_luminance = {1.0, 1.0, 1.0};
  const double expected = 1.0 - std::exp(-1.0);
  const auto hazed = apply_haze(scene, depth, cond);
  for (double v : hazed.values()) EXPECT_NEAR(v, expected, 1e-12);
  EXPECT_NEAR(expected, 0.6321, 1e-4);
}

TEST(ApplyHaze, NoiseFreeKindsMatchBaseKinds) {
  std::mt19937_64 rng(33);
  const auto scene = oracle::random_image(rng, 20, 10);
  const auto depth = random_depth(rng, 20, 10);
  HazeCondition base;
  base.k = 0.01;
  base.noise_strength = 0.0;
  const auto uniform = apply_haze(scene, depth, base);
  for (auto kind : kAllConditions) {
    base.kind = kind;
    EXPECT_EQ(apply_haze(scene, depth, base), uniform);
  }
}

TEST(ApplyHaze, OutputInRangeAndDeterministic) {
  std::mt19937_64 rng(34);
  const auto scene = oracle::random_image(rng, 33, 21);
  const auto depth = random_depth(rng, 33, 21);
  for (auto kind : kAllConditions) {
    HazeCondition cond;
    cond.kind = kind;
    cond.k = 0.02;
    cond.noise_strength = 1.5;
    cond.noise_seed = 99;
    const auto a = apply_haze(scene, depth, cond);
    EXPECT_EQ(a, apply_haze(scene, depth, cond));
    const auto [lo, hi] = std::minmax_element(a.values().begin(), a.values().end());
    EXPECT_GE(*lo, 0.0);
    EXPECT_LE(*hi, 1.0);
  }
}

TEST(ApplyHaze, UniformMonotoneTowardSky) {
  std::mt19937_64 rng(35);
  const auto scene = oracle::random_image(rng, 24, 16);
  const auto depth = random_depth(rng, 24, 16);
  HazeCondition cond;
  cond.kind = ConditionKind::uniform;
  std::vector<RasterImage> stack;
  for (double k : {0.001, 0.005, 0.01, 0.02, 0.05}) {
    cond.k = k;
    stack.push_back(apply_haze(scene, depth, cond));
  }
  for (std::size_t s = 1; s < stack.size(); ++s)
    for (std::size_t i = 0; i < scene.pixel_count(); ++i)
      for (int c = 0; c < 3; ++c) {
        const double sky = cond.sky_luminance[c];
        EXPECT_LE(std::abs(stack[s].sample(i, c) - sky), std::abs(stack[s - 1].sample(i, c) - sky) + 1e-15);
      }
}

TEST(ApplyHaze, Validation) {
  const RasterImage scene(4, 4, 3);
  const DepthMap depth(ScalarMap(4, 4, 1.0), 300.0);
  HazeCondition cond;
  cond.k = 0.0;
  EXPECT_THROW(apply_haze(scene, depth, cond), Error);
  cond.k = 1.0;
  cond.sky_luminance = {0.0, 0.5, 0.5};
  EXPECT_THROW(apply_haze(scene, depth, cond), Error);
  EXPECT_THROW(apply_haze(scene, DepthMap(ScalarMap(3, 4, 1.0), 300.0), HazeCondition{}), Error);
}

TEST(SmoothNoise, RangeMeanAndDeterminism) {
  const auto a = smooth_noise(64, 48, 5, 0);
  EXPECT_EQ(a, smooth_noise(64, 48, 5, 0));
  EXPECT_NE(a, smooth_noise(64, 48, 5, 1));
  EXPECT_NE(a, smooth_noise(64, 48, 6, 0));
  EXPECT_GE(a.min(), -1.0);
  EXPECT_LE(a.max(), 1.0);
  // Neighbouring pixels differ by at most one grid step's slope.
  for (int y = 0; y < 48; ++y)
    for (int x = 1; x < 64; ++x) EXPECT_LT(std::abs(a(x, y) - a(x - 1, y)), 0.5);
}

TEST(DefaultKLevels, EvenlySpacedAroundReference) {
  const DepthMap depth(ScalarMap(4, 4, 20.0), 300.0);
  const auto k = default_k_levels(depth);
  ASSERT_EQ(k.size(), 9u);
  const double k_ref = std::log(2.0) / 20.0;
  EXPECT_NEAR(k.front(), 0.2 * k_ref, 1e-15);
  EXPECT_NEAR(k[4], k_ref, 1e-15);
  EXPECT_NEAR(k.back(), 1.8 * k_ref, 1e-15);
  EXPECT_NEAR(std::exp(-k[4] * 20.0), 0.5, 1e-12);
  for (std::size_t i = 1; i < k.size(); ++i) EXPECT_GT(k[i], k[i - 1]);
}

TEST(SynthSpecTest, Validation) {
  SynthSettings settings;
  EXPECT_THROW(settings.validate(), Error);
  settings.k_levels = {0.1, 0.1};
  EXPECT_THROW(settings.validate(), Error);
  settings.k_levels = {-0.1, 0.1};
  EXPECT_THROW(settings.validate(), Error);
  settings.k_levels = {0.1, 0.2};
  EXPECT_NO_THROW(settings.validate());
  settings.conditions.clear();
  EXPECT_THROW(settings.validate(), Error);
  EXPECT_THROW(parse_condition("foggy"), Error);
  EXPECT_EQ(parse_condition("cloudy-hetero"), ConditionKind::cloudy_hetero);
}

using Stack = TempDirTest;

TEST_F(Stack, NineLevelsFourConditions) {
  const auto scene = make_procedural_scene(32, 24, 1);
  SynthSettings settings;
  settings.k_levels = default_k_levels(scene.depth);
  const auto files = generate_stack(scene.image, scene.depth, "s01", settings, dir_);
  ASSERT_EQ(files.rows.size(), 37u);
  EXPECT_EQ(files.rows[0].condition, "original");
  EXPECT_EQ(files.rows[0].k_true, 0.0);
  std::set<std::string> names;
  for (const auto& r : files.rows) {
    EXPECT_TRUE(std::filesystem::exists(dir_ / r.path)) << r.path;
    names.insert(r.path.string());
  }
  EXPECT_EQ(names.size(), 37u);
  EXPECT_TRUE(std::filesystem::exists(dir_ / files.depth_path));

  write_manifest(dir_ / "manifest.csv", files.rows);
  const auto back = read_manifest(dir_ / "manifest.csv");
  ASSERT_EQ(back.size(), 37u);
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].path, dir_ / files.rows[i].path);
    EXPECT_EQ(back[i].k_true, files.rows[i].k_true);
    EXPECT_EQ(back[i].condition, files.rows[i].condition);
  }
}

TEST_F(Stack, OneLevelOneCondition) {
  const auto scene = make_procedural_scene(16, 16, 2);
  SynthSettings settings;
  settings.k_levels = {0.01};
  settings.conditions = {ConditionKind::uniform};
  EXPECT_EQ(generate_stack(scene.image, scene.depth, "x", settings, dir_).rows.size(), 2u);
}

TEST_F(Stack, EighteenScenes) {
  SynthSettings settings;
  std::size_t rows = 0;
  for (int s = 0; s < 18; ++s) {
    const auto scene = make_procedural_scene(8, 8, s);
    settings.k_levels = default_k_levels(scene.depth);
    rows += render_stack(scene.image, scene.depth, settings).size() + 1;
  }
  EXPECT_EQ(rows, 666u);
}

TEST_F(Stack, RerunIsByteIdentical) {
  const auto scene = make_procedural_scene(24, 20, 3);
  SynthSettings settings;
  settings.k_levels = {0.01, 0.02};
  const auto a = generate_stack(scene.image, scene.depth, "a", settings, dir_ / "one");
  generate_stack(scene.image, scene.depth, "a", settings, dir_ / "two");
  for (const auto& r : a.rows) EXPECT_EQ(read_text(dir_ / "one" / r.path), read_text(dir_ / "two" / r.path));
}

TEST(Procedural, SceneHasSkyAndVariedDepth) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto scene = make_procedural_scene(96, 72, seed);
    const auto& d = scene.depth.map();
    EXPECT_EQ(d.max(), 300.0);
    EXPECT_LT(d.min(), 100.0);
    // Top row is never fully covered.
    bool sky = false;
    for (int x = 0; x < 96; ++x) sky |= d(x, 0) == 300.0;
    EXPECT_TRUE(sky);
    EXPECT_EQ(make_procedural_scene(96, 72, seed).image, scene.image);
  }
}

}  // namespace
