#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "hazelevel/estimator.hpp"
#include "hazelevel/procedural.hpp"
#include "hazelevel/synth.hpp"
#include "oracles.hpp"

using namespace hazelevel;

namespace {

double sorted_nearest_rank(std::vector<double> v, double pct) {
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(v.size())));
  return v[std::max<std::size_t>(rank, 1) - 1];
}

TEST(Transform, Examples) {
  std::mt19937_64 rng(40);
  const auto m = oracle::random_map(rng, 5, 3);
  EXPECT_EQ(transform(m, Transform::unit), m);
  EXPECT_EQ(transform(ScalarMap(1, 1, 0.0), Transform::log1p)[0], 0.0);
  EXPECT_NEAR(transform(ScalarMap(1, 1, std::numbers::e - 1.0), Transform::log1p)[0], 1.0, 1e-15);
  EXPECT_NEAR(transform(ScalarMap(1, 1, std::numbers::e - 1.0), Transform::loglog1p)[0], std::log(2.0), 1e-15);
}

TEST(Transform, StrictlyMonotone) {
  for (auto f : kTransforms)
    for (double x = 0.0; x < 300.0; x = x * 1.5 + 0.01) EXPECT_LT(apply_transform(x, f), apply_transform(x * 1.5 + 0.01, f));
}

TEST(CombineTest, Examples) {
  const ScalarMap half(3, 2, 0.5), two(3, 2, 2.0), one(3, 2, 1.0);
  const auto product = combine(half, two, Combine::t_times_d);
  for (double v : product.values()) EXPECT_EQ(v, 1.0);
  const auto quotient = combine(half, one, Combine::d_over_t);
  for (double v : quotient.values()) EXPECT_EQ(v, 2.0);
  const ScalarMap t(2, 1, 0.5), d(2, 1, std::vector<double>{0.0, 4.0});
  const auto q = combine(t, d, Combine::t_over_d);
  EXPECT_EQ(q[0], 0.5 / 1e-6);
  EXPECT_EQ(q[1], 0.125);
  EXPECT_TRUE(std::isfinite(q[0]));
  EXPECT_EQ(combine(t, d, Combine::t_only), t);
  EXPECT_EQ(combine(t, d, Combine::d_only), d);
  EXPECT_THROW(combine(half, d, Combine::t_times_d), Error);
}

TEST(PoolTest, Examples) {
  EXPECT_EQ(pool(ScalarMap(4, 1, std::vector<double>{1, 2, 3, 4}), Pool::mean), 2.5);
  EXPECT_EQ(pool(ScalarMap(3, 1, std::vector<double>{0.1, 0.9, 0.5}), Pool::max), 0.9);
  std::vector<double> hundred(100);
  for (int i = 0; i < 100; ++i) hundred[i] = 100 - i;
  const ScalarMap m(10, 10, hundred);
  EXPECT_EQ(pool(m, Pool::p90), 90.0);
  EXPECT_EQ(pool(m, Pool::p75), 75.0);
  EXPECT_EQ(pool(m, Pool::median), 50.5);
  EXPECT_EQ(pool(ScalarMap(3, 1, std::vector<double>{3, 1, 2}), Pool::median), 2.0);
}

TEST(PoolTest, MatchesSortOracle) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 20), h = 1 + static_cast<int>(rng() % 7);
    const auto m = oracle::random_map(rng, w, h);
    std::vector<double> v(m.values().begin(), m.values().end());
    EXPECT_EQ(pool(m, Pool::p90), sorted_nearest_rank(v, 90));
    EXPECT_EQ(pool(m, Pool::p75), sorted_nearest_rank(v, 75));
    EXPECT_EQ(pool(m, Pool::max), *std::max_element(v.begin(), v.end()));
    std::sort(v.begin(), v.end());
    const double median = v.size() % 2 ? v[v.size() / 2] : (v[v.size() / 2 - 1] + v[v.size() / 2]) / 2;
    EXPECT_DOUBLE_EQ(pool(m, Pool::median), median);
  }
  EXPECT_THROW(pool_all(std::span<const double>{}), Error);
}

TEST(PoolTest, Monotone) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 30; ++trial) {
    const auto b = oracle::random_map(rng, 9, 7);
    ScalarMap a = b;
    for (double& v : a.values()) v += 0.1 * oracle::random_map(rng, 1, 1)[0];
    for (auto p : kPools) EXPECT_GE(pool(a, p), pool(b, p));
  }
}

TEST(Variants, CountsAndUniqueness) {
  const auto all = enumerate_variants();
  std::set<std::string> ids;
  std::size_t t_only = 0, d_only = 0;
  for (const auto& v : all) {
    ids.insert(to_string(v));
    EXPECT_EQ(v, v.canonical());
    t_only += v.combine == Combine::t_only;
    d_only += v.combine == Combine::d_only;
  }
  EXPECT_EQ(ids.size(), all.size());
  EXPECT_EQ(t_only, 2u * 3u * 5u);
  EXPECT_EQ(d_only, 3u * 5u * 2u);
  EXPECT_EQ(all.size(), 3u * 2u * 3u * 3u * 5u * 2u + 30u + 30u);
  EXPECT_EQ(enumerate_variants(), all);
}

TEST(Variants, ParseAndCanonicalize) {
  const auto v = parse_variant("refined|log1p|unit|d_over_t|p90|dnorm=1");
  EXPECT_EQ(v.transmission, TransmissionKind::refined);
  EXPECT_EQ(v.t_transform, Transform::log1p);
  EXPECT_EQ(v.pool, Pool::p90);
  EXPECT_TRUE(v.depth_normalize);
  EXPECT_EQ(to_string(v), "refined|log1p|unit|d_over_t|p90|dnorm=1");
  EXPECT_EQ(to_string(parse_variant("raw|log1p|loglog1p|t_only|max|dnorm=1")), "raw|log1p|unit|t_only|max|dnorm=0");
  EXPECT_EQ(to_string(parse_variant("refined|log1p|loglog1p|d_only|max|dnorm=1")), "raw|unit|loglog1p|d_only|max|dnorm=1");
  for (const auto& s : {"", "raw|unit|unit|d_over_t|max", "raw|unit|unit|d_over_t|max|dnorm=2",
                        "cooked|unit|unit|d_over_t|max|dnorm=0", "raw|unit|unit|d_over_t|p50|dnorm=0"})
    EXPECT_THROW(parse_variant(s), Error) << s;
  for (const auto& v2 : enumerate_variants()) EXPECT_EQ(parse_variant(to_string(v2)), v2);
}

TEST(Estimate, ScalarEvaluation) {
  // Clear black scene seen through t = exp(-0.5) at d = 1 with Ls = A = 1:
  // the raw transmission recovers 1 - 0.95 (1 - t), and d/t pools to 1/that.
  const double t = std::exp(-0.5);
  const RasterImage img(20, 20, 3, 1.0 - t);
  const DepthMap depth(ScalarMap(20, 20, 1.0), 300.0);
  EstimatorVariant v{TransmissionKind::raw, Transform::unit, Transform::unit, Combine::d_over_t, Pool::mean, false};
  // With A fixed by the brightest pixel (= 1 - t), the ratio is 1 everywhere.
  const double expected = 1.0 / (1.0 - 0.95);
  EXPECT_NEAR(estimate(img, depth, v, {}, {}).value, expected, 1e-9);
  // Direct map evaluation of the same formula with t known.
  EXPECT_NEAR(score_maps(ScalarMap(20, 20, t), depth.map(), v), std::exp(0.5), 1e-12);
  EXPECT_NEAR(std::exp(0.5), 1.6487, 1e-4);
}

TEST(Estimate, IncreasesAcrossUniformStack) {
  const auto scene = make_procedural_scene(96, 72, 5);
  const auto levels = default_k_levels(scene.depth);
  const auto v = parse_variant("raw|log1p|log1p|d_over_t|max|dnorm=0");
  HazeCondition cond;
  double previous = -1.0;
  const double clear = estimate(scene.image, scene.depth, v, {}, {15, 1e-3}).value;
  double heaviest = 0.0;
  for (double k : levels) {
    cond.k = k;
    const double s = estimate(apply_haze(scene.image, scene.depth, cond), scene.depth, v, {}, {15, 1e-3}).value;
    EXPECT_GT(s, previous) << "k=" << k;
    previous = s;
    heaviest = s;
  }
  EXPECT_NE(clear, heaviest);
  EXPECT_LT(clear, heaviest);
}

TEST(Estimate, DeterministicAndValidated) {
  const auto scene = make_procedural_scene(64, 48, 6);
  for (const auto& v : {parse_variant("refined|loglog1p|log1p|t_times_d|p75|dnorm=1"),
                        parse_variant("raw|unit|unit|d_only|median|dnorm=1")}) {
    const auto a = estimate(scene.image, scene.depth, v, {}, {8, 1e-3});
    const auto b = estimate(scene.image, scene.depth, v, {}, {8, 1e-3});
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.variant, v);
  }
  EXPECT_THROW(estimate(scene.image, DepthMap(ScalarMap(3, 3, 1.0), 300.0), EstimatorVariant{}, {}, {}), Error);
}

TEST(Estimate, ScoreMapsAgreesWithComposition) {
  std::mt19937_64 rng(43);
  const auto t = oracle::random_map(rng, 11, 9, 0.01, 1.0);
  const auto d = oracle::random_map(rng, 11, 9, 0.0, 300.0);
  for (const auto& v : enumerate_variants()) {
    const double expected = pool(combine(transform(t, v.t_transform), transform(d, v.d_transform), v.combine), v.pool);
    EXPECT_EQ(score_maps(t, d, v), expected) << to_string(v);
  }
}

}  // namespace
