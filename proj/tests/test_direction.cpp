#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace prebim;
namespace pt = prebim::testing;

TEST(DirectionRatio, PopulationValuesFollowTheVarianceFormula) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Rng rng(seed);
    const auto draw = draw_scenario_params(pt::scenario(2, 2, 6, 100), rng);
    const auto& p = draw.params;
    const auto pop = population_moments(p);
    const PopulationLayout at{6};
    const double sd_ratio = std::sqrt(pop(at.x(), at.x()) / pop(at.y(), at.y()));
    const auto cm = CrossMoments::from_population(pop);
    for (auto j : draw.labels.valid_for_xy) {
      EXPECT_NEAR(direction_ratio(cm, j), std::abs(p.beta_xy) * sd_ratio, 1e-12);
      EXPECT_LT(direction_ratio(cm, j), 1.0);
    }
    for (auto j : draw.labels.valid_for_yx) {
      EXPECT_NEAR(direction_ratio(cm, j), sd_ratio / std::abs(p.beta_yx), 1e-12);
      EXPECT_GE(direction_ratio(cm, j), 1.0);
    }
  }
}

TEST(DirectionRatio, IrrelevantInstrumentThrows) {
  Eigen::MatrixXd g(4, 2);
  g << 1, 1, -1, 1, 1, -1, -1, -1;
  Eigen::VectorXd x(4);
  x << 1, 1, -1, -1;
  const auto data = Dataset::create(x, x, g, {}, false);
  EXPECT_THROW(direction_ratio(data, 0), IrrelevantInstrument);
  EXPECT_NEAR(direction_ratio(data, 1), 1.0, 1e-15);
  EXPECT_THROW(direction_ratio(data, 5), InvalidInput);
}

TEST(InferDirectionEffects, MotivatingExample) {
  const auto data = pt::simulate_params(motivating_example_params(), 100000, 3);
  const auto e = infer_direction_effects(data, IVSetCollection{{IndexSet{0, 2}}});
  EXPECT_EQ(e.assigned_xy, (IndexSet{0, 2}));
  EXPECT_TRUE(e.assigned_yx.empty());
  ASSERT_TRUE(e.beta_hat_xy.has_value());
  EXPECT_NEAR(*e.beta_hat_xy, 0.6, 0.05);
  EXPECT_FALSE(e.beta_hat_yx.has_value());
}

TEST(InferDirectionEffects, EmptyCollectionHasNoEstimates) {
  const auto data = pt::simulate_params(motivating_example_params(), 1000, 3);
  const auto e = infer_direction_effects(data, IVSetCollection{});
  EXPECT_FALSE(e.beta_hat_xy.has_value());
  EXPECT_FALSE(e.beta_hat_yx.has_value());
  EXPECT_TRUE(e.assigned_xy.empty());
  EXPECT_TRUE(e.assigned_yx.empty());
}

// Given the true sets, estimates equal TSLS over each true set whenever every
// variant lands on its own side. Misassignments come from population ratios
// close to 1 and stay a minority at n = 10^4.
TEST(InferDirectionEffects, TrueSetsGiveAccurateEffects) {
  double se_xy = 0.0, se_yx = 0.0;
  int close = 0, sorted = 0;
  const int reps = 100;
  for (int r = 0; r < reps; ++r) {
    const auto d = pt::draw_and_simulate(pt::scenario(2, 2, 6, 10000), 40 + static_cast<std::uint64_t>(r));
    const auto& labels = d.truth.labels;
    const auto& data = d.sim.dataset;
    const double ref_xy = pt::reference_tsls(data.x(), data.y(), pt::columns(data.genotypes(), labels.valid_for_xy));
    const double ref_yx = pt::reference_tsls(data.y(), data.x(), pt::columns(data.genotypes(), labels.valid_for_yx));
    const double dx = ref_xy - d.truth.params.beta_xy;
    const double dy = ref_yx - d.truth.params.beta_yx;
    se_xy += dx * dx;
    se_yx += dy * dy;
    close += (std::abs(dx) < 0.15 && std::abs(dy) < 0.15) ? 1 : 0;

    const auto e = infer_direction_effects(data, IVSetCollection{{labels.valid_for_xy, labels.valid_for_yx}});
    if (e.assigned_xy == labels.valid_for_xy && e.assigned_yx == labels.valid_for_yx) {
      ++sorted;
      ASSERT_TRUE(e.beta_hat_xy && e.beta_hat_yx);
      EXPECT_NEAR(*e.beta_hat_xy, ref_xy, 1e-10);
      EXPECT_NEAR(*e.beta_hat_yx, ref_yx, 1e-10);
    }
  }
  EXPECT_LT(se_xy / reps, 0.01);
  EXPECT_LT(se_yx / reps, 0.01);
  EXPECT_GE(close, 95);
  EXPECT_GE(sorted, 75);
}

TEST(InferDirectionEffects, AssignmentsAreExclusiveAndScaleInvariant) {
  for (std::uint64_t seed = 60; seed < 80; ++seed) {
    const auto d = pt::draw_and_simulate(pt::scenario(2, 2, 6, 3000), seed);
    const auto& data = d.sim.dataset;
    const IVSetCollection sets{{IndexSet{0, 1, 4}, IndexSet{2, 3, 5}}};
    const auto e = infer_direction_effects(data, sets);
    EXPECT_TRUE(set_intersection(e.assigned_xy, e.assigned_yx).empty());
    EXPECT_EQ(set_union(set_union(e.assigned_xy, e.assigned_yx), e.dropped), sets.all());

    Eigen::MatrixXd scaled = data.genotypes();
    scaled.col(1) *= 7.5;
    scaled.col(3) *= 0.02;
    const auto rescaled = Dataset::create(data.x(), data.y(), scaled);
    const auto f = infer_direction_effects(rescaled, sets);
    EXPECT_EQ(e.assigned_xy, f.assigned_xy);
    EXPECT_EQ(e.assigned_yx, f.assigned_yx);
  }
}

TEST(InferDirectionEffects, PopulationClassificationIsExact) {
  for (std::uint64_t seed = 300; seed < 500; ++seed) {
    Rng rng(seed);
    const auto draw = draw_scenario_params(pt::scenario(3, 3, 8, 100), rng);
    const auto cm = CrossMoments::from_population(population_moments(draw.params));
    for (auto j : draw.labels.valid_for_xy) EXPECT_LT(direction_ratio(cm, j), 1.0);
    for (auto j : draw.labels.valid_for_yx) EXPECT_GE(direction_ratio(cm, j), 1.0);
  }
}

TEST(InferDirectionEffects, PerSetMajorityAssignsWholeSets) {
  for (std::uint64_t seed = 90; seed < 100; ++seed) {
    const auto d = pt::draw_and_simulate(pt::scenario(2, 2, 6, 5000), seed);
    const auto& labels = d.truth.labels;
    // A deliberately mixed set: two X -> Y instruments and one Y -> X.
    const IVSetCollection sets{{set_union(labels.valid_for_xy, IndexSet{labels.valid_for_yx.front()})}};
    DirectionOptions majority;
    majority.per_set_majority = true;
    const auto e = infer_direction_effects(d.sim.dataset, sets, majority);
    EXPECT_TRUE(e.assigned_xy.empty() || e.assigned_yx.empty());
    const auto per_variant = infer_direction_effects(d.sim.dataset, sets);
    if (!per_variant.assigned_xy.empty() && !per_variant.assigned_yx.empty()) {
      EXPECT_EQ(per_variant.split_sets, std::vector<std::size_t>{0});
    }
  }
}
