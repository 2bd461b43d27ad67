#include <doctest.h>

#include <cmath>

#include "clincon/errors.hpp"
#include "helpers.hpp"

using namespace clincon;

TEST_CASE("cohort generation is deterministic") {
  const auto cfg = testing::small_cohort(11);
  const Cohort a = generate_cohort(cfg);
  const Cohort b = generate_cohort(cfg);
  CHECK(a.dataset == b.dataset);
  CHECK(a.dataset.size() == cfg.n_eyes * cfg.visits_per_eye);
  auto other = cfg;
  other.seed = 12;
  CHECK(!(generate_cohort(other).dataset == a.dataset));
}

TEST_CASE("flags follow severity exactly without flips") {
  const auto cfg = testing::small_cohort(3);
  const Cohort c = generate_cohort(cfg);
  std::size_t row = 0;
  for (std::size_t e = 0; e < cfg.n_eyes; ++e) {
    for (std::size_t v = 0; v < cfg.visits_per_eye; ++v, ++row) {
      const double s = c.truth.severity[e][v];
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
      for (std::size_t k = 0; k < cfg.biomarkers.size(); ++k) {
        const auto idx = *biomarker_index(cfg.biomarkers[k].name);
        CHECK(c.dataset[row].biomarkers->present(idx) == (s > cfg.biomarkers[k].threshold));
      }
    }
  }
}

TEST_CASE("noiseless clinical values follow the severity formula") {
  auto cfg = testing::small_cohort(5);
  cfg.bcva_sigma = 0;
  cfg.cst_sigma = 0;
  const Cohort c = generate_cohort(cfg);
  std::size_t row = 0;
  for (std::size_t e = 0; e < cfg.n_eyes; ++e) {
    for (std::size_t v = 0; v < cfg.visits_per_eye; ++v, ++row) {
      const double s = c.truth.severity[e][v];
      CHECK(c.dataset[row].clinical.bcva == static_cast<int>(std::lround(100 * (1 - s))));
      CHECK(c.dataset[row].clinical.cst == static_cast<int>(std::lround(250 + 400 * s)));
    }
  }
}

TEST_CASE("present groups have higher CST and the check reports no violations") {
  auto cfg = testing::small_cohort(8, 60);
  cfg.severity_noise = 0;
  cfg.bcva_sigma = 0;
  cfg.cst_sigma = 0;
  const Cohort c = generate_cohort(cfg);
  const auto report = ground_truth_check(c.dataset, c.truth);
  CHECK(report.violations.empty());
  for (const auto& g : report.biomarkers) {
    CHECK(g.cst_separation() > 0);
    CHECK(g.flag_mismatches == 0);
  }
}

TEST_CASE("flipped labels are reported, not rejected") {
  auto cfg = testing::small_cohort(8, 60);
  for (auto& b : cfg.biomarkers) b.flip_prob = 0.4;
  const Cohort c = generate_cohort(cfg);
  const auto report = ground_truth_check(c.dataset, c.truth);
  std::size_t mismatches = 0;
  for (const auto& g : report.biomarkers) mismatches += g.flag_mismatches;
  CHECK(mismatches > 0);
}

TEST_CASE("ground truth check rejects a reordered dataset") {
  const Cohort c = generate_cohort(testing::small_cohort(2));
  std::vector<std::size_t> order(c.dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = order.size() - 1 - i;
  const Dataset reversed = c.dataset.subset(order, c.dataset.provenance());
  CHECK_THROWS_AS(ground_truth_check(reversed, c.truth), DataError);
}

TEST_CASE("effect dimensions respect granularity") {
  const auto cfg = testing::small_cohort(1);
  const Cohort c = generate_cohort(cfg);
  for (std::size_t k = 0; k < cfg.biomarkers.size(); ++k) {
    const double frac = double(c.truth.effect_dims[k].size()) / double(cfg.payload_dim);
    if (cfg.biomarkers[k].granularity == Granularity::Low) CHECK(frac >= 0.25);
    else CHECK(frac <= 0.05);
  }
}

TEST_CASE("invalid configs are rejected") {
  auto cfg = testing::small_cohort(1);
  cfg.biomarkers[4].effect_dims = 10;  // high granularity over 5%
  CHECK_THROWS_AS(generate_cohort(cfg), ConfigError);
  cfg = testing::small_cohort(1);
  cfg.biomarkers[0].flip_prob = 0.5;
  CHECK_THROWS_AS(generate_cohort(cfg), ConfigError);
  cfg = testing::small_cohort(1);
  cfg.biomarkers[0].name = "XYZ";
  CHECK_THROWS_AS(generate_cohort(cfg), ConfigError);
}

TEST_CASE("config and ground truth JSON round trip") {
  auto cfg = testing::small_cohort(21);
  cfg.nuisance_rank = 3;
  cfg.nuisance_sigma = 0.5;
  const CohortConfig back = cohort_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  auto j = to_json(cfg);
  j["bogus"] = 1;
  CHECK_THROWS_AS(cohort_config_from_json(j), ConfigError);

  const Cohort c = generate_cohort(cfg);
  const GroundTruth gt = ground_truth_from_json(to_json(c.truth));
  CHECK(gt.severity == c.truth.severity);
  CHECK(gt.sample_order_hash == c.truth.sample_order_hash);
  CHECK_NOTHROW(ground_truth_check(c.dataset, gt));
}

TEST_CASE("a cohort reloaded from its manifest still matches its truth") {
  const Cohort c = generate_cohort(testing::small_cohort(4));
  testing::TempDir dir("cohort");
  const Dataset back = load_manifest(write_manifest(c.dataset, dir.path()));
  CHECK_NOTHROW(ground_truth_check(back, c.truth));
}
