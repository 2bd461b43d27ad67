#include <doctest.h>

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "clincon/errors.hpp"
#include "clincon/theory.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace clincon;

TEST_CASE("latent tasks") {
  const LatentTask t = sample_latent_task(2, {}, 8, 0.5, 3);
  CHECK(t.rho == std::vector<double>{0.5, 0.5});
  for (Eigen::Index c = 0; c < 2; ++c) CHECK(t.means.row(c).norm() == doctest::Approx(1.0).epsilon(1e-14));
  const LatentTask again = sample_latent_task(2, {}, 8, 0.5, 3);
  CHECK(again.means == t.means);
  CHECK_THROWS_AS(sample_latent_task(2, std::vector<double>{0.5, 0.6}, 8, 0.5, 3), ConfigError);
  CHECK_THROWS_AS(sample_latent_task(2, std::vector<double>{1.5, -0.5}, 8, 0.5, 3), ConfigError);
  CHECK_THROWS_AS(sample_latent_task(1, {}, 8, 0.5, 3), ConfigError);
}

TEST_CASE("clinical proxy tables") {
  const LatentTask t = sample_latent_task(2, {}, 4, 0.5, 1);
  const ClinicalProxy exact = make_clinical_proxy(t, 0.0);
  CHECK(exact.q == Eigen::MatrixXd::Identity(2, 2));
  CHECK(exact.rho_clin == t.rho);
  const ClinicalProxy half = make_clinical_proxy(t, 0.5);
  CHECK(half.rho_clin[0] == doctest::Approx(0.5));
  CHECK(half.rho_clin[1] == doctest::Approx(0.5));
  CHECK_THROWS_AS(make_clinical_proxy(t, 1.0), ConfigError);
  CHECK_THROWS_AS(make_clinical_proxy(t, -0.1), ConfigError);

  const LatentTask t4 = sample_latent_task(4, std::vector<double>{0.1, 0.2, 0.3, 0.4}, 4, 0.5, 1);
  const ClinicalProxy near = make_clinical_proxy(t4, 0.999);
  for (Eigen::Index r = 0; r < 4; ++r) CHECK(near.q.row(r).sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("kl divergence") {
  const std::vector<double> p = {0.5, 0.5};
  CHECK(kl_divergence(p, p) == 0.0);
  const double expected = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  CHECK(kl_divergence(p, std::vector<double>{0.25, 0.75}) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(0.14384).epsilon(1e-4));
  CHECK(kl_divergence(std::vector<double>{0.0, 1.0}, std::vector<double>{0.5, 0.5}) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(kl_divergence(p, std::vector<double>{1.0, 0.0}), ConfigError);
}

TEST_CASE("collision probability against enumeration") {
  const LatentTask t = sample_latent_task(4, {}, 4, 0.5, 1);
  const double expected[] = {1.0, 0.65333333333333333, 0.41333333333333333, 0.28, 0.25333333333333333};
  const double eps[] = {0.0, 0.2, 0.4, 0.6, 0.8};
  double prev = 2.0;
  for (int i = 0; i < 5; ++i) {
    const ClinicalProxy p = make_clinical_proxy(t, eps[i]);
    const double closed = collision_probability(t, p);
    CHECK(closed == doctest::Approx(expected[i]).epsilon(1e-12));
    CHECK(closed == doctest::Approx(oracle::collision(t.rho, p.q)).epsilon(1e-12));
    CHECK(closed <= prev);
    prev = closed;
    CHECK(collision_rate(t, p, 20000, 5) == doctest::Approx(closed).epsilon(0.05));
  }
  CHECK(collision_rate(t, make_clinical_proxy(t, 0.0), 1000, 1) == 1.0);

  // non-uniform prior
  const LatentTask skew = sample_latent_task(3, std::vector<double>{0.6, 0.3, 0.1}, 4, 0.5, 1);
  const ClinicalProxy sp = make_clinical_proxy(skew, 0.45);
  CHECK(collision_probability(skew, sp) == doctest::Approx(oracle::collision(skew.rho, sp.q)).epsilon(1e-12));

  // K = 2 with a full flip: the pseudo label is a permutation of the class
  Eigen::MatrixXd flip(2, 2);
  flip << 0, 1, 1, 0;
  const LatentTask t2 = sample_latent_task(2, {}, 4, 0.5, 1);
  const ClinicalProxy swapped = clinical_proxy_from_table(t2, flip);
  CHECK(collision_probability(t2, swapped) == doctest::Approx(oracle::collision(t2.rho, flip)).epsilon(1e-15));
  CHECK(collision_probability(t2, swapped) == 1.0);
  CHECK(collision_rate(t2, swapped, 500, 2) == 1.0);
}

TEST_CASE("collision rate is deterministic per seed") {
  const LatentTask t = sample_latent_task(3, {}, 4, 0.5, 1);
  const ClinicalProxy p = make_clinical_proxy(t, 0.3);
  CHECK(collision_rate(t, p, 3000, 4) == collision_rate(t, p, 3000, 4));
}

TEST_CASE("loss decomposition") {
  const LatentTask t = sample_latent_task(3, {}, 6, 0.4, 2);
  const Embedding f = random_linear_map(6, 5, 9);

  const DecompositionReport exact = decompose_loss(f, t, make_clinical_proxy(t, 0.0), 500, 0.5, 1);
  CHECK(exact.tau_coll == 1.0);
  REQUIRE(exact.l_eq);
  CHECK(exact.l_un == *exact.l_eq);
  CHECK(!exact.l_neq);
  CHECK(!exact.residual);

  std::ifstream in(std::string(CLINCON_FIXTURE_DIR) + "/decomposition.json");
  const auto fx = nlohmann::json::parse(in);
  const LatentTask task = sample_latent_task(3, {}, fx["dim"], fx["sigma"], fx["task_seed"]);
  const Embedding g = random_linear_map(fx["dim"], fx["out_dim"], fx["map_seed"]);
  const DecompositionReport r = decompose_loss(g, task, make_clinical_proxy(task, fx["eps"]), fx["n_pairs"],
                                               fx["tau"], fx["seed"]);
  REQUIRE(r.residual);
  CHECK(*r.residual <= 1e-12);
  CHECK(r.n_eq + r.n_neq == 10000);
  CHECK(r.tau_coll == static_cast<double>(r.n_eq) / 10000.0);
  CHECK(r.n_eq == fx["n_eq"].get<std::size_t>());
  CHECK(r.l_un == doctest::Approx(fx["l_un"].get<double>()).epsilon(1e-12));
  CHECK(*r.l_eq == doctest::Approx(fx["l_eq"].get<double>()).epsilon(1e-12));
  CHECK(*r.l_neq == doctest::Approx(fx["l_neq"].get<double>()).epsilon(1e-12));

  const Embedding not_unit = [](const Eigen::MatrixXd& x) { return Eigen::MatrixXd(2 * x); };
  CHECK_THROWS_AS(decompose_loss(not_unit, t, make_clinical_proxy(t, 0.2), 10, 0.5, 1), ConfigError);
}

TEST_CASE("spearman correlation") {
  CHECK(spearman_correlation(std::vector<double>{1, 2, 3}, std::vector<double>{10, 20, 30}) == doctest::Approx(1.0));
  CHECK(spearman_correlation(std::vector<double>{1, 2, 3, 4}, std::vector<double>{4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman_correlation(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}) == doctest::Approx(0.8));
  // ties take average ranks: ranks y = (1.5, 1.5, 3) against (1, 2, 3)
  CHECK(spearman_correlation(std::vector<double>{1, 2, 3}, std::vector<double>{5, 5, 9}) ==
        doctest::Approx(0.8660254037844386));
  CHECK_THROWS_AS(spearman_correlation(std::vector<double>{1, 1}, std::vector<double>{1, 2}), ConfigError);
}

TEST_CASE("small proxy sweep is deterministic and well formed") {
  SweepConfig cfg;
  cfg.classes = 3;
  cfg.dim = 8;
  cfg.n_train = 96;
  cfg.n_probe = 24;
  cfg.n_test = 60;
  cfg.collision_pairs = 500;
  cfg.hyper.epochs = 1;
  cfg.hyper.batch_size = 32;
  cfg.probe.epochs = 5;
  cfg.encoder = {{8}, 0, 8};
  const std::vector<double> eps = {0.0, 0.3, 0.6};
  const std::vector<std::uint64_t> seeds = {1, 2};
  const auto rows = run_proxy_sweep(eps, cfg, seeds);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].eps == 0.0);
  CHECK(rows[0].seed == 1);
  CHECK(rows[1].seed == 2);
  CHECK(rows[0].tau_coll == 1.0);
  CHECK(rows[0].kl_marginal == 0.0);
  for (const auto& r : rows) {
    CHECK(r.probe_accuracy >= 0.0);
    CHECK(r.probe_accuracy <= 1.0);
    // symmetric corruption of a uniform prior leaves the marginal unchanged
    CHECK(std::abs(r.kl_marginal) < 1e-12);
  }
  CHECK(run_proxy_sweep(eps, cfg, seeds) == rows);
  const auto avg = average_sweep(rows);
  REQUIRE(avg.size() == 3);
  CHECK(avg[1].probe_accuracy == doctest::Approx((rows[2].probe_accuracy + rows[3].probe_accuracy) / 2));

  testing::TempDir dir("sweep");
  write_sweep_csv(rows, dir / "s.csv");
  const std::string text = testing::slurp(dir / "s.csv");
  CHECK(text.rfind("eps,kl_marginal,tau_coll,probe_accuracy,seed\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 7);
  CHECK_THROWS_AS(run_proxy_sweep(std::vector<double>{0.0, 0.5}, cfg, seeds), ConfigError);
}
