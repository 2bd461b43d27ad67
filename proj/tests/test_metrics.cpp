#include <doctest.h>

#include "clincon/data_model.hpp"
#include "clincon/errors.hpp"
#include "clincon/metrics.hpp"
#include "clincon/rng.hpp"
#include "oracles.hpp"

using namespace clincon;

TEST_CASE("auroc examples") {
  CHECK(auroc(std::vector<double>{.9, .8, .2, .1}, std::vector<int>{1, 1, 0, 0}) == 1.0);
  CHECK(auroc(std::vector<double>{.5, .5, .5, .5}, std::vector<int>{1, 0, 1, 0}) == 0.5);
  CHECK(auroc(std::vector<double>{.9, .4, .6, .1}, std::vector<int>{1, 0, 0, 1}) == 0.5);
  CHECK_THROWS_AS(auroc(std::vector<double>{.1, .2}, std::vector<int>{1, 1}), DataError);
  CHECK_THROWS_AS(auroc(std::vector<double>{.1, .2}, std::vector<int>{1, 2}), DataError);
}

TEST_CASE("auroc properties") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.index(60);
    std::vector<double> s(n);
    std::vector<int> y(n), flipped(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.index(6)) / 5.0;  // plenty of ties
      y[i] = static_cast<int>(rng.index(2));
    }
    y[0] = 1;
    y[1] = 0;
    for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - y[i];
    const double a = auroc(s, y);
    CHECK(a == oracle::auroc(s, y));
    CHECK(a + auroc(s, flipped) == doctest::Approx(1.0).epsilon(1e-15));
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3 * s[i]) - 7;
    CHECK(auroc(t, y) == a);
  }
}

TEST_CASE("confusion metrics") {
  const std::vector<double> s = {.9, .8, .7, .3, .2, .1};
  const std::vector<int> y = {1, 1, 0, 1, 0, 0};  // TP 2, FP 1, FN 1, TN 2
  const auto m = confusion_metrics(s, y);
  CHECK(m.precision == doctest::Approx(2.0 / 3));
  CHECK(m.sensitivity == doctest::Approx(2.0 / 3));
  CHECK(m.f1 == doctest::Approx(2.0 / 3));
  CHECK(m.accuracy == doctest::Approx(4.0 / 6));
  CHECK(m.specificity == doctest::Approx(2.0 / 3));

  const auto perfect = confusion_metrics(std::vector<double>{1, 0}, std::vector<int>{1, 0});
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.specificity == 1.0);

  const auto negative = confusion_metrics(std::vector<double>{.1, .2}, std::vector<int>{1, 0});
  CHECK(negative.sensitivity == 0.0);
  CHECK(negative.specificity == 1.0);
  CHECK(negative.precision == 0.0);
  CHECK(negative.f1 == 0.0);
}

TEST_CASE("accuracy decomposes into sensitivity and specificity") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(40);
    std::vector<double> s(n);
    std::vector<int> y(n);
    double pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform();
      y[i] = static_cast<int>(rng.index(2));
      pos += y[i];
    }
    const auto m = confusion_metrics(s, y);
    for (double v : {m.accuracy, m.f1, m.precision, m.sensitivity, m.specificity}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    // exact when both classes exist; otherwise the empty ratio is defined as 0
    if (pos > 0 && pos < n) {
      CHECK(m.accuracy == doctest::Approx((m.sensitivity * pos + m.specificity * (n - pos)) / n).epsilon(1e-15));
    }
  }
}

TEST_CASE("averages over the studied biomarkers") {
  CHECK(average_over_biomarkers({{"IRF", 1}, {"DME", 0}, {"IRHRF", 0}, {"FAVF", 0}, {"PAVF", 0}}) ==
        doctest::Approx(0.2));
  CHECK(average_over_biomarkers({{"IRF", .7}, {"DME", .7}, {"IRHRF", .7}, {"FAVF", .7}, {"PAVF", .7}}) ==
        doctest::Approx(0.7));
  CHECK_THROWS_AS(average_over_biomarkers({{"IRF", 1}, {"DME", 0}}), DataError);
}

TEST_CASE("multilabel auroc") {
  Eigen::MatrixXd t(4, 5), s(4, 5);
  t << 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0;
  s.setConstant(0.3);
  s.col(0) << .9, .8, .2, .1;
  CHECK(multilabel_auroc(s, t) == doctest::Approx(0.6));
  t.col(3).setOnes();
  try {
    multilabel_auroc(s, t);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("FAVF") != std::string::npos);
  }
}

TEST_CASE("welch test") {
  const auto r = paired_t_test(std::vector<double>{.80, .81, .79}, std::vector<double>{.70, .71, .69});
  // frozen from the Simpson-integrated oracle
  CHECK(r.t == doctest::Approx(12.247448713915917).epsilon(1e-12));
  CHECK(r.df == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(r.p == doctest::Approx(2.5521674947581729e-4).epsilon(1e-8));
  CHECK(r.significant);

  const auto o = oracle::welch({.8, .7, .75, .9}, {.6, .72, .65});
  const auto r2 = paired_t_test(std::vector<double>{.8, .7, .75, .9}, std::vector<double>{.6, .72, .65});
  CHECK(r2.t == doctest::Approx(o.t).epsilon(1e-12));
  CHECK(r2.df == doctest::Approx(o.df).epsilon(1e-12));
  CHECK(r2.p == doctest::Approx(o.p).epsilon(1e-8));
  CHECK(!r2.significant);

  const auto same = paired_t_test(std::vector<double>{.5, .5}, std::vector<double>{.5, .5});
  CHECK(same.p == 1.0);
  CHECK(!same.significant);
  const auto apart = paired_t_test(std::vector<double>{0, 0, 0}, std::vector<double>{1, 1, 1});
  CHECK(apart.p == 0.0);
  CHECK(apart.significant);
  CHECK_THROWS_AS(paired_t_test(std::vector<double>{1}, std::vector<double>{1, 2}), ConfigError);
}

TEST_CASE("metric reports serialise and average") {
  MetricReport r;
  r.seed = 3;
  r.model = "probe";
  double v = 0.5;
  for (auto name : kStudiedBiomarkers) {
    BiomarkerMetrics m;
    m.auroc = v;
    m.accuracy = v / 2;
    r.per_biomarker[std::string(name)] = m;
    v += 0.1;
  }
  r.multilabel_auroc = 0.77;
  r.finalize();
  REQUIRE(r.averaged);
  CHECK(r.averaged->auroc == doctest::Approx(0.7));
  CHECK(r.averaged->accuracy == doctest::Approx(0.35));
  const MetricReport back = metric_report_from_json(to_json(r));
  CHECK(back == r);
  CHECK(to_json(back).dump() == to_json(r).dump());
}
