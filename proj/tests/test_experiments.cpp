#include <doctest.h>

#include "clincon/errors.hpp"
#include "clincon/experiments.hpp"
#include "helpers.hpp"

using namespace clincon;

namespace {

struct Setup {
  Dataset train, test;
  std::shared_ptr<const EncoderState> enc;
};

const Setup& setup() {
  static const Setup s = [] {
    const Dataset ds = generate_cohort(testing::small_cohort(41, 40)).dataset;
    Split sp = split_by_identity(ds, IdentityKey::Eye, 12, 2);
    auto enc = std::make_shared<const EncoderState>(
        pretrain_contrastive(sp.train, parse_loss_spec("cst@10+eye"), testing::fast_hyper(), testing::small_encoder(), 1));
    return Setup{sp.train, sp.test, enc};
  }();
  return s;
}

}  // namespace

TEST_CASE("multi-label evaluation reports every biomarker and their averages") {
  const auto& s = setup();
  const auto model = train_linear_probe(s.enc, s.train, Target::multilabel(), testing::fast_hyper(), 3);
  const MetricReport r = evaluate_classifier(model, s.test, 3, "probe");
  CHECK(r.per_biomarker.size() == 5);
  REQUIRE(r.averaged);
  REQUIRE(r.multilabel_auroc);
  double mean = 0;
  for (const auto& [name, m] : r.per_biomarker) {
    mean += m.auroc;
    for (double v : {m.accuracy, m.f1, m.auroc, m.precision, m.sensitivity, m.specificity}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK(r.averaged->auroc == doctest::Approx(mean / 5).epsilon(1e-14));
  CHECK(*r.multilabel_auroc == doctest::Approx(mean / 5).epsilon(1e-14));
  CHECK(headline_auroc(r) == *r.multilabel_auroc);
  CHECK(evaluate_classifier(model, s.test, 3, "probe") == r);
}

TEST_CASE("single-biomarker evaluation") {
  const auto& s = setup();
  const auto model = train_linear_probe(s.enc, s.train, Target::single("IRF"), testing::fast_hyper(), 3);
  const MetricReport r = evaluate_classifier(model, s.test);
  CHECK(r.per_biomarker.size() == 1);
  CHECK(!r.averaged);
  CHECK(headline_auroc(r) == r.per_biomarker.at("IRF").auroc);
  CHECK_THROWS_AS(evaluate_classifier(model, Dataset()), DataError);
}

TEST_CASE("access sweep ordering, sizes and determinism") {
  const auto& s = setup();
  const std::uint64_t before = encoder_checksum(*s.enc);
  const std::vector<double> fr = {0.25, 0.5, 1.0};
  const std::vector<std::uint64_t> seeds = {1, 2};
  const auto rows = run_access_sweep(s.enc, s.train, s.test, Target::single("IRF"), fr, seeds, testing::fast_hyper());
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].fraction == 0.25);
  CHECK(rows[1].seed == 2);
  CHECK(rows[0].n_labeled == static_cast<std::size_t>(0.25 * s.train.size()));
  CHECK(rows[5].n_labeled == s.train.size());
  CHECK(encoder_checksum(*s.enc) == before);
  CHECK(run_access_sweep(s.enc, s.train, s.test, Target::single("IRF"), fr, seeds, testing::fast_hyper()) == rows);
  CHECK_THROWS_AS(run_access_sweep(s.enc, s.train, s.test, Target::single("IRF"), std::vector<double>{0.0}, seeds,
                                   testing::fast_hyper()),
                  ConfigError);

  testing::TempDir dir("access");
  write_access_csv(rows, dir / "a.csv");
  CHECK(testing::slurp(dir / "a.csv").rfind("fraction,seed,n_labeled,auroc\n", 0) == 0);
}
