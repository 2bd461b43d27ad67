#include "clincon/experiments.hpp"

#include <fstream>

#include "clincon/errors.hpp"
#include "clincon/parallel.hpp"
#include "clincon/rng.hpp"
#include "clincon/text.hpp"

namespace clincon {

MetricReport evaluate_classifier(const ClassifierState& model, const Dataset& test, std::uint64_t seed,
                                 std::string description) {
  if (model.target.kind == TargetKind::Categorical) {
    throw ConfigError("categorical models have no biomarker metrics");
  }
  if (test.empty()) throw DataError("test set is empty");
  const Eigen::MatrixXd p = predict(model, test);
  MetricReport report;
  report.seed = seed;
  report.model = std::move(description);

  auto column = [&](std::size_t biomarker, Eigen::Index col) {
    std::vector<double> scores(test.size());
    std::vector<int> labels(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (!test[i].biomarkers) throw DataError("test sample '" + test[i].id + "' has no biomarker labels");
      scores[i] = p(static_cast<Eigen::Index>(i), col);
      labels[i] = test[i].biomarkers->present(biomarker) ? 1 : 0;
    }
    try {
      report.per_biomarker[biomarker_name(biomarker)] = biomarker_metrics(scores, labels);
    } catch (const DataError& e) {
      throw DataError("biomarker " + biomarker_name(biomarker) + ": " + e.what());
    }
  };

  if (model.target.kind == TargetKind::Biomarker) {
    column(model.target.biomarker, 0);
  } else {
    for (std::size_t k = 0; k < kStudiedCount; ++k) column(k, static_cast<Eigen::Index>(k));
    report.multilabel_auroc = multilabel_auroc(p, targets_from(test, model.target).matrix);
  }
  report.finalize();
  return report;
}

double headline_auroc(const MetricReport& report) {
  if (report.multilabel_auroc) return *report.multilabel_auroc;
  if (report.per_biomarker.size() != 1) throw DataError("report has no single headline AUROC");
  return report.per_biomarker.begin()->second.auroc;
}

std::vector<AccessRow> run_access_sweep(std::shared_ptr<const EncoderState> enc, const Dataset& labeled,
                                        const Dataset& test, const Target& target, std::span<const double> fractions,
                                        std::span<const std::uint64_t> seeds, const HyperParams& hp) {
  if (fractions.empty() || seeds.empty()) throw ConfigError("access sweep needs fractions and seeds");
  for (double f : fractions) {
    if (!(f > 0 && f <= 1)) throw ConfigError("access fractions must lie in (0, 1]");
  }
  std::vector<AccessRow> rows(fractions.size() * seeds.size());
  parallel_for(rows.size(), [&](std::size_t i) {
    const double fraction = fractions[i / seeds.size()];
    const std::uint64_t seed = seeds[i % seeds.size()];
    const Dataset subset = subsample_fraction(labeled, fraction, derive_seed(seed, 0xacc5));
    const ClassifierState model = train_linear_probe(enc, subset, target, hp, derive_seed(seed, 0x9b0b));
    rows[i] = {fraction, seed, subset.size(), headline_auroc(evaluate_classifier(model, test, seed))};
  });
  return rows;
}

void write_access_csv(std::span<const AccessRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "fraction,seed,n_labeled,auroc\n";
  for (const auto& r : rows) {
    out << format_double(r.fraction) << ',' << r.seed << ',' << r.n_labeled << ',' << format_double(r.auroc) << '\n';
  }
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

}  // namespace clincon
