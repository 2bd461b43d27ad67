#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace clincon {

/// Mann-Whitney AUROC: (ordered pairs + 0.5 * tied pairs) / (n_pos * n_neg).
/// Labels must be 0/1 with both classes present.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct ConfusionMetrics {
  double accuracy = 0;
  double f1 = 0;
  double precision = 0;
  double sensitivity = 0;
  double specificity = 0;
};

/// Predictions are positive when score >= threshold. Ratios with an empty
/// denominator are reported as 0.
ConfusionMetrics confusion_metrics(std::span<const double> scores, std::span<const int> labels,
                                   double threshold = 0.5);

/// Mean over exactly the five studied biomarkers, keyed by name.
double average_over_biomarkers(const std::map<std::string, double>& values);

/// Mean of per-column AUROC over an N x 5 score / 0-1 target matrix.
double multilabel_auroc(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& targets);

struct TTestResult {
  double t = 0;
  double p = 1;
  double df = 0;
  bool significant = false;
};

/// Two-sided Welch (unequal variance, unpaired) t-test. When both samples
/// have zero variance, p is 1 for equal means and 0 otherwise.
TTestResult paired_t_test(std::span<const double> runs_a, std::span<const double> runs_b, double alpha = 0.05);

struct BiomarkerMetrics {
  double accuracy = 0;
  double f1 = 0;
  double auroc = 0;
  double precision = 0;
  double sensitivity = 0;
  double specificity = 0;

  bool operator==(const BiomarkerMetrics&) const = default;
};

BiomarkerMetrics biomarker_metrics(std::span<const double> scores, std::span<const int> labels,
                                   double threshold = 0.5);

struct MetricReport {
  std::map<std::string, BiomarkerMetrics> per_biomarker;
  std::optional<BiomarkerMetrics> averaged;  // only when all five are present
  std::optional<double> multilabel_auroc;
  std::uint64_t seed = 0;
  std::string model;  // free-form description of what was evaluated

  /// Fills `averaged` when all five studied biomarkers are present.
  void finalize();
  bool operator==(const MetricReport&) const = default;
};

nlohmann::json to_json(const MetricReport& r);
MetricReport metric_report_from_json(const nlohmann::json& j);

/// Name of the significance test recorded in comparison outputs.
inline constexpr const char* kSignificanceTest = "welch-unpaired-two-sided";

}  // namespace clincon
