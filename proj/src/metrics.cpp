#include "clincon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "clincon/data_model.hpp"
#include "clincon/errors.hpp"
#include "clincon/json_util.hpp"

namespace clincon {

namespace {

void check_binary(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw DataError("got " + std::to_string(scores.size()) + " scores for " + std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("label at position " + std::to_string(i) + " is not 0/1");
    if (std::isnan(scores[i])) throw DataError("score at position " + std::to_string(i) + " is NaN");
  }
}

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_binary(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Counted in half-pair units so ties stay integral.
  std::uint64_t half_pairs = 0, neg_below = 0, n_pos = 0, n_neg = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start;
    std::uint64_t pos = 0, neg = 0;
    while (end < n && scores[order[end]] == scores[order[start]]) {
      (labels[order[end]] ? pos : neg)++;
      ++end;
    }
    half_pairs += 2 * pos * neg_below + pos * neg;
    neg_below += neg;
    n_pos += pos;
    n_neg += neg;
    start = end;
  }
  if (n_pos == 0 || n_neg == 0) throw DataError("auroc needs both positive and negative labels");
  return static_cast<double>(half_pairs) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

ConfusionMetrics confusion_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_binary(scores, labels);
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i]) {
      (pred ? tp : fn) += 1;
    } else {
      (pred ? fp : tn) += 1;
    }
  }
  ConfusionMetrics m;
  m.accuracy = ratio(tp + tn, tp + tn + fp + fn);
  m.precision = ratio(tp, tp + fp);
  m.sensitivity = ratio(tp, tp + fn);
  m.specificity = ratio(tn, tn + fp);
  m.f1 = ratio(2 * m.precision * m.sensitivity, m.precision + m.sensitivity);
  return m;
}

double average_over_biomarkers(const std::map<std::string, double>& values) {
  double sum = 0;
  for (auto name : kStudiedBiomarkers) {
    auto it = values.find(std::string(name));
    if (it == values.end()) throw DataError("missing biomarker '" + std::string(name) + "' in average");
    sum += it->second;
  }
  if (values.size() != kStudiedCount) throw DataError("average expects exactly the five studied biomarkers");
  return sum / static_cast<double>(kStudiedCount);
}

double multilabel_auroc(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& targets) {
  if (scores.rows() != targets.rows() || scores.cols() != targets.cols()) {
    throw DataError("score and target matrices differ in shape");
  }
  if (scores.cols() == 0) throw DataError("multilabel_auroc needs at least one column");
  double sum = 0;
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    std::vector<double> s(static_cast<std::size_t>(scores.rows()));
    std::vector<int> l(s.size());
    std::size_t pos = 0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      s[static_cast<std::size_t>(i)] = scores(i, c);
      l[static_cast<std::size_t>(i)] = targets(i, c) != 0 ? 1 : 0;
      pos += static_cast<std::size_t>(l[static_cast<std::size_t>(i)]);
    }
    if (pos == 0 || pos == s.size()) {
      const std::string name = scores.cols() == static_cast<Eigen::Index>(kStudiedCount)
                                    ? biomarker_name(static_cast<std::size_t>(c))
                                    : std::to_string(c);
      throw DataError("multi-label column " + name + " has a single class");
    }
    sum += auroc(s, l);
  }
  return sum / static_cast<double>(scores.cols());
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b, double alpha) {
  if (a.size() < 2 || b.size() < 2) throw ConfigError("t-test needs at least 2 runs per group");
  auto moments = [](std::span<const double> x) {
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double ss = 0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return std::pair{mean, ss / (n - 1)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double sa = va / na, sb = vb / nb;

  TTestResult r;
  if (sa + sb == 0) {
    r.p = ma == mb ? 1.0 : 0.0;
    r.t = ma == mb ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), ma - mb);
    r.df = na + nb - 2;
  } else {
    r.t = (ma - mb) / std::sqrt(sa + sb);
    r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1) + sb * sb / (nb - 1));
    const boost::math::students_t dist(r.df);
    r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
    r.p = std::min(1.0, r.p);
  }
  r.significant = r.p < alpha;
  return r;
}

BiomarkerMetrics biomarker_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
  const ConfusionMetrics c = confusion_metrics(scores, labels, threshold);
  return {c.accuracy, c.f1, auroc(scores, labels), c.precision, c.sensitivity, c.specificity};
}

void MetricReport::finalize() {
  averaged.reset();
  for (auto name : kStudiedBiomarkers) {
    if (!per_biomarker.contains(std::string(name))) return;
  }
  if (per_biomarker.size() != kStudiedCount) return;
  auto avg = [&](double BiomarkerMetrics::*field) {
    std::map<std::string, double> v;
    for (const auto& [k, m] : per_biomarker) v[k] = m.*field;
    return average_over_biomarkers(v);
  };
  averaged = BiomarkerMetrics{avg(&BiomarkerMetrics::accuracy),  avg(&BiomarkerMetrics::f1),
                              avg(&BiomarkerMetrics::auroc),     avg(&BiomarkerMetrics::precision),
                              avg(&BiomarkerMetrics::sensitivity), avg(&BiomarkerMetrics::specificity)};
}

namespace {

nlohmann::json to_json(const BiomarkerMetrics& m) {
  return {{"accuracy", m.accuracy},   {"f1", m.f1},
          {"auroc", m.auroc},         {"precision", m.precision},
          {"sensitivity", m.sensitivity}, {"specificity", m.specificity}};
}

BiomarkerMetrics biomarker_metrics_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"accuracy", "f1", "auroc", "precision", "sensitivity", "specificity"}, "biomarker metrics");
  BiomarkerMetrics m;
  try {
    m.accuracy = j.at("accuracy").get<double>();
    m.f1 = j.at("f1").get<double>();
    m.auroc = j.at("auroc").get<double>();
    m.precision = j.at("precision").get<double>();
    m.sensitivity = j.at("sensitivity").get<double>();
    m.specificity = j.at("specificity").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("incomplete biomarker metrics: ") + e.what());
  }
  return m;
}

}  // namespace

nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j;
  j["per_biomarker"] = nlohmann::json::object();
  for (const auto& [k, m] : r.per_biomarker) j["per_biomarker"][k] = to_json(m);
  if (r.averaged) j["averaged"] = to_json(*r.averaged);
  if (r.multilabel_auroc) j["multilabel_auroc"] = *r.multilabel_auroc;
  j["seed"] = r.seed;
  j["model"] = r.model;
  j["threshold"] = 0.5;
  return j;
}

MetricReport metric_report_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"per_biomarker", "averaged", "multilabel_auroc", "seed", "model", "threshold"},
                     "metric report");
  MetricReport r;
  try {
    for (const auto& [k, m] : j.at("per_biomarker").items()) r.per_biomarker[k] = biomarker_metrics_from_json(m);
    if (j.contains("averaged")) r.averaged = biomarker_metrics_from_json(j.at("averaged"));
    if (j.contains("multilabel_auroc")) r.multilabel_auroc = j.at("multilabel_auroc").get<double>();
    r.seed = j.value("seed", std::uint64_t{0});
    r.model = j.value("model", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metric report: ") + e.what());
  }
  return r;
}

}  // namespace clincon
