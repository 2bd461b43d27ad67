#pragma once

// Slow scalar reference implementations used to check the library. They
// share no code with it beyond Eigen storage.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <set>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double dot(const Eigen::MatrixXd& z, std::size_t i, std::size_t j) {
  double s = 0;
  for (Eigen::Index k = 0; k < z.cols(); ++k) s += z(i, k) * z(j, k);
  return s;
}

/// Mean over anchors with positives of
/// -(1/|C(i)|) sum_c log(exp(s_ic/t) / sum_{a != i} exp(s_ia/t)).
inline double supcon(const Eigen::MatrixXd& z, const std::vector<std::set<std::size_t>>& positives, double tau) {
  const std::size_t n = static_cast<std::size_t>(z.rows());
  double total = 0;
  std::size_t anchors = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (positives[i].empty()) continue;
    double denom = 0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a != i) denom += std::exp(dot(z, i, a) / tau);
    }
    double sum = 0;
    for (std::size_t c : positives[i]) sum += std::log(std::exp(dot(z, i, c) / tau) / denom);
    total += -sum / static_cast<double>(positives[i].size());
    ++anchors;
  }
  return anchors ? total / static_cast<double>(anchors) : 0.0;
}

inline std::vector<std::set<std::size_t>> positives_from_labels(const std::vector<long>& labels) {
  std::vector<std::set<std::size_t>> p(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (i != j && labels[i] == labels[j]) p[i].insert(j);
    }
  }
  return p;
}

inline double info_nce(const Eigen::MatrixXd& z, double tau) {
  const std::size_t n2 = static_cast<std::size_t>(z.rows());
  std::vector<std::set<std::size_t>> p(n2);
  for (std::size_t i = 0; i < n2; ++i) p[i].insert(i < n2 / 2 ? i + n2 / 2 : i - n2 / 2);
  return supcon(z, p, tau);
}

inline double cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& labels) {
  double total = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    double denom = 0;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) denom += std::exp(logits(r, k));
    total += -std::log(std::exp(logits(r, labels[r])) / denom);
  }
  return total / static_cast<double>(logits.rows());
}

inline double bce(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& targets) {
  double total = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index k = 0; k < logits.cols(); ++k) {
      const double p = 1.0 / (1.0 + std::exp(-logits(r, k)));
      total += -(targets(r, k) * std::log(p) + (1 - targets(r, k)) * std::log(1 - p));
    }
  }
  return total / static_cast<double>(logits.size());
}

inline std::vector<double> softmax_row(const Eigen::MatrixXd& m, Eigen::Index r, double t) {
  std::vector<double> out(static_cast<std::size_t>(m.cols()));
  double denom = 0;
  for (Eigen::Index k = 0; k < m.cols(); ++k) denom += std::exp(m(r, k) / t);
  for (Eigen::Index k = 0; k < m.cols(); ++k) out[k] = std::exp(m(r, k) / t) / denom;
  return out;
}

inline double distillation(const Eigen::MatrixXd& student, const Eigen::MatrixXd& teacher, double t) {
  double total = 0;
  for (Eigen::Index r = 0; r < student.rows(); ++r) {
    const auto ps = softmax_row(student, r, t);
    const auto pt = softmax_row(teacher, r, t);
    for (std::size_t k = 0; k < ps.size(); ++k) total += -pt[k] * std::log(ps[k]);
  }
  return total / static_cast<double>(student.rows());
}

/// Every (positive, negative) pair: 1 if ordered, 1/2 if tied.
inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  long long twice = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 1) ++pos; else ++neg;
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j]) twice += 2;
      else if (scores[i] == scores[j]) twice += 1;
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

/// Central differences of a scalar function of a matrix.
inline Eigen::MatrixXd numeric_gradient(const std::function<double(const Eigen::MatrixXd&)>& f,
                                        const Eigen::MatrixXd& x, double h) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  Eigen::MatrixXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp(i);
    xp(i) = orig + h;
    const double up = f(xp);
    xp(i) = orig - h;
    const double down = f(xp);
    xp(i) = orig;
    g(i) = (up - down) / (2 * h);
  }
  return g;
}

struct Welch {
  double t, df, p;
};

/// Welch statistic with the two-sided p-value from Simpson integration of
/// the Student-t density; no special-function library involved.
inline Welch welch(const std::vector<double>& a, const std::vector<double>& b) {
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  auto var = [&](const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / (v.size() - 1);
  };
  const double va = var(a) / a.size(), vb = var(b) / b.size();
  const double t = (mean(a) - mean(b)) / std::sqrt(va + vb);
  const double df = (va + vb) * (va + vb) / (va * va / (a.size() - 1) + vb * vb / (b.size() - 1));
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * M_PI);
  auto pdf = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
  const int n = 400000;
  const double hi = std::abs(t), h = hi / n;
  double s = pdf(0) + pdf(hi);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * pdf(i * h);
  const double half = s * h / 3;
  return {t, df, 1 - 2 * half};
}

/// P(true classes agree | two samples share a pseudo label), by summing
/// over (true, pseudo, true') triples.
inline double collision(const std::vector<double>& rho, const Eigen::MatrixXd& q) {
  const std::size_t k = rho.size();
  double agree = 0;
  for (std::size_t p = 0; p < k; ++p) {
    double marginal = 0;
    for (std::size_t c = 0; c < k; ++c) marginal += rho[c] * q(c, p);
    if (marginal == 0) continue;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t c2 = 0; c2 < k; ++c2) {
        if (c == c2) agree += rho[c] * q(c, p) * rho[c2] * q(c2, p) / marginal;
      }
    }
  }
  return agree;
}

}  // namespace oracle
