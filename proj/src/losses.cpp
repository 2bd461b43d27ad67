#include "clincon/losses.hpp"

#include <cmath>
#include <limits>

#include "clincon/errors.hpp"
#include "clincon/text.hpp"

namespace clincon {

void LossSpec::validate() const {
  if (!(temperature > 0) || !std::isfinite(temperature)) throw ConfigError("temperature must be > 0");
  if (self_supervised) {
    if (!terms.empty()) throw ConfigError("self-supervised loss takes no clinical terms");
    return;
  }
  if (terms.empty()) throw ConfigError("loss spec needs at least one term");
  for (const auto& t : terms) {
    if (!(t.weight > 0) || !std::isfinite(t.weight)) {
      throw ConfigError("weight of '" + t.key.name + "' must be finite and positive");
    }
    if (t.key.name.empty()) throw ConfigError("loss term has an empty key");
    if (!(t.key.bin_width > 0)) throw ConfigError("bin width of '" + t.key.name + "' must be positive");
  }
}

std::string LossSpec::to_string() const {
  if (self_supervised) return "simclr";
  std::string out;
  for (const auto& t : terms) {
    if (!out.empty()) out += '+';
    out += t.key.name;
    if (t.key.bin_width != 1.0) out += "@" + format_double(t.key.bin_width);
    out += ":" + format_double(t.weight);
  }
  return out;
}

LossSpec parse_loss_spec(std::string_view text, double temperature) {
  LossSpec spec;
  spec.temperature = temperature;
  const std::string lowered = to_lower(trim(text));
  if (lowered == "simclr" || lowered == "infonce" || lowered == "self") {
    spec.self_supervised = true;
    spec.validate();
    return spec;
  }
  for (const auto& part : split(lowered, '+')) {
    std::string_view p = trim(part);
    if (p.empty()) throw ConfigError("empty term in loss spec '" + std::string(text) + "'");
    LossTerm term;
    if (auto colon = p.find(':'); colon != std::string_view::npos) {
      auto w = parse_number<double>(p.substr(colon + 1));
      if (!w) throw ConfigError("bad weight in loss term '" + std::string(p) + "'");
      term.weight = *w;
      p = p.substr(0, colon);
    }
    if (auto at = p.find('@'); at != std::string_view::npos) {
      auto bw = parse_number<double>(p.substr(at + 1));
      if (!bw) throw ConfigError("bad bin width in loss term '" + std::string(p) + "'");
      term.key.bin_width = *bw;
      p = p.substr(0, at);
    }
    term.key.name = canonical_key(p);
    if (term.key.name == "eye_id") term.key.name = "eye";
    if (term.key.name == "patient_id") term.key.name = "patient";
    spec.terms.push_back(term);
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------

Normalized normalize(const Eigen::MatrixXd& x) {
  Normalized out{x, x.rowwise().norm()};
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double n = out.norms(i);
    if (!(n > kNormEpsilon)) {
      throw NumericError("cannot normalize row " + std::to_string(i) + " with norm " + format_double(n));
    }
    out.unit.row(i) /= n;
  }
  return out;
}

Eigen::MatrixXd normalize_backward(const Normalized& n, const Eigen::MatrixXd& grad_unit) {
  Eigen::MatrixXd g(grad_unit.rows(), grad_unit.cols());
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    const auto u = n.unit.row(i);
    const double proj = u.dot(grad_unit.row(i));
    g.row(i) = (grad_unit.row(i) - proj * u) / n.norms(i);
  }
  return g;
}

namespace {

void check_tau(double tau) {
  if (!(tau > 0) || !std::isfinite(tau)) throw ConfigError("temperature must be > 0");
}

// Row-wise log-sum-exp over j != i of s(i, j), with max subtraction.
Eigen::VectorXd offdiag_logsumexp(const Eigen::MatrixXd& s) {
  const Eigen::Index n = s.rows();
  Eigen::VectorXd lse(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) m = std::max(m, s(i, j));
    }
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) acc += std::exp(s(i, j) - m);
    }
    lse(i) = m + std::log(acc);
  }
  return lse;
}

// Given dL/dS for S = z z^T / tau, returns dL/dz.
Eigen::MatrixXd similarity_backward(const Eigen::MatrixXd& z, const Eigen::MatrixXd& dS, double tau) {
  return (dS + dS.transpose()) * z / tau;
}

}  // namespace

LossResult info_nce(const Eigen::MatrixXd& z, std::span<const std::size_t> twin_index, double tau,
                    Reduction reduction) {
  check_tau(tau);
  const Eigen::Index n = z.rows();
  if (n < 4 || n % 2 != 0) throw ConfigError("info_nce needs an even batch of at least 4 views");
  if (static_cast<Eigen::Index>(twin_index.size()) != n) throw ConfigError("twin index does not match batch");

  const Eigen::MatrixXd s = z * z.transpose() / tau;
  const Eigen::VectorXd lse = offdiag_logsumexp(s);
  const double w = reduction == Reduction::Mean ? 1.0 / static_cast<double>(n) : 1.0;

  LossResult out;
  Eigen::MatrixXd dS = Eigen::MatrixXd::Zero(n, n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto j = static_cast<Eigen::Index>(twin_index[static_cast<std::size_t>(i)]);
    if (j == i || j >= n) throw ConfigError("twin index must map each view to another view");
    total += lse(i) - s(i, j);
    for (Eigen::Index a = 0; a < n; ++a) {
      if (a != i) dS(i, a) = w * std::exp(s(i, a) - lse(i));
    }
    dS(i, j) -= w;
  }
  out.value = w * total;
  out.grad = similarity_backward(z, dS, tau);
  out.contributing_anchors = static_cast<std::size_t>(n);
  return out;
}

LossResult clinical_supcon(const Eigen::MatrixXd& z, const PairMask& mask, double tau, Reduction reduction) {
  check_tau(tau);
  const Eigen::Index n = z.rows();
  if (static_cast<Eigen::Index>(mask.size()) != n) throw ConfigError("pair mask does not match batch");
  if (n < 2) throw ConfigError("clinical_supcon needs at least 2 views");

  const Eigen::MatrixXd s = z * z.transpose() / tau;
  const Eigen::VectorXd lse = offdiag_logsumexp(s);

  std::vector<std::size_t> counts(static_cast<std::size_t>(n));
  std::size_t contributing = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    counts[static_cast<std::size_t>(i)] = mask.positive_count(static_cast<std::size_t>(i));
    if (counts[static_cast<std::size_t>(i)] > 0) ++contributing;
  }
  LossResult out;
  out.contributing_anchors = contributing;
  out.grad = Eigen::MatrixXd::Zero(z.rows(), z.cols());
  if (contributing == 0) return out;

  const double w = reduction == Reduction::Mean ? 1.0 / static_cast<double>(contributing) : 1.0;
  Eigen::MatrixXd dS = Eigen::MatrixXd::Zero(n, n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t c = counts[static_cast<std::size_t>(i)];
    if (c == 0) continue;
    const double inv_c = 1.0 / static_cast<double>(c);
    double pos_sum = 0.0;
    for (Eigen::Index a = 0; a < n; ++a) {
      if (a == i) continue;
      double g = std::exp(s(i, a) - lse(i));
      if (mask.positive(static_cast<std::size_t>(i), static_cast<std::size_t>(a))) {
        pos_sum += s(i, a);
        g -= inv_c;
      }
      dS(i, a) = w * g;
    }
    total += lse(i) - pos_sum * inv_c;
  }
  out.value = w * total;
  out.grad = similarity_backward(z, dS, tau);
  return out;
}

LossResult combined_clinical(const Eigen::MatrixXd& z, std::span<const WeightedMask> masks, double tau,
                             Reduction reduction) {
  if (masks.empty()) throw ConfigError("combined_clinical needs at least one mask");
  LossResult out;
  out.grad = Eigen::MatrixXd::Zero(z.rows(), z.cols());
  for (const auto& m : masks) {
    if (!(m.weight > 0) || !std::isfinite(m.weight)) throw ConfigError("mask weights must be finite and positive");
    const LossResult r = clinical_supcon(z, m.mask, tau, reduction);
    out.value += m.weight * r.value;
    out.grad += m.weight * r.grad;
    out.contributing_anchors = std::max(out.contributing_anchors, r.contributing_anchors);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd row_log_softmax(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
  return out;
}

}  // namespace

LossResult cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> labels) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index k = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw ConfigError("label count does not match logits");
  if (n == 0) throw ConfigError("cross_entropy needs at least one row");
  const Eigen::MatrixXd logp = row_log_softmax(logits);
  LossResult out;
  out.grad = logp.array().exp().matrix() / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    out.value -= logp(i, y);
    out.grad(i, y) -= 1.0 / static_cast<double>(n);
  }
  out.value /= static_cast<double>(n);
  out.contributing_anchors = static_cast<std::size_t>(n);
  return out;
}

LossResult bce_multilabel(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw ConfigError("targets do not match logits shape");
  }
  const double count = static_cast<double>(logits.size());
  if (count == 0) throw ConfigError("bce_multilabel needs at least one entry");
  LossResult out;
  out.grad.resize(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      const double x = logits(i, j);
      const double t = targets(i, j);
      if (t != 0.0 && t != 1.0) throw DataError("multi-label targets must be 0 or 1");
      // max(x,0) - x t + log(1 + exp(-|x|))
      out.value += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
      const double sig = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      out.grad(i, j) = (sig - t) / count;
    }
  }
  out.value /= count;
  out.contributing_anchors = static_cast<std::size_t>(logits.rows());
  return out;
}

LossResult distillation_loss(const Eigen::MatrixXd& student_logits, const Eigen::MatrixXd& teacher_logits,
                             double temperature) {
  if (!(temperature > 0) || !std::isfinite(temperature)) throw ConfigError("distillation temperature must be > 0");
  if (student_logits.rows() != teacher_logits.rows() || student_logits.cols() != teacher_logits.cols()) {
    throw ConfigError("student and teacher logits differ in shape");
  }
  const Eigen::Index n = student_logits.rows();
  if (n == 0) throw ConfigError("distillation needs at least one row");
  const Eigen::MatrixXd teacher_p = row_log_softmax(teacher_logits / temperature).array().exp().matrix();
  const Eigen::MatrixXd student_logp = row_log_softmax(student_logits / temperature);
  LossResult out;
  out.value = -(teacher_p.array() * student_logp.array()).sum() / static_cast<double>(n);
  out.grad = (student_logp.array().exp().matrix() - teacher_p) / (temperature * static_cast<double>(n));
  out.contributing_anchors = static_cast<std::size_t>(n);
  return out;
}

double grad_check(const std::function<LossResult(const Eigen::MatrixXd&)>& loss, const Eigen::MatrixXd& input,
                  double h, double floor) {
  const Eigen::MatrixXd analytic = loss(input).grad;
  Eigen::MatrixXd x = input;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double orig = x(i, j);
      x(i, j) = orig + h;
      const double up = loss(x).value;
      x(i, j) = orig - h;
      const double down = loss(x).value;
      x(i, j) = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic(i, j);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace clincon
