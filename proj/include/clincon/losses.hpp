#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "clincon/pair_selection.hpp"

namespace clincon {

enum class Reduction { Mean, Sum };

struct LossResult {
  double value = 0.0;
  Eigen::MatrixXd grad;  // same shape as the differentiated input
  std::size_t contributing_anchors = 0;
};

struct LossTerm {
  ClinicalKey key;
  double weight = 1.0;
};

/// Contrastive objective: a weighted sum of clinical supervised contrastive
/// terms, or augmentation-only InfoNCE when `self_supervised` is set.
struct LossSpec {
  std::vector<LossTerm> terms;
  double temperature = 0.07;
  Reduction reduction = Reduction::Mean;
  bool self_supervised = false;

  /// Throws ConfigError on an empty term list, non-positive weights, or tau <= 0.
  void validate() const;
  std::string to_string() const;
};

/// Grammar: `key[@bin_width][:weight]` joined by '+', e.g. "bcva:1+cst@10:2".
/// "simclr", "infonce", and "self" select the self-supervised objective.
LossSpec parse_loss_spec(std::string_view text, double temperature = 0.07);

// ---------------------------------------------------------------------------

struct Normalized {
  Eigen::MatrixXd unit;
  Eigen::VectorXd norms;
};

inline constexpr double kNormEpsilon = 1e-12;

/// Row-wise L2 normalization. Throws NumericError if a row norm is <= 1e-12.
Normalized normalize(const Eigen::MatrixXd& x);

/// Pulls a gradient w.r.t. the unit rows back to the raw rows:
/// g_raw = (g - u (u . g)) / |x|.
Eigen::MatrixXd normalize_backward(const Normalized& n, const Eigen::MatrixXd& grad_unit);

/// Per anchor i: -log( exp(z_i.z_j(i)/tau) / sum_{a != i} exp(z_i.z_a/tau) ).
LossResult info_nce(const Eigen::MatrixXd& z, std::span<const std::size_t> twin_index, double tau,
                    Reduction reduction = Reduction::Mean);

/// Per anchor with |C(i)| > 0:
///   -(1/|C(i)|) sum_{c in C(i)} log( exp(z_i.z_c/tau) / sum_{a != i} exp(z_i.z_a/tau) ).
/// Anchors without positives contribute nothing and are excluded from the mean.
LossResult clinical_supcon(const Eigen::MatrixXd& z, const PairMask& mask, double tau,
                           Reduction reduction = Reduction::Mean);

struct WeightedMask {
  PairMask mask;
  double weight = 1.0;
};

/// sum_k weight_k * clinical_supcon(z, mask_k).
LossResult combined_clinical(const Eigen::MatrixXd& z, std::span<const WeightedMask> masks, double tau,
                             Reduction reduction = Reduction::Mean);

/// Mean negative log-softmax of the true class. logits: N x K.
LossResult cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> labels);

/// Mean over all N*K entries of the binary cross-entropy with logits.
LossResult bce_multilabel(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& targets);

/// Mean over rows of -sum_y softmax(teacher/T)_y log softmax(student/T)_y.
/// The gradient is w.r.t. the student logits only.
LossResult distillation_loss(const Eigen::MatrixXd& student_logits, const Eigen::MatrixXd& teacher_logits,
                             double temperature);

/// Maximum over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, floor),
/// numeric from central differences with step h. The floor keeps coordinates
/// whose true gradient is ~0 from dividing round-off by round-off.
double grad_check(const std::function<LossResult(const Eigen::MatrixXd&)>& loss, const Eigen::MatrixXd& input,
                  double h = 1e-6, double floor = 1e-4);

}  // namespace clincon
