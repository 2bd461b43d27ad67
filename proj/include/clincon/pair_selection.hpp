#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clincon/data_model.hpp"

namespace clincon {

using Label = std::int64_t;

/// A clinical key used as a contrastive label, with its equality bin width.
/// Numeric values are compared after flooring to multiples of bin_width;
/// categorical keys (eye, patient, ...) ignore the width.
struct ClinicalKey {
  std::string name;
  double bin_width = 1.0;
};

/// floor(value / bin_width) * bin_width. `key` only labels errors.
double quantize_label(double value, std::string_view key, double bin_width);

/// Discrete label codes for one key over a whole dataset. Numeric keys map
/// to floor(value / bin_width); categorical keys to their first-appearance
/// index. Throws DataError if any sample lacks the key.
std::vector<Label> encode_labels(const Dataset& ds, const ClinicalKey& key);

/// Stochastic view generator for vector payloads: additive Gaussian noise,
/// then each coordinate independently zeroed with dropout_rate.
struct AugmentPolicy {
  double noise_sigma = 0.1;
  double dropout_rate = 0.1;

  static AugmentPolicy identity() { return {0.0, 0.0}; }
  bool is_identity() const { return noise_sigma == 0.0 && dropout_rate == 0.0; }
  bool operator==(const AugmentPolicy&) const = default;
};

/// 2N views laid out as [view1 of all N; view2 of all N], so the twin of
/// row i is i + N (or i - N).
struct TwoViewBatch {
  std::size_t n = 0;  // originals; views.rows() == 2n
  Eigen::MatrixXd views;
  std::vector<std::size_t> twin_index;
  std::map<std::string, std::vector<Label>> labels;  // each of length 2n
};

TwoViewBatch build_two_view_batch(const Eigen::MatrixXd& payloads,
                                  const std::map<std::string, std::vector<Label>>& labels,
                                  const AugmentPolicy& augment, std::uint64_t seed);

TwoViewBatch build_two_view_batch(std::span<const Sample> samples, const AugmentPolicy& augment,
                                  std::span<const ClinicalKey> keys, std::uint64_t seed);

/// Positive (C(i)) and valid (A(i)) membership for a 2N batch.
class PairMask {
 public:
  PairMask() = default;
  explicit PairMask(std::size_t n) : n_(n), positives_(n * n, 0) {}

  std::size_t size() const { return n_; }
  bool positive(std::size_t i, std::size_t j) const { return positives_[i * n_ + j] != 0; }
  bool valid(std::size_t i, std::size_t j) const { return i != j; }
  void set_positive(std::size_t i, std::size_t j, bool v) { positives_[i * n_ + j] = v ? 1 : 0; }
  std::size_t positive_count(std::size_t i) const;

  /// Throws ConfigError unless the mask is zero-diagonal and symmetric.
  void validate() const;

  /// Row-major bits of the positive matrix, most significant bit first.
  std::vector<std::uint8_t> to_bits() const;
  static PairMask from_bits(std::size_t n, std::span<const std::uint8_t> bits);

  /// Permuted copy: result(i, j) = this(perm[i], perm[j]).
  PairMask permuted(std::span<const std::size_t> perm) const;

  bool operator==(const PairMask&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> positives_;
};

/// positives[i][j] = (labels[i] == labels[j] && i != j).
PairMask positive_mask(std::span<const Label> labels);

/// Mask whose only positives are twins; the InfoNCE positive structure.
PairMask twin_mask(std::span<const std::size_t> twin_index);

}  // namespace clincon
