#include "clincon/pair_selection.hpp"

#include <cmath>
#include <unordered_map>

#include "clincon/errors.hpp"
#include "clincon/rng.hpp"
#include "clincon/text.hpp"

namespace clincon {

double quantize_label(double value, std::string_view key, double bin_width) {
  if (!(bin_width > 0) || !std::isfinite(bin_width)) {
    throw ConfigError("bin width for '" + std::string(key) + "' must be a positive number");
  }
  if (!std::isfinite(value)) throw DataError("non-finite value for clinical key '" + std::string(key) + "'");
  return std::floor(value / bin_width) * bin_width;
}

std::vector<Label> encode_labels(const Dataset& ds, const ClinicalKey& key) {
  const std::string k = canonical_key(key.name);
  const bool categorical = is_categorical_key(k);
  if (!categorical && !(key.bin_width > 0)) {
    throw ConfigError("bin width for '" + k + "' must be positive");
  }
  std::vector<Label> out;
  out.reserve(ds.size());
  std::unordered_map<std::string, Label> codes;
  for (const auto& s : ds.samples()) {
    const auto v = clinical_value(s.clinical, k);
    if (!v) throw DataError("sample '" + s.id + "' lacks clinical key '" + k + "'");
    if (categorical) {
      const auto& str = std::get<std::string>(*v);
      auto [it, _] = codes.emplace(str, static_cast<Label>(codes.size()));
      out.push_back(it->second);
    } else {
      const double x = std::get<double>(*v);
      if (!std::isfinite(x)) throw DataError("non-finite value for '" + k + "' on sample '" + s.id + "'");
      out.push_back(static_cast<Label>(std::floor(x / key.bin_width)));
    }
  }
  return out;
}

TwoViewBatch build_two_view_batch(const Eigen::MatrixXd& payloads,
                                  const std::map<std::string, std::vector<Label>>& labels,
                                  const AugmentPolicy& augment, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(payloads.rows());
  if (n < 2) throw ConfigError("a two-view batch needs at least 2 samples");
  if (!(augment.noise_sigma >= 0) || !(augment.dropout_rate >= 0 && augment.dropout_rate < 1)) {
    throw ConfigError("augmentation needs noise_sigma >= 0 and dropout_rate in [0, 1)");
  }
  TwoViewBatch batch;
  batch.n = n;
  batch.views.resize(static_cast<Eigen::Index>(2 * n), payloads.cols());
  for (std::size_t view = 0; view < 2; ++view) {
    Rng rng(derive_seed(seed, 0x0a06, view));
    for (std::size_t i = 0; i < n; ++i) {
      auto row = batch.views.row(static_cast<Eigen::Index>(view * n + i));
      row = payloads.row(static_cast<Eigen::Index>(i));
      if (augment.is_identity()) continue;
      for (Eigen::Index d = 0; d < row.size(); ++d) {
        double v = row(d) + (augment.noise_sigma > 0 ? rng.normal(0.0, augment.noise_sigma) : 0.0);
        if (augment.dropout_rate > 0 && rng.bernoulli(augment.dropout_rate)) v = 0.0;
        row(d) = v;
      }
    }
  }
  batch.twin_index.resize(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    batch.twin_index[i] = i + n;
    batch.twin_index[i + n] = i;
  }
  for (const auto& [key, values] : labels) {
    if (values.size() != n) throw ConfigError("label vector for '" + key + "' does not match batch size");
    std::vector<Label> dup(values);
    dup.insert(dup.end(), values.begin(), values.end());
    batch.labels.emplace(key, std::move(dup));
  }
  return batch;
}

TwoViewBatch build_two_view_batch(std::span<const Sample> samples, const AugmentPolicy& augment,
                                  std::span<const ClinicalKey> keys, std::uint64_t seed) {
  if (samples.size() < 2) throw ConfigError("a two-view batch needs at least 2 samples");
  const std::size_t dim = samples.front().payload.size();
  Eigen::MatrixXd payloads(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].payload.size() != dim) throw DataError("payload dimensions differ within the batch");
    for (std::size_t d = 0; d < dim; ++d) {
      payloads(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = samples[i].payload[d];
    }
  }
  const Dataset ds(std::vector<Sample>(samples.begin(), samples.end()), dim);
  std::map<std::string, std::vector<Label>> labels;
  for (const auto& key : keys) labels[canonical_key(key.name)] = encode_labels(ds, key);
  return build_two_view_batch(payloads, labels, augment, seed);
}

// ---------------------------------------------------------------------------

std::size_t PairMask::positive_count(std::size_t i) const {
  std::size_t c = 0;
  for (std::size_t j = 0; j < n_; ++j) c += positives_[i * n_ + j];
  return c;
}

void PairMask::validate() const {
  if (positives_.size() != n_ * n_) throw ConfigError("pair mask storage does not match its size");
  for (std::size_t i = 0; i < n_; ++i) {
    if (positive(i, i)) throw ConfigError("pair mask has a positive on its diagonal");
    for (std::size_t j = i + 1; j < n_; ++j) {
      if (positive(i, j) != positive(j, i)) throw ConfigError("pair mask is not symmetric");
    }
  }
}

std::vector<std::uint8_t> PairMask::to_bits() const {
  std::vector<std::uint8_t> out((n_ * n_ + 7) / 8, 0);
  for (std::size_t k = 0; k < n_ * n_; ++k) {
    if (positives_[k]) out[k / 8] |= static_cast<std::uint8_t>(0x80u >> (k % 8));
  }
  return out;
}

PairMask PairMask::from_bits(std::size_t n, std::span<const std::uint8_t> bits) {
  if (bits.size() != (n * n + 7) / 8) throw DataError("bit mask length does not match a " + std::to_string(n) + "x" + std::to_string(n) + " mask");
  PairMask m(n);
  for (std::size_t k = 0; k < n * n; ++k) m.positives_[k] = (bits[k / 8] >> (7 - k % 8)) & 1u;
  return m;
}

PairMask PairMask::permuted(std::span<const std::size_t> perm) const {
  PairMask out(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) out.set_positive(i, j, positive(perm[i], perm[j]));
  }
  return out;
}

PairMask positive_mask(std::span<const Label> labels) {
  const std::size_t n = labels.size();
  PairMask m(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m.set_positive(i, j, i != j && labels[i] == labels[j]);
  }
  return m;
}

PairMask twin_mask(std::span<const std::size_t> twin_index) {
  const std::size_t n = twin_index.size();
  PairMask m(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (twin_index[i] >= n || twin_index[i] == i || twin_index[twin_index[i]] != i) {
      throw ConfigError("twin index must be a fixed-point-free involution");
    }
    m.set_positive(i, twin_index[i], true);
  }
  return m;
}

}  // namespace clincon
