#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace clincon {

inline constexpr std::size_t kBiomarkerCount = 16;
inline constexpr std::size_t kStudiedCount = 5;

/// The studied subset, in its fixed order. Remaining flags are named "5".."15".
inline constexpr std::array<std::string_view, kStudiedCount> kStudiedBiomarkers = {
    "IRF", "DME", "IRHRF", "FAVF", "PAVF"};

std::string biomarker_name(std::size_t index);

/// Accepts "IRF", "b_IRF", "7", "b_7" (case-sensitive names).
std::optional<std::size_t> biomarker_index(std::string_view name);

struct ClinicalRecord {
  std::string patient_id;
  std::string eye_id;
  int visit_index = 0;
  int bcva = 0;
  int cst = 1;
  std::optional<double> leakage_index;
  std::optional<int> drss;
  std::optional<std::string> diabetes_type;
  std::optional<double> diabetes_years;
  std::optional<std::string> gender;

  bool operator==(const ClinicalRecord&) const = default;
};

struct BiomarkerVector {
  std::array<std::uint8_t, kBiomarkerCount> flags{};

  bool present(std::size_t index) const { return flags.at(index) != 0; }
  std::array<std::uint8_t, kStudiedCount> studied() const {
    return {flags[0], flags[1], flags[2], flags[3], flags[4]};
  }
  bool operator==(const BiomarkerVector&) const = default;
};

struct Sample {
  std::string id;
  std::vector<float> payload;
  ClinicalRecord clinical;
  std::optional<BiomarkerVector> biomarkers;

  bool operator==(const Sample&) const = default;
};

/// Immutable collection of samples sharing one payload dimension.
class Dataset {
 public:
  Dataset() = default;
  /// Validates unique ids, constant payload dimension, and that every eye
  /// maps to a single patient. Throws DataError otherwise.
  Dataset(std::vector<Sample> samples, std::size_t payload_dim, std::string provenance = {});

  const std::vector<Sample>& samples() const { return samples_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  std::size_t payload_dim() const { return payload_dim_; }
  const std::string& provenance() const { return provenance_; }

  /// Samples at the given indices, in the order given.
  Dataset subset(std::span<const std::size_t> indices, std::string provenance) const;

  bool operator==(const Dataset&) const = default;

 private:
  std::vector<Sample> samples_;
  std::size_t payload_dim_ = 0;
  std::string provenance_;
};

// ---------------------------------------------------------------------------
// Clinical keys

using ClinicalValue = std::variant<double, std::string>;

/// Canonical key name for an alias ("eye" -> "eye_id", "patient" -> "patient_id").
/// Throws ConfigError for unknown keys.
std::string canonical_key(std::string_view key);

bool is_categorical_key(std::string_view key);

/// Value of a clinical key on a record; nullopt when an optional extra is absent.
std::optional<ClinicalValue> clinical_value(const ClinicalRecord& rec, std::string_view key);

// ---------------------------------------------------------------------------
// Manifest I/O

/// Parses a manifest CSV. payload_path entries are resolved relative to the
/// manifest's directory.
Dataset load_manifest(const std::filesystem::path& path);

/// Writes `dir/manifest.csv` and one payload file per sample under
/// `dir/payloads/`. Returns the manifest path.
std::filesystem::path write_manifest(const Dataset& ds, const std::filesystem::path& dir);

std::vector<float> read_payload(const std::filesystem::path& path);
void write_payload(const std::filesystem::path& path, std::span<const float> values);

// ---------------------------------------------------------------------------
// Splits and sampling

enum class IdentityKey { Eye, Patient };

IdentityKey parse_identity_key(std::string_view s);

struct Split {
  Dataset train;
  Dataset test;
};

/// Holds out `holdout_count` identities (eyes or patients) chosen uniformly.
Split split_by_identity(const Dataset& ds, IdentityKey key, std::size_t holdout_count,
                        std::uint64_t seed);

/// Exactly n_per_class samples with the biomarker present and n_per_class
/// with it absent, drawn without replacement. Samples without biomarker
/// labels are ignored.
Dataset balanced_biomarker_testset(const Dataset& ds, std::string_view biomarker,
                                   std::size_t n_per_class, std::uint64_t seed);

/// floor(fraction * N) samples (at least one), original order preserved.
Dataset subsample_fraction(const Dataset& ds, double fraction, std::uint64_t seed);

/// Samples carrying biomarker labels.
Dataset labeled_only(const Dataset& ds);

// ---------------------------------------------------------------------------
// Histograms

struct HistogramBin {
  std::string label;    // printable value
  double numeric = 0;   // sort key for numeric keys
  std::size_t images = 0;
  std::size_t eyes = 0;
};

struct Histogram {
  std::string key;
  std::vector<HistogramBin> bins;
};

Histogram label_histogram(const Dataset& ds, std::string_view key);

}  // namespace clincon
