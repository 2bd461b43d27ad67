#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "clincon/data_model.hpp"

namespace clincon {

enum class Granularity { Low, High };

struct BiomarkerSpec {
  std::string name;            // one of the 16 biomarker names, e.g. "IRF" or "7"
  double threshold = 0.5;      // present iff severity > threshold (before flips)
  double flip_prob = 0.0;      // in [0, 0.5)
  Granularity granularity = Granularity::Low;
  std::size_t effect_dims = 1;
  double effect_magnitude = 1.0;
};

/// Cohort in which clinical values and biomarkers share one latent severity.
///
/// Per eye a base severity is drawn uniformly on [0,1] and perturbed per
/// visit. BCVA falls and CST rises with severity; biomarker k is present when
/// severity exceeds its threshold (then flipped with flip_prob). Payloads are
/// an eye signature plus per-visit noise, shifted on each present biomarker's
/// effect dimensions, plus optional low-rank per-visit nuisance. Low granularity spreads a biomarker over >= 25% of the
/// dimensions; high granularity confines it to <= 5%.
struct CohortConfig {
  std::size_t n_eyes = 40;
  std::size_t visits_per_eye = 10;
  std::size_t payload_dim = 64;
  double severity_noise = 0.05;
  double bcva_sigma = 2.0;
  double cst_sigma = 10.0;
  std::vector<BiomarkerSpec> biomarkers;
  std::uint64_t seed = 0;
  // Knobs beyond the severity model.
  double eye_signature_sigma = 1.0;  // per-eye offset shared by all visits
  double payload_noise = 1.0;        // per-visit isotropic noise
  double labeled_fraction = 1.0;     // probability a sample carries biomarker labels
  double paired_eye_fraction = 0.1;  // fraction of patients contributing both eyes
  // Per-visit acquisition variation: each visit adds N(0, nuisance_sigma^2)
  // along each of nuisance_rank fixed random unit directions.
  std::size_t nuisance_rank = 0;
  double nuisance_sigma = 0.0;

  /// Throws ConfigError on any violated constraint.
  void validate() const;
};

struct GroundTruth {
  CohortConfig config;
  /// severity[eye][visit]
  std::vector<std::vector<double>> severity;
  /// effect dimension indices, parallel to config.biomarkers
  std::vector<std::vector<std::size_t>> effect_dims;
  std::string dataset_provenance;
  std::uint64_t sample_order_hash = 0;
};

struct Cohort {
  Dataset dataset;
  GroundTruth truth;
};

Cohort generate_cohort(const CohortConfig& cfg);

struct BiomarkerGroupStats {
  std::string name;
  std::size_t n_present = 0;
  std::size_t n_absent = 0;
  double mean_cst_present = 0;
  double mean_cst_absent = 0;
  double mean_bcva_present = 0;
  double mean_bcva_absent = 0;
  std::size_t flag_mismatches = 0;  // flags disagreeing with 1{s > threshold}

  double cst_separation() const { return mean_cst_present - mean_cst_absent; }
};

struct GroundTruthReport {
  std::vector<BiomarkerGroupStats> biomarkers;
  std::vector<std::string> violations;
};

/// Recomputes group statistics and checks the generator's guarantees.
/// Throws DataError when the dataset was not produced with this truth
/// (including reordered samples); matching uses sample_order_hash, so a
/// cohort reloaded from its manifest still matches.
GroundTruthReport ground_truth_check(const Dataset& ds, const GroundTruth& gt);

/// Fingerprint of (id, bcva, cst) over samples in order.
std::uint64_t sample_order_hash(const Dataset& ds);

// JSON forms (unknown keys in configs are rejected)
CohortConfig cohort_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CohortConfig& cfg);
nlohmann::json to_json(const GroundTruth& gt);
GroundTruth ground_truth_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GroundTruthReport& r);

}  // namespace clincon
