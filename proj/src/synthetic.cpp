#include "clincon/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "clincon/errors.hpp"
#include "clincon/json_util.hpp"
#include "clincon/rng.hpp"
#include "clincon/text.hpp"

namespace clincon {

void CohortConfig::validate() const {
  if (n_eyes == 0) throw ConfigError("n_eyes must be >= 1");
  if (visits_per_eye == 0) throw ConfigError("visits_per_eye must be >= 1");
  if (payload_dim == 0) throw ConfigError("payload_dim must be >= 1");
  if (!(severity_noise >= 0)) throw ConfigError("severity_noise must be >= 0");
  if (!(bcva_sigma >= 0) || !(cst_sigma >= 0)) throw ConfigError("clinical noise sigmas must be >= 0");
  if (!(eye_signature_sigma >= 0) || !(payload_noise >= 0)) throw ConfigError("payload noise levels must be >= 0");
  if (!(labeled_fraction >= 0 && labeled_fraction <= 1)) throw ConfigError("labeled_fraction must lie in [0, 1]");
  if (!(paired_eye_fraction >= 0 && paired_eye_fraction <= 1)) throw ConfigError("paired_eye_fraction must lie in [0, 1]");
  if (!(nuisance_sigma >= 0)) throw ConfigError("nuisance_sigma must be >= 0");
  if (nuisance_rank > payload_dim) throw ConfigError("nuisance_rank cannot exceed payload_dim");
  std::set<std::size_t> seen;
  std::size_t total_dims = 0;
  const double dim = static_cast<double>(payload_dim);
  for (const auto& b : biomarkers) {
    const auto idx = biomarker_index(b.name);
    if (!idx) throw ConfigError("unknown biomarker '" + b.name + "'");
    if (!seen.insert(*idx).second) throw ConfigError("biomarker '" + b.name + "' listed twice");
    if (!(b.threshold > 0 && b.threshold < 1)) throw ConfigError("threshold of " + b.name + " must lie in (0, 1)");
    if (!(b.flip_prob >= 0 && b.flip_prob < 0.5)) throw ConfigError("flip_prob of " + b.name + " must lie in [0, 0.5)");
    if (b.effect_dims == 0) throw ConfigError("effect_dims of " + b.name + " must be >= 1");
    const double d = static_cast<double>(b.effect_dims);
    if (b.granularity == Granularity::Low && d < 0.25 * dim) {
      throw ConfigError("low-granularity biomarker " + b.name + " needs effect_dims >= 25% of payload_dim");
    }
    if (b.granularity == Granularity::High && d > 0.05 * dim) {
      throw ConfigError("high-granularity biomarker " + b.name + " needs effect_dims <= 5% of payload_dim");
    }
    if (!std::isfinite(b.effect_magnitude)) throw ConfigError("effect_magnitude of " + b.name + " must be finite");
    total_dims += b.effect_dims;
  }
  if (total_dims > payload_dim) {
    throw ConfigError("biomarker effect dimensions (" + std::to_string(total_dims) +
                      ") exceed payload_dim; effect sets are disjoint");
  }
}

namespace {

std::string eye_name(std::size_t e) {
  std::string s = std::to_string(e);
  return "E" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

}  // namespace

Cohort generate_cohort(const CohortConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0xc0407));

  GroundTruth gt;
  gt.config = cfg;

  // Disjoint effect dimensions per biomarker.
  {
    std::vector<std::size_t> dims(cfg.payload_dim);
    std::iota(dims.begin(), dims.end(), std::size_t{0});
    rng.shuffle(dims);
    std::size_t cursor = 0;
    for (const auto& b : cfg.biomarkers) {
      std::vector<std::size_t> chosen(dims.begin() + static_cast<std::ptrdiff_t>(cursor),
                                      dims.begin() + static_cast<std::ptrdiff_t>(cursor + b.effect_dims));
      std::sort(chosen.begin(), chosen.end());
      gt.effect_dims.push_back(std::move(chosen));
      cursor += b.effect_dims;
    }
  }

  std::vector<std::vector<double>> nuisance(cfg.nuisance_rank, std::vector<double>(cfg.payload_dim));
  for (auto& dir : nuisance) {
    double norm = 0;
    for (auto& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    for (auto& v : dir) v /= std::sqrt(norm);
  }

  std::vector<std::size_t> bidx;
  for (const auto& b : cfg.biomarkers) bidx.push_back(*biomarker_index(b.name));

  std::vector<Sample> samples;
  samples.reserve(cfg.n_eyes * cfg.visits_per_eye);
  std::size_t patient = 0;
  bool pair_open = false;
  for (std::size_t e = 0; e < cfg.n_eyes; ++e) {
    // A patient contributes a second eye with probability paired_eye_fraction.
    if (pair_open) {
      pair_open = false;
    } else {
      ++patient;
      pair_open = rng.bernoulli(cfg.paired_eye_fraction);
    }
    const std::string eye = eye_name(e);
    const std::string pid = "P" + eye_name(patient).substr(1);

    std::vector<double> signature(cfg.payload_dim);
    for (auto& v : signature) v = rng.normal(0.0, cfg.eye_signature_sigma);

    const double base = rng.uniform();
    std::vector<double> trajectory;
    for (std::size_t v = 0; v < cfg.visits_per_eye; ++v) {
      const double s = std::clamp(base + rng.normal(0.0, cfg.severity_noise), 0.0, 1.0);
      trajectory.push_back(s);

      Sample smp;
      smp.id = eye + "_V" + std::to_string(v);
      smp.clinical.patient_id = pid;
      smp.clinical.eye_id = eye;
      smp.clinical.visit_index = static_cast<int>(v);
      smp.clinical.bcva = static_cast<int>(
          std::lround(std::clamp(100.0 * (1.0 - s) + rng.normal(0.0, cfg.bcva_sigma), 0.0, 100.0)));
      smp.clinical.cst = static_cast<int>(
          std::lround(std::clamp(250.0 + 400.0 * s + rng.normal(0.0, cfg.cst_sigma), 150.0, 900.0)));

      BiomarkerVector flags;
      for (std::size_t k = 0; k < cfg.biomarkers.size(); ++k) {
        bool present = s > cfg.biomarkers[k].threshold;
        if (rng.bernoulli(cfg.biomarkers[k].flip_prob)) present = !present;
        flags.flags[bidx[k]] = present ? 1 : 0;
      }

      std::vector<double> payload(cfg.payload_dim);
      for (std::size_t d = 0; d < cfg.payload_dim; ++d) {
        payload[d] = signature[d] + rng.normal(0.0, cfg.payload_noise);
      }
      for (const auto& dir : nuisance) {
        const double a = rng.normal(0.0, cfg.nuisance_sigma);
        for (std::size_t d = 0; d < cfg.payload_dim; ++d) payload[d] += a * dir[d];
      }
      for (std::size_t k = 0; k < cfg.biomarkers.size(); ++k) {
        if (!flags.present(bidx[k])) continue;
        for (std::size_t d : gt.effect_dims[k]) payload[d] += cfg.biomarkers[k].effect_magnitude;
      }
      smp.payload.assign(payload.begin(), payload.end());
      if (rng.bernoulli(cfg.labeled_fraction)) smp.biomarkers = flags;
      samples.push_back(std::move(smp));
    }
    gt.severity.push_back(std::move(trajectory));
  }

  const std::string provenance = "synthetic:" + hex64(fnv1a(to_json(cfg).dump()));
  Dataset ds(std::move(samples), cfg.payload_dim, provenance);
  gt.dataset_provenance = provenance;
  gt.sample_order_hash = sample_order_hash(ds);
  return {std::move(ds), std::move(gt)};
}

std::uint64_t sample_order_hash(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& s : ds.samples()) {
    h = fnv1a(s.id + '\0' + std::to_string(s.clinical.bcva) + '\0' + std::to_string(s.clinical.cst) + '\0', h);
  }
  return h;
}

GroundTruthReport ground_truth_check(const Dataset& ds, const GroundTruth& gt) {
  if (ds.size() != gt.severity.size() * gt.config.visits_per_eye ||
      sample_order_hash(ds) != gt.sample_order_hash) {
    throw DataError("dataset '" + ds.provenance() + "' does not match ground truth provenance '" +
                    gt.dataset_provenance + "'");
  }
  const auto& cfg = gt.config;
  GroundTruthReport report;
  const double dim = static_cast<double>(cfg.payload_dim);
  for (std::size_t k = 0; k < cfg.biomarkers.size(); ++k) {
    const auto& spec = cfg.biomarkers[k];
    const std::size_t bi = *biomarker_index(spec.name);
    BiomarkerGroupStats st;
    st.name = spec.name;
    double cst_p = 0, cst_a = 0, bcva_p = 0, bcva_a = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& smp = ds[i];
      if (!smp.biomarkers) continue;
      const double s = gt.severity.at(i / cfg.visits_per_eye).at(i % cfg.visits_per_eye);
      const bool present = smp.biomarkers->present(bi);
      if (present != (s > spec.threshold)) ++st.flag_mismatches;
      if (present) {
        ++st.n_present;
        cst_p += smp.clinical.cst;
        bcva_p += smp.clinical.bcva;
      } else {
        ++st.n_absent;
        cst_a += smp.clinical.cst;
        bcva_a += smp.clinical.bcva;
      }
    }
    if (st.n_present) {
      st.mean_cst_present = cst_p / static_cast<double>(st.n_present);
      st.mean_bcva_present = bcva_p / static_cast<double>(st.n_present);
    }
    if (st.n_absent) {
      st.mean_cst_absent = cst_a / static_cast<double>(st.n_absent);
      st.mean_bcva_absent = bcva_a / static_cast<double>(st.n_absent);
    }
    if (spec.flip_prob == 0.0) {
      if (st.flag_mismatches) {
        report.violations.push_back(spec.name + ": " + std::to_string(st.flag_mismatches) +
                                    " flags disagree with the severity threshold");
      }
      if (st.n_present && st.n_absent && cfg.cst_sigma == 0.0 && !(st.cst_separation() > 0)) {
        report.violations.push_back(spec.name + ": CST of present group not above absent group");
      }
    }
    const double d = static_cast<double>(gt.effect_dims.at(k).size());
    if ((spec.granularity == Granularity::Low && d < 0.25 * dim) ||
        (spec.granularity == Granularity::High && d > 0.05 * dim)) {
      report.violations.push_back(spec.name + ": effect dimensions violate its granularity class");
    }
    report.biomarkers.push_back(st);
  }
  return report;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

std::string granularity_name(Granularity g) { return g == Granularity::Low ? "low" : "high"; }

Granularity parse_granularity(const std::string& s) {
  if (s == "low") return Granularity::Low;
  if (s == "high") return Granularity::High;
  throw ConfigError("granularity must be 'low' or 'high', got '" + s + "'");
}

}  // namespace

CohortConfig cohort_config_from_json(const nlohmann::json& j) {
  require_known_keys(j,
                     {"n_eyes", "visits_per_eye", "payload_dim", "severity_noise", "clinical_noise",
                      "biomarker_specs", "seed", "eye_signature_sigma", "payload_noise",
                      "labeled_fraction", "paired_eye_fraction", "nuisance_rank", "nuisance_sigma"},
                     "cohort config");
  CohortConfig cfg;
  read_if_present(j, "n_eyes", cfg.n_eyes);
  read_if_present(j, "visits_per_eye", cfg.visits_per_eye);
  read_if_present(j, "payload_dim", cfg.payload_dim);
  read_if_present(j, "severity_noise", cfg.severity_noise);
  read_if_present(j, "seed", cfg.seed);
  read_if_present(j, "eye_signature_sigma", cfg.eye_signature_sigma);
  read_if_present(j, "payload_noise", cfg.payload_noise);
  read_if_present(j, "labeled_fraction", cfg.labeled_fraction);
  read_if_present(j, "paired_eye_fraction", cfg.paired_eye_fraction);
  read_if_present(j, "nuisance_rank", cfg.nuisance_rank);
  read_if_present(j, "nuisance_sigma", cfg.nuisance_sigma);
  if (j.contains("clinical_noise")) {
    const auto& cn = j.at("clinical_noise");
    require_known_keys(cn, {"bcva_sigma", "cst_sigma"}, "clinical_noise");
    read_if_present(cn, "bcva_sigma", cfg.bcva_sigma);
    read_if_present(cn, "cst_sigma", cfg.cst_sigma);
  }
  if (j.contains("biomarker_specs")) {
    for (const auto& bj : j.at("biomarker_specs")) {
      require_known_keys(bj, {"name", "threshold", "flip_prob", "granularity", "effect_dims", "effect_magnitude"},
                         "biomarker spec");
      BiomarkerSpec b;
      read_if_present(bj, "name", b.name);
      read_if_present(bj, "threshold", b.threshold);
      read_if_present(bj, "flip_prob", b.flip_prob);
      std::string g = "low";
      read_if_present(bj, "granularity", g);
      b.granularity = parse_granularity(g);
      read_if_present(bj, "effect_dims", b.effect_dims);
      read_if_present(bj, "effect_magnitude", b.effect_magnitude);
      cfg.biomarkers.push_back(b);
    }
  }
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const CohortConfig& cfg) {
  nlohmann::json specs = nlohmann::json::array();
  for (const auto& b : cfg.biomarkers) {
    specs.push_back({{"name", b.name},
                     {"threshold", b.threshold},
                     {"flip_prob", b.flip_prob},
                     {"granularity", granularity_name(b.granularity)},
                     {"effect_dims", b.effect_dims},
                     {"effect_magnitude", b.effect_magnitude}});
  }
  return {{"n_eyes", cfg.n_eyes},
          {"visits_per_eye", cfg.visits_per_eye},
          {"payload_dim", cfg.payload_dim},
          {"severity_noise", cfg.severity_noise},
          {"clinical_noise", {{"bcva_sigma", cfg.bcva_sigma}, {"cst_sigma", cfg.cst_sigma}}},
          {"biomarker_specs", specs},
          {"seed", cfg.seed},
          {"eye_signature_sigma", cfg.eye_signature_sigma},
          {"payload_noise", cfg.payload_noise},
          {"labeled_fraction", cfg.labeled_fraction},
          {"paired_eye_fraction", cfg.paired_eye_fraction},
          {"nuisance_rank", cfg.nuisance_rank},
          {"nuisance_sigma", cfg.nuisance_sigma}};
}

nlohmann::json to_json(const GroundTruth& gt) {
  return {{"config", to_json(gt.config)},
          {"severity", gt.severity},
          {"effect_dims", gt.effect_dims},
          {"dataset_provenance", gt.dataset_provenance},
          {"sample_order_hash", hex64(gt.sample_order_hash)}};
}

GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"config", "severity", "effect_dims", "dataset_provenance", "sample_order_hash"},
                     "ground truth");
  GroundTruth gt;
  gt.config = cohort_config_from_json(j.at("config"));
  gt.severity = j.at("severity").get<std::vector<std::vector<double>>>();
  gt.effect_dims = j.at("effect_dims").get<std::vector<std::vector<std::size_t>>>();
  gt.dataset_provenance = j.at("dataset_provenance").get<std::string>();
  gt.sample_order_hash = std::stoull(j.at("sample_order_hash").get<std::string>(), nullptr, 16);
  return gt;
}

nlohmann::json to_json(const GroundTruthReport& r) {
  nlohmann::json out = {{"violations", r.violations}, {"biomarkers", nlohmann::json::array()}};
  for (const auto& b : r.biomarkers) {
    out["biomarkers"].push_back({{"name", b.name},
                                 {"n_present", b.n_present},
                                 {"n_absent", b.n_absent},
                                 {"mean_cst_present", b.mean_cst_present},
                                 {"mean_cst_absent", b.mean_cst_absent},
                                 {"mean_bcva_present", b.mean_bcva_present},
                                 {"mean_bcva_absent", b.mean_bcva_absent},
                                 {"cst_separation", b.cst_separation()},
                                 {"flag_mismatches", b.flag_mismatches}});
  }
  return out;
}

}  // namespace clincon
