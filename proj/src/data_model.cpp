#include "clincon/data_model.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "clincon/errors.hpp"
#include "clincon/rng.hpp"
#include "clincon/text.hpp"

namespace fs = std::filesystem;

namespace clincon {

std::string biomarker_name(std::size_t index) {
  if (index >= kBiomarkerCount) throw ConfigError("biomarker index out of range: " + std::to_string(index));
  if (index < kStudiedCount) return std::string(kStudiedBiomarkers[index]);
  return std::to_string(index);
}

std::optional<std::size_t> biomarker_index(std::string_view name) {
  if (name.starts_with("b_")) name.remove_prefix(2);
  for (std::size_t i = 0; i < kStudiedCount; ++i) {
    if (name == kStudiedBiomarkers[i]) return i;
  }
  std::size_t idx = 0;
  auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), idx);
  if (ec == std::errc() && ptr == name.data() + name.size() && idx >= kStudiedCount &&
      idx < kBiomarkerCount) {
    return idx;
  }
  return std::nullopt;
}

Dataset::Dataset(std::vector<Sample> samples, std::size_t payload_dim, std::string provenance)
    : samples_(std::move(samples)), payload_dim_(payload_dim), provenance_(std::move(provenance)) {
  std::unordered_set<std::string> ids;
  std::unordered_map<std::string, std::string> eye_to_patient;
  for (const auto& s : samples_) {
    if (!ids.insert(s.id).second) throw DataError("duplicate sample id '" + s.id + "'");
    if (s.payload.size() != payload_dim_) {
      throw DataError("sample '" + s.id + "' has payload dimension " +
                      std::to_string(s.payload.size()) + ", expected " +
                      std::to_string(payload_dim_));
    }
    auto [it, inserted] = eye_to_patient.emplace(s.clinical.eye_id, s.clinical.patient_id);
    if (!inserted && it->second != s.clinical.patient_id) {
      throw DataError("eye '" + s.clinical.eye_id + "' maps to patients '" + it->second +
                      "' and '" + s.clinical.patient_id + "'");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices, std::string provenance) const {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(samples_.at(i));
  return Dataset(std::move(out), payload_dim_, std::move(provenance));
}

// ---------------------------------------------------------------------------

namespace {

struct KeyInfo {
  std::string_view name;
  bool categorical;
};

constexpr std::array<KeyInfo, 10> kKeys = {{
    {"patient_id", true},
    {"eye_id", true},
    {"visit_index", false},
    {"bcva", false},
    {"cst", false},
    {"leakage_index", false},
    {"drss", false},
    {"diabetes_type", true},
    {"diabetes_years", false},
    {"gender", true},
}};

}  // namespace

std::string canonical_key(std::string_view key) {
  std::string k = to_lower(key);
  if (k == "eye") return "eye_id";
  if (k == "patient") return "patient_id";
  if (k == "visit") return "visit_index";
  for (const auto& info : kKeys) {
    if (k == info.name) return k;
  }
  throw ConfigError("unknown clinical key '" + std::string(key) + "'");
}

bool is_categorical_key(std::string_view key) {
  const std::string k = canonical_key(key);
  for (const auto& info : kKeys) {
    if (k == info.name) return info.categorical;
  }
  return false;
}

std::optional<ClinicalValue> clinical_value(const ClinicalRecord& rec, std::string_view key) {
  const std::string k = canonical_key(key);
  if (k == "patient_id") return rec.patient_id;
  if (k == "eye_id") return rec.eye_id;
  if (k == "visit_index") return static_cast<double>(rec.visit_index);
  if (k == "bcva") return static_cast<double>(rec.bcva);
  if (k == "cst") return static_cast<double>(rec.cst);
  if (k == "leakage_index") {
    if (rec.leakage_index) return *rec.leakage_index;
    return std::nullopt;
  }
  if (k == "drss") {
    if (rec.drss) return static_cast<double>(*rec.drss);
    return std::nullopt;
  }
  if (k == "diabetes_type") {
    if (rec.diabetes_type) return *rec.diabetes_type;
    return std::nullopt;
  }
  if (k == "diabetes_years") {
    if (rec.diabetes_years) return *rec.diabetes_years;
    return std::nullopt;
  }
  if (rec.gender) return *rec.gender;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Payloads

std::vector<float> read_payload(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open payload file '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (bytes % 4 != 0) {
    throw DataError("payload file '" + path.string() + "' size is not a multiple of 4");
  }
  std::vector<float> out(bytes / 4);
  std::vector<unsigned char> raw(bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 3; b >= 0; --b) u = (u << 8) | raw[4 * i + static_cast<std::size_t>(b)];
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

void write_payload(const fs::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write payload file '" + path.string() + "'");
  std::vector<unsigned char> raw(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(values[i]);
    for (std::size_t b = 0; b < 4; ++b) raw[4 * i + b] = static_cast<unsigned char>(u >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

const std::vector<std::string>& manifest_header() {
  static const std::vector<std::string> header = [] {
    std::vector<std::string> h = {"id",           "patient_id",    "eye_id",
                                  "visit_index",  "bcva",          "cst",
                                  "leakage_index", "drss",         "diabetes_type",
                                  "diabetes_years", "gender",      "payload_path"};
    for (std::size_t i = 0; i < kBiomarkerCount; ++i) h.push_back("b_" + biomarker_name(i));
    return h;
  }();
  return header;
}

class RowReader {
 public:
  RowReader(const std::vector<std::string>& cells, const std::unordered_map<std::string, std::size_t>& cols,
            std::size_t row)
      : cells_(cells), cols_(cols), row_(row) {}

  std::string_view cell(const std::string& col) const {
    auto it = cols_.find(col);
    if (it == cols_.end() || it->second >= cells_.size()) return {};
    return trim(cells_[it->second]);
  }

  std::string required_string(const std::string& col) const {
    auto v = cell(col);
    if (v.empty()) fail(col, "missing value");
    return std::string(v);
  }

  template <typename T>
  std::optional<T> optional_number(const std::string& col) const {
    auto v = cell(col);
    if (v.empty()) return std::nullopt;
    auto parsed = parse_number<T>(v);
    if (!parsed) fail(col, "cannot parse '" + std::string(v) + "' as a number");
    return parsed;
  }

  template <typename T>
  T required_number(const std::string& col) const {
    auto v = optional_number<T>(col);
    if (!v) fail(col, "missing value");
    return *v;
  }

  [[noreturn]] void fail(const std::string& col, const std::string& what) const {
    throw DataError("manifest row " + std::to_string(row_) + ", column '" + col + "': " + what);
  }

 private:
  const std::vector<std::string>& cells_;
  const std::unordered_map<std::string, std::size_t>& cols_;
  std::size_t row_;
};

}  // namespace

Dataset load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  const fs::path base = path.parent_path();

  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest '" + path.string() + "' is empty");
  const auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name(trim(header[i]));
    if (!cols.emplace(name, i).second) throw DataError("manifest header repeats column '" + name + "'");
  }
  for (const char* req : {"id", "patient_id", "eye_id", "visit_index", "bcva", "cst", "payload_path"}) {
    if (!cols.contains(req)) throw DataError(std::string("manifest header lacks column '") + req + "'");
  }

  std::vector<Sample> samples;
  std::optional<std::size_t> dim;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("manifest row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
    }
    RowReader r(cells, cols, row);
    Sample s;
    s.id = r.required_string("id");
    auto& c = s.clinical;
    c.patient_id = r.required_string("patient_id");
    c.eye_id = r.required_string("eye_id");
    c.visit_index = r.required_number<int>("visit_index");
    if (c.visit_index < 0) r.fail("visit_index", "must be >= 0");
    c.bcva = r.required_number<int>("bcva");
    if (c.bcva < 0) r.fail("bcva", "must be >= 0");
    c.cst = r.required_number<int>("cst");
    if (c.cst <= 0) r.fail("cst", "must be > 0");
    c.leakage_index = r.optional_number<double>("leakage_index");
    c.drss = r.optional_number<int>("drss");
    if (auto v = r.cell("diabetes_type"); !v.empty()) c.diabetes_type = std::string(v);
    c.diabetes_years = r.optional_number<double>("diabetes_years");
    if (auto v = r.cell("gender"); !v.empty()) c.gender = std::string(v);

    BiomarkerVector bv;
    bool any = false;
    bool studied_missing = false;
    for (std::size_t i = 0; i < kBiomarkerCount; ++i) {
      const std::string col = "b_" + biomarker_name(i);
      auto v = r.cell(col);
      if (v.empty()) {
        if (i < kStudiedCount) studied_missing = true;
        continue;
      }
      if (v != "0" && v != "1") r.fail(col, "biomarker cell must be 0, 1, or empty");
      bv.flags[i] = v == "1" ? 1 : 0;
      any = true;
    }
    if (any) {
      if (studied_missing) r.fail("b_IRF", "studied biomarker cells must be all filled or all empty");
      s.biomarkers = bv;
    }

    const fs::path payload_path = base / r.required_string("payload_path");
    try {
      s.payload = read_payload(payload_path);
    } catch (const DataError& e) {
      r.fail("payload_path", e.what());
    }
    if (!dim) dim = s.payload.size();
    if (s.payload.size() != *dim) {
      r.fail("payload_path", "payload dimension " + std::to_string(s.payload.size()) +
                                 " differs from " + std::to_string(*dim));
    }
    samples.push_back(std::move(s));
  }
  return Dataset(std::move(samples), dim.value_or(0), "manifest:" + path.filename().string());
}

fs::path write_manifest(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir / "payloads");
  const fs::path manifest = dir / "manifest.csv";
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest '" + manifest.string() + "'");
  const auto& header = manifest_header();
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& s : ds.samples()) {
    const auto& c = s.clinical;
    const std::string rel = "payloads/" + s.id + ".f32";
    write_payload(dir / rel, s.payload);
    std::vector<std::string> cells = {
        s.id,
        c.patient_id,
        c.eye_id,
        std::to_string(c.visit_index),
        std::to_string(c.bcva),
        std::to_string(c.cst),
        c.leakage_index ? format_double(*c.leakage_index) : "",
        c.drss ? std::to_string(*c.drss) : "",
        c.diabetes_type.value_or(""),
        c.diabetes_years ? format_double(*c.diabetes_years) : "",
        c.gender.value_or(""),
        rel};
    for (std::size_t i = 0; i < kBiomarkerCount; ++i) {
      cells.push_back(s.biomarkers ? (s.biomarkers->present(i) ? "1" : "0") : "");
    }
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << csv_escape(cells[i]);
    out << '\n';
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Splits and sampling

IdentityKey parse_identity_key(std::string_view s) {
  const std::string k = to_lower(s);
  if (k == "eye" || k == "eye_id") return IdentityKey::Eye;
  if (k == "patient" || k == "patient_id") return IdentityKey::Patient;
  throw ConfigError("identity key must be 'eye' or 'patient', got '" + std::string(s) + "'");
}

Split split_by_identity(const Dataset& ds, IdentityKey key, std::size_t holdout_count,
                        std::uint64_t seed) {
  auto identity = [key](const Sample& s) -> const std::string& {
    return key == IdentityKey::Eye ? s.clinical.eye_id : s.clinical.patient_id;
  };
  std::vector<std::string> ids;
  std::unordered_set<std::string> seen;
  for (const auto& s : ds.samples()) {
    if (seen.insert(identity(s)).second) ids.push_back(identity(s));
  }
  if (holdout_count > 0 && holdout_count >= ids.size()) {
    throw ConfigError("holdout count " + std::to_string(holdout_count) +
                      " must be smaller than the number of distinct identities (" +
                      std::to_string(ids.size()) + ")");
  }
  Rng rng(derive_seed(seed, 0x5b1f));
  const auto chosen = rng.sample_without_replacement(ids.size(), holdout_count);
  std::unordered_set<std::string> held;
  for (std::size_t i : chosen) held.insert(ids[i]);

  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    (held.contains(identity(ds[i])) ? test_idx : train_idx).push_back(i);
  }
  return {ds.subset(train_idx, ds.provenance() + "|train"), ds.subset(test_idx, ds.provenance() + "|test")};
}

Dataset balanced_biomarker_testset(const Dataset& ds, std::string_view biomarker,
                                   std::size_t n_per_class, std::uint64_t seed) {
  const auto bi = biomarker_index(biomarker);
  if (!bi) throw ConfigError("unknown biomarker '" + std::string(biomarker) + "'");
  std::vector<std::size_t> present, absent;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& b = ds[i].biomarkers;
    if (!b) continue;
    (b->present(*bi) ? present : absent).push_back(i);
  }
  if (present.size() < n_per_class || absent.size() < n_per_class) {
    throw DataError("balanced test set for " + std::string(biomarker) + " needs " +
                    std::to_string(n_per_class) + " per class; available: " +
                    std::to_string(present.size()) + " present, " + std::to_string(absent.size()) +
                    " absent");
  }
  Rng rng(derive_seed(seed, 0xba1a, *bi));
  std::vector<std::size_t> picked;
  for (std::size_t i : rng.sample_without_replacement(present.size(), n_per_class)) picked.push_back(present[i]);
  for (std::size_t i : rng.sample_without_replacement(absent.size(), n_per_class)) picked.push_back(absent[i]);
  std::sort(picked.begin(), picked.end());
  return ds.subset(picked, ds.provenance() + "|balanced:" + std::string(biomarker));
}

Dataset subsample_fraction(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("fraction must lie in (0, 1], got " + format_double(fraction));
  }
  if (ds.empty()) return ds;
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(ds.size()))));
  Rng rng(derive_seed(seed, 0xf4ac));
  const auto idx = rng.sample_without_replacement(ds.size(), k);
  return ds.subset(idx, ds.provenance() + "|fraction:" + format_double(fraction));
}

Dataset labeled_only(const Dataset& ds) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds[i].biomarkers) idx.push_back(i);
  }
  return ds.subset(idx, ds.provenance() + "|labeled");
}

// ---------------------------------------------------------------------------

Histogram label_histogram(const Dataset& ds, std::string_view key) {
  const std::string k = canonical_key(key);
  const bool categorical = is_categorical_key(k);
  struct Acc {
    double numeric = 0;
    std::size_t images = 0;
    std::set<std::string> eyes;
  };
  std::map<std::string, Acc> groups;
  for (const auto& s : ds.samples()) {
    auto v = clinical_value(s.clinical, k);
    if (!v) throw DataError("sample '" + s.id + "' lacks clinical key '" + k + "'");
    std::string label;
    double numeric = 0;
    if (categorical) {
      label = std::get<std::string>(*v);
    } else {
      numeric = std::get<double>(*v);
      label = format_double(numeric);
    }
    auto& acc = groups[label];
    acc.numeric = numeric;
    ++acc.images;
    acc.eyes.insert(s.clinical.eye_id);
  }
  Histogram h{k, {}};
  for (auto& [label, acc] : groups) h.bins.push_back({label, acc.numeric, acc.images, acc.eyes.size()});
  if (!categorical) {
    std::sort(h.bins.begin(), h.bins.end(),
              [](const HistogramBin& a, const HistogramBin& b) { return a.numeric < b.numeric; });
  }
  return h;
}

}  // namespace clincon
