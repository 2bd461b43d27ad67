#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "clincon/data_model.hpp"
#include "clincon/pipeline.hpp"
#include "clincon/rng.hpp"
#include "clincon/synthetic.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("clincon_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline clincon::Sample make_sample(std::string id, std::string patient, std::string eye, int bcva, int cst,
                                   std::vector<float> payload) {
  clincon::Sample s;
  s.id = std::move(id);
  s.clinical.patient_id = std::move(patient);
  s.clinical.eye_id = std::move(eye);
  s.clinical.bcva = bcva;
  s.clinical.cst = cst;
  s.payload = std::move(payload);
  return s;
}

/// Small cohort with both granularities; every sample labeled.
inline clincon::CohortConfig small_cohort(std::uint64_t seed, std::size_t eyes = 24) {
  clincon::CohortConfig c;
  c.n_eyes = eyes;
  c.visits_per_eye = 6;
  c.payload_dim = 40;
  c.seed = seed;
  c.biomarkers = {{"IRF", 0.4, 0.0, clincon::Granularity::Low, 10, 1.5},
                  {"DME", 0.5, 0.0, clincon::Granularity::Low, 10, 1.0},
                  {"IRHRF", 0.45, 0.0, clincon::Granularity::Low, 10, 1.0},
                  {"FAVF", 0.55, 0.0, clincon::Granularity::High, 2, 2.0},
                  {"PAVF", 0.6, 0.0, clincon::Granularity::High, 2, 2.0}};
  return c;
}

inline clincon::HyperParams fast_hyper() {
  clincon::HyperParams hp;
  hp.batch_size = 32;
  hp.epochs = 2;
  return hp;
}

inline clincon::EncoderConfig small_encoder() { return {{16, 8}, 0, 8}; }

}  // namespace testing
