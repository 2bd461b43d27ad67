#include <doctest.h>

#include <fstream>
#include <set>

#include "clincon/errors.hpp"
#include "helpers.hpp"

using namespace clincon;
using testing::make_sample;
using testing::TempDir;

namespace {

std::string header() {
  std::string h = "id,patient_id,eye_id,visit_index,bcva,cst,leakage_index,drss,diabetes_type,diabetes_years,gender,"
                  "payload_path";
  for (std::size_t i = 0; i < kBiomarkerCount; ++i) h += ",b_" + biomarker_name(i);
  return h;
}

std::string flags(const std::string& studied, bool empty = false) {
  std::string out;
  for (std::size_t i = 0; i < kBiomarkerCount; ++i) {
    out += ",";
    if (!empty) out += i < studied.size() ? std::string(1, studied[i]) : "0";
  }
  return out;
}

// 96 eyes over 87 patients: the first 9 patients contribute both eyes.
Dataset reference_scale_cohort(std::size_t visits) {
  std::vector<Sample> samples;
  std::size_t eye = 0;
  for (std::size_t p = 0; p < 87; ++p) {
    const std::size_t eyes = p < 9 ? 2 : 1;
    for (std::size_t e = 0; e < eyes; ++e, ++eye) {
      for (std::size_t v = 0; v < visits; ++v) {
        auto s = make_sample("s" + std::to_string(eye) + "_" + std::to_string(v), "P" + std::to_string(p),
                             "E" + std::to_string(eye), 70, 300, {0.f});
        BiomarkerVector b;
        b.flags[0] = (eye + v) % 2;
        s.biomarkers = b;
        samples.push_back(std::move(s));
      }
    }
  }
  return Dataset(std::move(samples), 1);
}

std::set<std::string> identities(const Dataset& ds, IdentityKey key) {
  std::set<std::string> out;
  for (const auto& s : ds.samples()) out.insert(key == IdentityKey::Eye ? s.clinical.eye_id : s.clinical.patient_id);
  return out;
}

}  // namespace

TEST_CASE("biomarker names and indices") {
  CHECK(biomarker_name(0) == "IRF");
  CHECK(biomarker_name(4) == "PAVF");
  CHECK(biomarker_name(7) == "7");
  CHECK(biomarker_index("b_PAVF") == 4u);
  CHECK(biomarker_index("12") == 12u);
  CHECK(!biomarker_index("16"));
  CHECK(!biomarker_index("irf"));
}

TEST_CASE("manifest with three complete rows and one unlabeled row") {
  TempDir dir("manifest");
  for (int i = 0; i < 4; ++i) {
    write_payload(dir / ("p" + std::to_string(i) + ".bin"), std::vector<float>{float(i), 1.f, 2.f});
  }
  std::ofstream out(dir / "m.csv");
  out << header() << "\n";
  out << "a,P1,E1,0,70,300,0.5,3,T2,10,F,p0.bin" << flags("10001") << "\n";
  out << "b,P1,E1,1,68,320,,,,,,p1.bin" << flags("01000") << "\n";
  out << "c,P2,E2,0,80,250,,,,,,p2.bin" << flags("00000") << "\n";
  out << "d,P2,E2,1,81,251,,,,,,p3.bin" << flags("", true) << "\n";
  out.close();

  const Dataset ds = load_manifest(dir / "m.csv");
  REQUIRE(ds.size() == 4);
  CHECK(ds.payload_dim() == 3);
  for (int i = 0; i < 3; ++i) CHECK(ds[i].biomarkers.has_value());
  CHECK(!ds[3].biomarkers.has_value());
  CHECK(ds[0].biomarkers->present(0));
  CHECK(ds[0].biomarkers->present(4));
  CHECK(ds[0].clinical.leakage_index == doctest::Approx(0.5));
  CHECK(ds[0].clinical.diabetes_type == "T2");
  CHECK(!ds[1].clinical.drss);
  CHECK(ds[2].payload[0] == 2.f);

  SUBCASE("round trip through write_manifest") {
    TempDir out_dir("manifest_rt");
    const Dataset back = load_manifest(write_manifest(ds, out_dir.path()));
    CHECK(back.samples() == ds.samples());
  }
}

TEST_CASE("manifest errors name row and column") {
  TempDir dir("manifest_err");
  write_payload(dir / "p.bin", std::vector<float>{1.f});
  auto write = [&](const std::string& rows) {
    std::ofstream out(dir / "m.csv");
    out << header() << "\n" << rows;
  };
  write("a,P1,E1,0,abc,300,,,,,,p.bin" + flags("00000") + "\n");
  try {
    load_manifest(dir / "m.csv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string what = e.what();
    CHECK(what.find("row 1") != std::string::npos);
    CHECK(what.find("bcva") != std::string::npos);
  }
  write("a,P1,E1,0,70,300,,,,,,p.bin" + flags("00000") + "\na,P1,E1,1,70,300,,,,,,p.bin" + flags("00000") + "\n");
  CHECK_THROWS_AS(load_manifest(dir / "m.csv"), DataError);
  write("a,P1,E1,0,70,300,,,,,,p.bin" + flags("00000") + "\nb,P2,E1,1,70,300,,,,,,p.bin" + flags("00000") + "\n");
  CHECK_THROWS_AS(load_manifest(dir / "m.csv"), DataError);
  CHECK_THROWS_AS(load_manifest(dir / "missing.csv"), DataError);
}

TEST_CASE("dataset invariants") {
  std::vector<Sample> s = {make_sample("a", "P1", "E1", 70, 300, {1.f, 2.f}),
                           make_sample("b", "P1", "E1", 70, 300, {1.f})};
  CHECK_THROWS_AS(Dataset(s, 2), DataError);
  s[1].payload = {1.f, 2.f};
  s[1].clinical.patient_id = "P2";
  CHECK_THROWS_AS(Dataset(s, 2), DataError);
}

TEST_CASE("split_by_identity on a 96-eye cohort") {
  const Dataset ds = reference_scale_cohort(3);
  const Split sp = split_by_identity(ds, IdentityKey::Eye, 20, 5);
  CHECK(identities(sp.test, IdentityKey::Eye).size() == 20);
  CHECK(identities(sp.train, IdentityKey::Eye).size() == 76);
  CHECK(sp.train.size() + sp.test.size() == ds.size());

  const Split again = split_by_identity(ds, IdentityKey::Eye, 20, 5);
  CHECK(again.train == sp.train);
  CHECK(again.test == sp.test);

  const Split none = split_by_identity(ds, IdentityKey::Eye, 0, 5);
  CHECK(none.test.empty());
  CHECK(none.train.samples() == ds.samples());

  CHECK_THROWS_AS(split_by_identity(ds, IdentityKey::Eye, 96, 5), ConfigError);

  const Split by_patient = split_by_identity(ds, IdentityKey::Patient, 10, 5);
  const auto a = identities(by_patient.train, IdentityKey::Patient);
  for (const auto& p : identities(by_patient.test, IdentityKey::Patient)) CHECK(!a.contains(p));
  CHECK(parse_identity_key("patient") == IdentityKey::Patient);
}

TEST_CASE("balanced test sets") {
  const Dataset ds = reference_scale_cohort(12);  // 1152 samples, half IRF-positive
  const Dataset bal = balanced_biomarker_testset(ds, "IRF", 500, 9);
  REQUIRE(bal.size() == 1000);
  std::size_t pos = 0;
  std::set<std::string> ids;
  for (const auto& s : bal.samples()) {
    pos += s.biomarkers->present(0);
    ids.insert(s.id);
  }
  CHECK(pos == 500);
  CHECK(ids.size() == 1000);
  CHECK(balanced_biomarker_testset(ds, "IRF", 500, 9) == bal);

  std::vector<Sample> two = {make_sample("x", "P", "E", 1, 1, {0.f}), make_sample("y", "P", "E", 1, 1, {0.f})};
  BiomarkerVector on, off;
  on.flags[4] = 1;
  two[0].biomarkers = on;
  two[1].biomarkers = off;
  const Dataset tiny(two, 1);
  CHECK(balanced_biomarker_testset(tiny, "PAVF", 1, 0).size() == 2);
  CHECK_THROWS_AS(balanced_biomarker_testset(tiny, "IRF", 1, 0), DataError);
}

TEST_CASE("label histograms") {
  std::vector<Sample> s = {make_sample("a", "P1", "E1", 60, 300, {0.f}), make_sample("b", "P2", "E2", 60, 310, {0.f}),
                           make_sample("c", "P2", "E2", 72, 320, {0.f})};
  const Histogram h = label_histogram(Dataset(s, 1), "bcva");
  REQUIRE(h.bins.size() == 2);
  CHECK(h.bins[0].label == "60");
  CHECK(h.bins[0].images == 2);
  CHECK(h.bins[0].eyes == 2);
  CHECK(h.bins[1].label == "72");
  CHECK(h.bins[1].images == 1);
  CHECK(label_histogram(Dataset(), "cst").bins.empty());
  CHECK_THROWS_AS(label_histogram(Dataset(s, 1), "shoe_size"), ConfigError);

  const Dataset big = reference_scale_cohort(2);
  const Histogram eyes = label_histogram(big, "eye");
  std::size_t total = 0;
  for (const auto& b : eyes.bins) {
    total += b.images;
    CHECK(b.eyes <= b.images);
  }
  CHECK(total == big.size());
}

TEST_CASE("subsample_fraction") {
  std::vector<Sample> s;
  for (int i = 0; i < 7500; ++i) s.push_back(make_sample("s" + std::to_string(i), "P", "E", 1, 1, {0.f}));
  const Dataset ds(s, 1);
  const Dataset q = subsample_fraction(ds, 0.25, 4);
  CHECK(q.size() == 1875);
  CHECK(subsample_fraction(ds, 0.25, 4) == q);
  CHECK(subsample_fraction(ds, 1.0, 4).samples() == ds.samples());
  CHECK(subsample_fraction(ds.subset(std::vector<std::size_t>{0, 1}, "two"), 0.1, 1).size() == 1);
  CHECK_THROWS_AS(subsample_fraction(ds, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(subsample_fraction(ds, 1.5, 1), ConfigError);
}
