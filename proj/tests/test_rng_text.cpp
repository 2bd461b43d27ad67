#include <doctest.h>

#include <set>

#include "clincon/parallel.hpp"
#include "clincon/rng.hpp"
#include "clincon/text.hpp"

using namespace clincon;

TEST_CASE("rng streams are reproducible and seed-sensitive") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    (void)c.next();
  }
  CHECK(Rng(42).next() != Rng(43).next());
  CHECK(derive_seed(1, 2) != derive_seed(2, 1));
  CHECK(derive_seed(1, 2, 3) == derive_seed(derive_seed(1, 2), 3));
}

TEST_CASE("rng distributions stay in range") {
  Rng r(7);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.index(5) < 5);
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
  const std::vector<double> w = {0.0, 1.0, 0.0};
  for (int i = 0; i < 50; ++i) CHECK(r.categorical(w) == 1);
}

TEST_CASE("sample_without_replacement is distinct and sorted") {
  Rng r(3);
  const auto s = r.sample_without_replacement(50, 20);
  REQUIRE(s.size() == 20);
  CHECK(std::is_sorted(s.begin(), s.end()));
  CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 20);
  CHECK(s.back() < 50);
}

TEST_CASE("csv splitting handles quotes") {
  const auto cells = split_csv_line("a,\"b,c\",\"d\"\"e\",");
  REQUIRE(cells.size() == 4);
  CHECK(cells[1] == "b,c");
  CHECK(cells[2] == "d\"e");
  CHECK(cells[3].empty());
  CHECK(csv_escape("x,y") == "\"x,y\"");
}

TEST_CASE("number parsing and formatting round-trip") {
  CHECK(parse_number<int>(" 12 ") == 12);
  CHECK(!parse_number<int>("12a"));
  CHECK(!parse_number<double>(""));
  const double v = 0.1 + 0.2;
  CHECK(parse_number<double>(format_double(v)) == v);
}

TEST_CASE("fnv1a matches the published test vector") {
  CHECK(fnv1a(std::string_view("")) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a(std::string_view("a")) == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("parallel_for covers every index once and rethrows") {
  std::vector<int> hits(257, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                    if (i == 3) throw std::runtime_error("boom");
                  }),
                  std::runtime_error);
}
