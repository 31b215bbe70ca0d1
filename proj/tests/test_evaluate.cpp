#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <thread>

#include <httplib.h>

#include "polscale/evaluate.hpp"

using namespace polscale;
using namespace polscale::evaluate;
namespace fs = std::filesystem;

namespace {

// Independent oracles, written the slow obvious way.

std::map<std::string, int> rank_of(const std::vector<std::string>& seq) {
  std::map<std::string, int> r;
  for (size_t i = 0; i < seq.size(); ++i) r[seq[i]] = static_cast<int>(i);
  return r;
}

double oracle_spearman(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
  // Pearson correlation of the two rank vectors
  auto ra = rank_of(a), rb = rank_of(b);
  double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (const auto& p : a) {
    ma += ra[p];
    mb += rb[p];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (const auto& p : a) {
    double da = ra[p] - ma, db = rb[p] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  return cov / std::sqrt(va * vb);
}

double oracle_kendall(const std::vector<std::string>& a,
                      const std::vector<std::string>& b) {
  auto ra = rank_of(a), rb = rank_of(b);
  long concordant = 0, discordant = 0;
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = i + 1; j < a.size(); ++j) {
      long sa = ra[a[i]] - ra[a[j]];
      long sb = rb[a[i]] - rb[a[j]];
      (sa * sb > 0 ? concordant : discordant)++;
    }
  double pairs = static_cast<double>(a.size()) * (a.size() - 1) / 2.0;
  return (concordant - discordant) / pairs;
}

int oracle_lcs_len(const std::vector<std::string>& a,
                   const std::vector<std::string>& b, size_t i, size_t j,
                   std::map<std::pair<size_t, size_t>, int>& memo) {
  if (i == 0 || j == 0) return 0;
  auto key = std::make_pair(i, j);
  auto it = memo.find(key);
  if (it != memo.end()) return it->second;
  int r;
  if (a[i - 1] == b[j - 1]) {
    r = 1 + oracle_lcs_len(a, b, i - 1, j - 1, memo);
  } else {
    r = std::max(oracle_lcs_len(a, b, i - 1, j, memo),
                 oracle_lcs_len(a, b, i, j - 1, memo));
  }
  memo[key] = r;
  return r;
}

double oracle_lcs_ratio(const std::vector<std::string>& a,
                        const std::vector<std::string>& b) {
  std::map<std::pair<size_t, size_t>, int> memo;
  return 2.0 * oracle_lcs_len(a, b, a.size(), b.size(), memo) /
         static_cast<double>(a.size() + b.size());
}

std::vector<std::string> letters(size_t n) {
  std::vector<std::string> v;
  for (size_t i = 0; i < n; ++i) v.push_back(std::string(1, 'A' + char(i)));
  return v;
}

}  // namespace

TEST_CASE("rank metrics agree with brute-force oracles on random permutations",
          "[metrics]") {
  std::mt19937 g(1234);
  for (int trial = 0; trial < 100; ++trial) {
    size_t n = 2 + g() % 7;  // 2..8
    auto a = letters(n);
    auto b = a;
    std::shuffle(a.begin(), a.end(), g);
    std::shuffle(b.begin(), b.end(), g);
    CHECK(std::abs(spearman(a, b) - oracle_spearman(a, b)) <= 1e-12);
    CHECK(std::abs(kendall(a, b) - oracle_kendall(a, b)) <= 1e-12);
    CHECK(std::abs(lcs_ratio(a, b) - oracle_lcs_ratio(a, b)) <= 1e-12);
  }
}

TEST_CASE("rank metric hand values", "[metrics]") {
  // one adjacent swap at the tail of four
  std::vector<std::string> a4 = {"1", "2", "3", "4"};
  std::vector<std::string> b4 = {"1", "2", "4", "3"};
  CHECK(spearman(a4, b4) == 0.8);

  // one adjacent swap among three
  std::vector<std::string> a3 = {"A", "B", "C"};
  std::vector<std::string> b3 = {"A", "C", "B"};
  CHECK(kendall(a3, b3) == Catch::Approx(1.0 / 3.0).margin(1e-15));

  // ABCD vs ACBD share ABD (or ACD): LCS 3, ratio 6/8
  std::vector<std::string> x = {"A", "B", "C", "D"};
  std::vector<std::string> y = {"A", "C", "B", "D"};
  CHECK(lcs_ratio(x, y) == 0.75);
}

TEST_CASE("rank metrics at the extremes", "[metrics]") {
  auto a = letters(6);
  auto rev = a;
  std::reverse(rev.begin(), rev.end());
  CHECK(spearman(a, a) == 1.0);
  CHECK(kendall(a, a) == 1.0);
  CHECK(lcs_ratio(a, a) == 1.0);
  CHECK(spearman(a, rev) == -1.0);
  CHECK(kendall(a, rev) == -1.0);
  // reversal leaves single-element common subsequences only
  CHECK(lcs_ratio(a, rev) == Catch::Approx(2.0 / 12.0).margin(1e-15));
}

TEST_CASE("rank metrics refuse unusable input", "[metrics]") {
  std::vector<std::string> one = {"A"};
  CHECK_THROWS_AS(spearman(one, one), DataError);
  std::vector<std::string> ab = {"A", "B"}, cd = {"C", "D"};
  CHECK_THROWS_AS(spearman(ab, cd), DataError);
  std::vector<std::string> abc = {"A", "B", "C"};
  CHECK_THROWS_AS(kendall(ab, abc), DataError);
}

TEST_CASE("alignment restricts to common parties preserving order",
          "[alignment]") {
  Ordering a{"ours", "t", {"SDP", "Reiwa", "JCP", "CDP", "LDP"}};
  Ordering b{"expert", "t", {"JCP", "Okinawa", "Reiwa", "CDP", "LDP"}};
  auto al = align_orderings(a, b);
  CHECK(al.a == std::vector<std::string>{"Reiwa", "JCP", "CDP", "LDP"});
  CHECK(al.b == std::vector<std::string>{"JCP", "Reiwa", "CDP", "LDP"});
  CHECK(al.dropped_a == std::vector<std::string>{"SDP"});
  CHECK(al.dropped_b == std::vector<std::string>{"Okinawa"});

  Ordering tiny{"x", "t", {"A", "B"}};
  Ordering disjoint{"y", "t", {"C", "B"}};
  CHECK_THROWS_AS(align_orderings(tiny, disjoint), DataError);

  Ordering dup{"d", "t", {"A", "A"}};
  CHECK_THROWS_AS(align_orderings(dup, tiny), DataError);
}

TEST_CASE("comparison runs all three metrics after alignment", "[alignment]") {
  Ordering a{"ours", "", {"A", "B", "C", "X"}};
  Ordering b{"expert", "fallback topic", {"A", "C", "B", "Y"}};
  auto cmp = compare_orderings(a, b);
  CHECK(cmp.topic == "fallback topic");
  CHECK(cmp.alignment.a == std::vector<std::string>{"A", "B", "C"});
  CHECK(cmp.kendall_tau == Catch::Approx(1.0 / 3.0).margin(1e-15));
  CHECK(cmp.spearman_rho == Catch::Approx(oracle_spearman(
                                cmp.alignment.a, cmp.alignment.b))
                                .margin(1e-12));
}

TEST_CASE("score orderings average per party, most negative first",
          "[ordering]") {
  std::vector<std::pair<std::string, double>> rows = {
      {"P1", -0.5}, {"P1", -0.7}, {"P2", 0.9}, {"P3", 0.1}, {"P3", -0.1}};
  auto so = ordering_from_scores("scores", "tax", rows);
  CHECK(so.ordering.label == "scores");
  CHECK(so.ordering.topic == "tax");
  CHECK(so.ordering.parties == std::vector<std::string>{"P1", "P3", "P2"});
  CHECK_FALSE(so.had_ties);

  std::vector<std::pair<std::string, double>> tied = {
      {"B", 0.5}, {"A", 0.5}, {"C", -1.0}};
  auto st = ordering_from_scores("scores", "tax", tied);
  CHECK(st.had_ties);
  // ties resolve by id for determinism
  CHECK(st.ordering.parties == std::vector<std::string>{"C", "A", "B"});

  CHECK_THROWS_AS(ordering_from_scores("s", "t", {}), DataError);
}

TEST_CASE("ordering files round-trip", "[ordering]") {
  auto dir = fs::temp_directory_path() / "polscale_eval_orderings";
  fs::remove_all(dir);
  fs::create_directories(dir);

  std::vector<Ordering> orderings = {
      {"expert", "nuclear", {"JCP", "CDP", "LDP"}},
      {"scores:nuclear", "nuclear", {"CDP", "JCP", "LDP"}}};
  save_orderings(dir / "o.json", orderings);
  CHECK(load_orderings(dir / "o.json") == orderings);

  write_file(dir / "empty.json", "[]");
  CHECK_THROWS_AS(load_orderings(dir / "empty.json"), DataError);
  write_file(dir / "bad.json", "{");
  CHECK_THROWS_AS(load_orderings(dir / "bad.json"), ConfigError);
}

TEST_CASE("pmi hand-counted cases are exact", "[pmi]") {
  // perfect association: N=4, c(x)=2, c(y)=2, c(x,y)=2 -> log2(4*2/4) = 1
  std::vector<std::pair<std::string, std::string>> assoc = {
      {"phrase", "left"}, {"phrase", "left"}, {"other", "right"},
      {"other", "right"}};
  auto t = pmi_table(assoc, 1, 10);
  CHECK(t.total == 4);
  REQUIRE(t.by_cluster.at("left").size() == 1);
  CHECK(t.by_cluster.at("left")[0].phrase == "phrase");
  CHECK(t.by_cluster.at("left")[0].pmi == 1.0);
  CHECK(t.by_cluster.at("left")[0].count == 2);

  // independence: phrase split evenly across clusters -> PMI exactly 0
  std::vector<std::pair<std::string, std::string>> indep = {
      {"p", "left"}, {"p", "right"}, {"q", "left"}, {"q", "right"}};
  auto ti = pmi_table(indep, 1, 10);
  CHECK(ti.by_cluster.at("left")[0].pmi == 0.0);
  CHECK(ti.by_cluster.at("right")[1].pmi == 0.0);
}

TEST_CASE("pmi joint counts sum to the total on random corpora", "[pmi]") {
  std::mt19937 g(99);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::pair<std::string, std::string>> occ;
    size_t n = 50 + g() % 200;
    for (size_t i = 0; i < n; ++i)
      occ.push_back({"p" + std::to_string(g() % 17),
                     "c" + std::to_string(g() % 3)});
    auto t = pmi_table(occ, 1, 1000000);
    long mass = 0;
    for (const auto& [cluster, entries] : t.by_cluster)
      for (const auto& e : entries) mass += e.count;
    CHECK(mass == static_cast<long>(n));
  }
}

TEST_CASE("pmi filters rare phrases and truncates to top_k", "[pmi]") {
  std::vector<std::pair<std::string, std::string>> occ;
  for (int i = 0; i < 5; ++i) occ.push_back({"common", "A"});
  occ.push_back({"rare", "A"});
  for (int i = 0; i < 5; ++i) occ.push_back({"filler", "B"});

  auto t = pmi_table(occ, 5, 10);
  // 'rare' (count 1) and nothing else below threshold appears
  for (const auto& e : t.by_cluster.at("A")) CHECK(e.phrase != "rare");
  REQUIRE(t.by_cluster.at("A").size() == 1);
  CHECK(t.by_cluster.at("A")[0].phrase == "common");

  // top_k keeps the highest-pmi rows
  std::vector<std::pair<std::string, std::string>> many;
  for (int p = 0; p < 30; ++p)
    for (int r = 0; r < 2; ++r) many.push_back({"w" + std::to_string(p), "C"});
  auto tk = pmi_table(many, 1, 7);
  CHECK(tk.by_cluster.at("C").size() == 7);

  CHECK_THROWS_AS(pmi_table({}, 1, 1), DataError);
  CHECK_THROWS_AS(pmi_table(occ, 0, 1), ConfigError);
  CHECK_THROWS_AS(pmi_table(occ, 1, 0), ConfigError);
}

TEST_CASE("pmi rows sort by association strength", "[pmi]") {
  // 'strong' only in A; 'weak' mostly in B
  std::vector<std::pair<std::string, std::string>> occ = {
      {"strong", "A"}, {"strong", "A"}, {"weak", "A"},
      {"weak", "B"},   {"weak", "B"},   {"weak", "B"}};
  auto t = pmi_table(occ, 1, 10);
  const auto& a_rows = t.by_cluster.at("A");
  REQUIRE(a_rows.size() == 2);
  CHECK(a_rows[0].phrase == "strong");
  CHECK(a_rows[0].pmi > a_rows[1].pmi);
}

TEST_CASE("default phrase extraction yields tokens and bigrams", "[phrases]") {
  auto ph = extract_phrases("nuclear power plant");
  CHECK(ph == std::vector<std::string>{"nuclear", "power", "plant",
                                       "nuclear power", "power plant"});
  CHECK(extract_phrases("").empty());
  CHECK(extract_phrases("solo") == std::vector<std::string>{"solo"});
}

TEST_CASE("phrase tagger round-trips over http", "[phrases][http]") {
  httplib::Server server;
  server.Post("/tag", [](const httplib::Request& req, httplib::Response& res) {
    json texts = json::parse(req.body);
    json out = json::array();
    for (const auto& t : texts)
      out.push_back(json::array({t.get<std::string>() + "-tagged"}));
    res.set_content(out.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  PhraseTagger tagger("http://127.0.0.1:" + std::to_string(port) + "/tag");
  auto tags = tagger.tag({"a", "b"});
  REQUIRE(tags.size() == 2);
  CHECK(tags[0] == std::vector<std::string>{"a-tagged"});
  CHECK(tags[1] == std::vector<std::string>{"b-tagged"});

  server.stop();
  th.join();
}
