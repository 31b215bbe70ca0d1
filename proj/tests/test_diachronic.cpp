#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "polscale/diachronic.hpp"

using namespace polscale;
using namespace polscale::diachronic;
using embed::EmbeddingVector;

namespace {

EmbeddingVector vec(std::vector<double> v) {
  EmbeddingVector e;
  e.values = std::move(v);
  return e;
}

scale::Axis unit_axis() {
  scale::Axis a;
  a.spec = {"axis", "p", "c"};
  a.con_ref = vec({0.0, 0.0});
  a.pro_ref = vec({1.0, 0.0});
  return a;
}

filter::OpinionRecord record(const std::string& speaker,
                             const std::string& party,
                             const std::string& date,
                             std::vector<std::string> opinions) {
  filter::OpinionRecord r;
  r.speech_id = "S-" + speaker + "-" + date;
  r.date = date;
  r.speaker_id = speaker;
  r.speaker_group = party;
  r.extracted_opinions = std::move(opinions);
  return r;
}

}  // namespace

TEST_CASE("segment refs expand one row per opinion", "[segments]") {
  auto refs = segment_refs_from_opinions(
      {record("a", "P1", "2019-03-01", {"o1", "o2"}),
       record("b", "P2", "2020-11-30", {"o3"})});
  REQUIRE(refs.size() == 3);
  CHECK(refs[0].party_id == "P1");
  CHECK(refs[0].speaker_id == "a");
  CHECK(refs[0].year == 2019);
  CHECK(refs[0].text == "o1");
  CHECK(refs[2].year == 2020);
}

TEST_CASE("party-year mean matches a direct average", "[mean]") {
  std::vector<SegmentRef> segs = {
      {"P1", "a", 2020, "t1"},
      {"P1", "b", 2020, "t2"},
      {"P1", "a", 2021, "t3"},  // other year, excluded
      {"P2", "c", 2020, "t4"},  // other party, excluded
  };
  std::map<std::string, EmbeddingVector> emb = {
      {"t1", vec({0.2, 1.0})},
      {"t2", vec({0.6, 3.0})},
      {"t3", vec({9.0, 9.0})},
      {"t4", vec({-9.0, -9.0})},
  };
  auto pyv = party_year_vector("P1", 2020, segs, emb);
  REQUIRE(pyv.has_value());
  CHECK(pyv->n_segments == 2);
  CHECK(pyv->n_representatives == 2);
  CHECK(pyv->mean.values[0] == Catch::Approx(0.4).margin(1e-15));
  CHECK(pyv->mean.values[1] == Catch::Approx(2.0).margin(1e-15));

  CHECK_FALSE(party_year_vector("P1", 1999, segs, emb).has_value());
  CHECK_FALSE(party_year_vector("P9", 2020, segs, emb).has_value());

  std::vector<SegmentRef> missing = {{"P1", "a", 2020, "absent"}};
  CHECK_THROWS_AS(party_year_vector("P1", 2020, missing, emb), DataError);
}

TEST_CASE("speaker weighting flattens prolific speakers", "[mean]") {
  // speaker a shouts three times at x=0, speaker b speaks once at x=1
  std::vector<SegmentRef> segs = {
      {"P1", "a", 2020, "a1"},
      {"P1", "a", 2020, "a2"},
      {"P1", "a", 2020, "a3"},
      {"P1", "b", 2020, "b1"},
  };
  std::map<std::string, EmbeddingVector> emb = {
      {"a1", vec({0.0, 0.0})},
      {"a2", vec({0.0, 0.0})},
      {"a3", vec({0.0, 0.0})},
      {"b1", vec({1.0, 0.0})},
  };
  auto raw = party_year_vector("P1", 2020, segs, emb, false);
  auto weighted = party_year_vector("P1", 2020, segs, emb, true);
  REQUIRE(raw.has_value());
  REQUIRE(weighted.has_value());
  CHECK(raw->mean.values[0] == Catch::Approx(0.25).margin(1e-15));
  CHECK(weighted->mean.values[0] == Catch::Approx(0.5).margin(1e-15));
  CHECK(raw->n_representatives == 2);
  CHECK(weighted->n_representatives == 2);
}

TEST_CASE("series matches a brute-force per-cell oracle", "[series]") {
  std::mt19937 g(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  std::vector<SegmentRef> segs;
  std::map<std::string, EmbeddingVector> emb;
  std::vector<std::string> parties = {"P1", "P2", "P3"};
  int idx = 0;
  for (const auto& p : parties)
    for (int year = 2018; year <= 2021; ++year) {
      int n = static_cast<int>(g() % 4);  // possibly zero rows
      for (int k = 0; k < n; ++k) {
        std::string text = "t" + std::to_string(idx++);
        segs.push_back({p, "sp" + std::to_string(g() % 3), year, text});
        emb[text] = vec({u(g), u(g)});
      }
    }

  auto axis = unit_axis();
  auto series = diachronic_series(segs, emb, axis, parties, 2018, 2021);

  // oracle: group by hand, average, project
  for (const auto& p : parties) {
    for (int year = 2018; year <= 2021; ++year) {
      std::vector<double> xs;
      std::set<std::string> speakers;
      for (const auto& s : segs)
        if (s.party_id == p && s.year == year) {
          xs.push_back(emb[s.text].values[0]);
          speakers.insert(s.speaker_id);
        }
      auto it = std::find_if(series.begin(), series.end(),
                             [&](const PartyYearPosition& row) {
                               return row.party_id == p && row.year == year;
                             });
      if (xs.empty()) {
        CHECK(it == series.end());
        continue;
      }
      REQUIRE(it != series.end());
      double mean_x = 0;
      for (double x : xs) mean_x += x;
      mean_x /= static_cast<double>(xs.size());
      // axis (0,0)->(1,0): score = 2*mean_x - 1
      CHECK(it->score == Catch::Approx(2.0 * mean_x - 1.0).margin(1e-12));
      CHECK(it->n_segments == static_cast<long>(xs.size()));
      CHECK(it->n_representatives == static_cast<long>(speakers.size()));
    }
  }

  // sorted by party then year
  for (size_t i = 1; i < series.size(); ++i) {
    const auto& prev = series[i - 1];
    const auto& cur = series[i];
    CHECK((prev.party_id < cur.party_id ||
           (prev.party_id == cur.party_id && prev.year < cur.year)));
  }
}

TEST_CASE("min_segments suppresses thin cells", "[series]") {
  std::vector<SegmentRef> segs = {
      {"P1", "a", 2020, "t1"},
      {"P1", "a", 2020, "t2"},
      {"P1", "a", 2021, "t3"},
  };
  std::map<std::string, EmbeddingVector> emb = {
      {"t1", vec({0.1, 0.0})},
      {"t2", vec({0.2, 0.0})},
      {"t3", vec({0.3, 0.0})},
  };
  auto axis = unit_axis();
  auto all = diachronic_series(segs, emb, axis, {"P1"}, 2020, 2021, 1);
  CHECK(all.size() == 2);
  auto thick = diachronic_series(segs, emb, axis, {"P1"}, 2020, 2021, 2);
  REQUIRE(thick.size() == 1);
  CHECK(thick[0].year == 2020);
}

TEST_CASE("series rejects inverted windows and zero thresholds", "[series]") {
  auto axis = unit_axis();
  std::map<std::string, EmbeddingVector> emb;
  CHECK_THROWS_AS(diachronic_series({}, emb, axis, {"P"}, 2021, 2020),
                  ConfigError);
  CHECK_THROWS_AS(diachronic_series({}, emb, axis, {"P"}, 2020, 2021, 0),
                  ConfigError);
  CHECK(diachronic_series({}, emb, axis, {"P"}, 2020, 2021).empty());
}

TEST_CASE("the year window bounds the output even when data overflows it",
          "[series]") {
  std::vector<SegmentRef> segs = {
      {"P1", "a", 1990, "t1"},
      {"P1", "a", 2020, "t2"},
      {"P1", "a", 2035, "t3"},
  };
  std::map<std::string, EmbeddingVector> emb = {
      {"t1", vec({0.0, 0.0})},
      {"t2", vec({0.5, 0.0})},
      {"t3", vec({1.0, 0.0})},
  };
  auto series =
      diachronic_series(segs, emb, unit_axis(), {"P1"}, 2000, 2024);
  REQUIRE(series.size() == 1);
  CHECK(series[0].year == 2020);
  CHECK(series[0].score == 0.0);
}
