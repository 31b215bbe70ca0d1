#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "polscale/scale.hpp"

using namespace polscale;
using namespace polscale::scale;
using embed::EmbeddingVector;

namespace {

EmbeddingVector vec(std::vector<double> v) {
  EmbeddingVector e;
  e.values = std::move(v);
  return e;
}

Axis make_axis(std::vector<double> con, std::vector<double> pro) {
  Axis a;
  a.spec = {"test axis", "pro text", "con text"};
  a.con_ref = vec(std::move(con));
  a.pro_ref = vec(std::move(pro));
  return a;
}

// Random orthogonal matrix via modified Gram-Schmidt over uniform entries.
std::vector<std::vector<double>> random_orthogonal(size_t d, std::mt19937& g) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::vector<double>> q;
  while (q.size() < d) {
    std::vector<double> v(d);
    for (auto& x : v) x = u(g);
    for (const auto& b : q) {
      double proj = 0;
      for (size_t i = 0; i < d; ++i) proj += v[i] * b[i];
      for (size_t i = 0; i < d; ++i) v[i] -= proj * b[i];
    }
    double n = 0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n < 1e-6) continue;  // rare near-dependence, draw again
    for (auto& x : v) x /= n;
    q.push_back(std::move(v));
  }
  return q;
}

std::vector<double> apply_similarity(const std::vector<std::vector<double>>& q,
                                     double s, const std::vector<double>& t,
                                     const std::vector<double>& v) {
  size_t d = v.size();
  std::vector<double> out(d, 0.0);
  for (size_t i = 0; i < d; ++i) {
    for (size_t j = 0; j < d; ++j) out[i] += q[i][j] * v[j];
    out[i] = s * out[i] + t[i];
  }
  return out;
}

}  // namespace

TEST_CASE("axis endpoints map to exactly -1 and +1", "[project]") {
  auto axis = make_axis({0.25, -0.5, 0.125}, {1.0, 0.75, -0.25});
  CHECK(project_score(axis.pro_ref, axis) == 1.0);
  CHECK(project_score(axis.con_ref, axis) == -1.0);
  auto mid = vec({0.625, 0.125, -0.0625});
  CHECK(project_score(mid, axis) == 0.0);
}

TEST_CASE("scores on a dyadic lattice grid are exact", "[project]") {
  // every quantity is a small dyadic rational, so the arithmetic is exact
  std::vector<double> con = {3.0 / 256, -7.0 / 256, 0.0, 5.0 / 256};
  std::vector<double> pro = {9.0 / 256, 1.0 / 256, -4.0 / 256, 6.0 / 256};
  auto axis = make_axis(con, pro);
  for (int k = 0; k <= 256; ++k) {
    double lambda = k / 256.0;
    std::vector<double> v(con.size());
    for (size_t i = 0; i < v.size(); ++i)
      v[i] = con[i] + lambda * (pro[i] - con[i]);
    CHECK(project_score(vec(v), axis) == 2.0 * lambda - 1.0);
  }
}

TEST_CASE("scores beyond the endpoints are not clipped", "[project]") {
  std::vector<double> con = {0.0, 0.0}, pro = {1.0, 0.0};
  auto axis = make_axis(con, pro);
  CHECK(project_score(vec({1.5, 0.0}), axis) == 2.0);
  CHECK(project_score(vec({-0.5, 3.0}), axis) == -2.0);
}

TEST_CASE("off-chord displacement does not move the score", "[project]") {
  auto axis = make_axis({0.0, 0.0, 0.0}, {1.0, 0.0, 0.0});
  CHECK(project_score(vec({0.75, 0.0, 0.0}), axis) == 0.5);
  CHECK(project_score(vec({0.75, 5.0, -2.0}), axis) == 0.5);
}

TEST_CASE("projection commutes with similarity transforms", "[project]") {
  std::mt19937 g(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> su(0.1, 4.0);
  size_t d = 8;

  std::vector<double> con(d), pro(d), v(d);
  for (auto& x : con) x = u(g);
  for (auto& x : pro) x = u(g);
  for (auto& x : v) x = u(g);
  auto axis = make_axis(con, pro);
  double base = project_score(vec(v), axis);

  for (int trial = 0; trial < 100; ++trial) {
    auto q = random_orthogonal(d, g);
    double s = su(g);
    std::vector<double> t(d);
    for (auto& x : t) x = u(g) * 10.0;

    auto mapped = make_axis(apply_similarity(q, s, t, con),
                            apply_similarity(q, s, t, pro));
    double got = project_score(vec(apply_similarity(q, s, t, v)), mapped);
    CHECK(std::abs(got - base) <= 1e-9);
  }
}

TEST_CASE("projection of the mean is the mean of projections", "[project]") {
  std::mt19937 g(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  size_t d = 6, n = 9;
  std::vector<double> con(d), pro(d);
  for (auto& x : con) x = u(g);
  for (auto& x : pro) x = u(g);
  auto axis = make_axis(con, pro);

  std::vector<std::vector<double>> pts(n, std::vector<double>(d));
  for (auto& p : pts)
    for (auto& x : p) x = u(g);

  double mean_of_scores = 0;
  std::vector<double> mean_pt(d, 0.0);
  for (const auto& p : pts) {
    mean_of_scores += project_score(vec(p), axis);
    for (size_t i = 0; i < d; ++i) mean_pt[i] += p[i];
  }
  mean_of_scores /= static_cast<double>(n);
  for (auto& x : mean_pt) x /= static_cast<double>(n);

  CHECK(std::abs(project_score(vec(mean_pt), axis) - mean_of_scores) <= 1e-12);
}

TEST_CASE("projection rejects broken axes and inputs", "[project]") {
  auto coincident = make_axis({1.0, 2.0}, {1.0, 2.0});
  CHECK_THROWS_AS(project_score(vec({0.0, 0.0}), coincident), DataError);

  auto axis = make_axis({0.0, 0.0}, {1.0, 0.0});
  CHECK_THROWS_AS(project_score(vec({0.0, 0.0, 0.0}), axis), DataError);

  auto mismatched = make_axis({0.0, 0.0}, {1.0, 0.0, 0.0});
  CHECK_THROWS_AS(project_score(vec({0.0, 0.0}), mismatched), DataError);
}

TEST_CASE("normalized projection measures angles, not magnitudes",
          "[project]") {
  // after normalization a scaled copy of a vector scores identically
  auto axis = make_axis({1.0, 0.0}, {0.0, 1.0});
  auto a = project_score(vec({0.6, 0.8}), axis, true);
  auto b = project_score(vec({6.0, 8.0}), axis, true);
  CHECK(std::abs(a - b) <= 1e-12);
  // without normalization the magnitudes matter
  auto c = project_score(vec({0.6, 0.8}), axis, false);
  auto e = project_score(vec({6.0, 8.0}), axis, false);
  CHECK(std::abs(c - e) > 1e-6);
  // zero vector cannot be normalized
  CHECK_THROWS_AS(project_score(vec({0.0, 0.0}), axis, true), DataError);
}

TEST_CASE("scale_subjects scores one summary per subject", "[subjects]") {
  auto axis = make_axis({0.0, 0.0}, {1.0, 0.0});
  llm::StanceSummary s1, s2;
  s1.legislator_id = "L1";
  s1.embedding = {0.25, 0.0};
  s2.legislator_id = "L2";
  s2.embedding = {0.75, 1.0};

  auto scores = scale_subjects({s1, s2}, axis);
  REQUIRE(scores.size() == 2);
  CHECK(scores[0] == ScaledScore{"L1", "test axis", -0.5});
  CHECK(scores[1] == ScaledScore{"L2", "test axis", 0.5});

  llm::StanceSummary bare;
  bare.legislator_id = "L3";
  CHECK_THROWS_AS(scale_subjects({bare}, axis), DataError);
  CHECK_THROWS_AS(scale_subjects({s1, s1}, axis), DataError);
}

TEST_CASE("three-way clustering splits the observed range into equal bands",
          "[cluster]") {
  std::vector<ScaledScore> scores = {
      {"a", "t", -1.0}, {"b", "t", -0.9}, {"c", "t", 0.0},
      {"d", "t", 0.9},  {"e", "t", 1.0},
  };
  auto c = cluster_three_way(scores);
  CHECK_FALSE(c.degenerate);
  CHECK(c.lower == Catch::Approx(-1.0 / 3.0));
  CHECK(c.upper == Catch::Approx(1.0 / 3.0));
  CHECK(c.assignment.at("a") == Cluster::Against);
  CHECK(c.assignment.at("b") == Cluster::Against);
  CHECK(c.assignment.at("c") == Cluster::Middle);
  CHECK(c.assignment.at("d") == Cluster::For);
  CHECK(c.assignment.at("e") == Cluster::For);
}

TEST_CASE("clustering boundaries are left-closed right-open, top band closed",
          "[cluster]") {
  // range [0, 3]: boundaries at 1 and 2
  std::vector<ScaledScore> scores = {
      {"lo", "t", 0.0}, {"b1", "t", 1.0}, {"b2", "t", 2.0}, {"hi", "t", 3.0}};
  auto c = cluster_three_way(scores);
  CHECK(c.assignment.at("lo") == Cluster::Against);
  CHECK(c.assignment.at("b1") == Cluster::Middle);  // boundary joins upper band
  CHECK(c.assignment.at("b2") == Cluster::For);
  CHECK(c.assignment.at("hi") == Cluster::For);
}

TEST_CASE("clustering degenerates gracefully when all scores coincide",
          "[cluster]") {
  std::vector<ScaledScore> scores = {{"a", "t", 0.5}, {"b", "t", 0.5}};
  auto c = cluster_three_way(scores);
  CHECK(c.degenerate);
  CHECK(c.assignment.at("a") == Cluster::Middle);
  CHECK(c.assignment.at("b") == Cluster::Middle);

  CHECK_THROWS_AS(cluster_three_way({}), DataError);
  std::vector<ScaledScore> dup = {{"a", "t", 0.1}, {"a", "t", 0.9}};
  CHECK_THROWS_AS(cluster_three_way(dup), DataError);
}

TEST_CASE("symmetric eigensolver matches hand-computed spectra", "[linalg]") {
  // [[2,1],[1,2]] has eigenvalues 3 and 1
  linalg::Matrix m = {{2.0, 1.0}, {1.0, 2.0}};
  auto eig = linalg::sym_eigen(m);
  CHECK(eig.values[0] == Catch::Approx(3.0).margin(1e-12));
  CHECK(eig.values[1] == Catch::Approx(1.0).margin(1e-12));

  // residual ||A v - lambda v|| for a bigger random symmetric matrix
  std::mt19937 g(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  size_t d = 6;
  linalg::Matrix a(d, std::vector<double>(d));
  for (size_t i = 0; i < d; ++i)
    for (size_t j = 0; j <= i; ++j) a[i][j] = a[j][i] = u(g);
  auto e2 = linalg::sym_eigen(a);
  for (size_t k = 0; k + 1 < d; ++k)
    CHECK(e2.values[k] >= e2.values[k + 1]);  // sorted descending
  for (size_t k = 0; k < d; ++k) {
    double resid = 0;
    for (size_t i = 0; i < d; ++i) {
      double av = 0;
      for (size_t j = 0; j < d; ++j) av += a[i][j] * e2.vectors[k][j];
      resid += (av - e2.values[k] * e2.vectors[k][i]) *
               (av - e2.values[k] * e2.vectors[k][i]);
    }
    CHECK(std::sqrt(resid) < 1e-9);
  }
  // orthonormality
  for (size_t p = 0; p < d; ++p)
    for (size_t q = 0; q <= p; ++q) {
      double dot = 0;
      for (size_t i = 0; i < d; ++i)
        dot += e2.vectors[p][i] * e2.vectors[q][i];
      CHECK(std::abs(dot - (p == q ? 1.0 : 0.0)) < 1e-9);
    }
}

TEST_CASE("pca projects onto the two leading components", "[pca]") {
  // points spread along (1,1,0) with slight (1,-1,0) noise: first component
  // recovers the diagonal
  std::vector<std::pair<std::string, EmbeddingVector>> pts;
  for (int i = 0; i < 8; ++i) {
    double a = i - 3.5, b = (i % 2 == 0 ? 0.1 : -0.1);
    pts.push_back({"p" + std::to_string(i), vec({a + b, a - b, 0.0})});
  }
  auto plane = pca_2d(pts);
  REQUIRE(plane.points.size() == 8);
  CHECK(plane.eigenvalues[0] > plane.eigenvalues[1]);
  CHECK(plane.eigenvalues[1] > 0.0);
  // x spread dominates y spread
  double sx = 0, sy = 0;
  for (const auto& p : plane.points) {
    sx += p.x * p.x;
    sy += p.y * p.y;
  }
  CHECK(sx > 100 * sy);
}

TEST_CASE("pca output is deterministic and carries the axis chord", "[pca]") {
  std::vector<std::pair<std::string, EmbeddingVector>> pts = {
      {"a", vec({0.0, 0.0, 1.0})},
      {"b", vec({1.0, 0.5, 0.0})},
      {"c", vec({2.0, -0.5, 0.5})},
      {"d", vec({3.0, 0.25, 0.25})}};
  auto axis = make_axis({0.0, 0.0, 0.0}, {3.0, 0.0, 0.0});
  auto p1 = pca_2d(pts, &axis);
  auto p2 = pca_2d(pts, &axis);
  CHECK(p1.points == p2.points);
  REQUIRE(p1.pro_ref.has_value());
  REQUIRE(p1.con_ref.has_value());
  // the chord endpoints are far apart in the plane
  double dx = p1.pro_ref->x - p1.con_ref->x;
  double dy = p1.pro_ref->y - p1.con_ref->y;
  CHECK(std::sqrt(dx * dx + dy * dy) > 1.0);
}

TEST_CASE("pca rejects unusable input", "[pca]") {
  std::vector<std::pair<std::string, EmbeddingVector>> one = {
      {"a", vec({1.0, 2.0})}};
  CHECK_THROWS_AS(pca_2d(one), DataError);

  std::vector<std::pair<std::string, EmbeddingVector>> narrow = {
      {"a", vec({1.0})}, {"b", vec({2.0})}};
  CHECK_THROWS_AS(pca_2d(narrow), DataError);

  std::vector<std::pair<std::string, EmbeddingVector>> mixed = {
      {"a", vec({1.0, 2.0})}, {"b", vec({1.0, 2.0, 3.0})}};
  CHECK_THROWS_AS(pca_2d(mixed), DataError);

  std::vector<std::pair<std::string, EmbeddingVector>> flat = {
      {"a", vec({1.0, 2.0})}, {"b", vec({1.0, 2.0})}};
  CHECK_THROWS_AS(pca_2d(flat), DataError);
}

TEST_CASE("build_axis averages the embedded reference speeches", "[axis]") {
  class EchoProvider final : public llm::ChatProvider {
   public:
    std::string complete(const llm::ChatRequest& req) override {
      return "speech " + req.seed_tag;
    }
    std::string name() const override { return "echo"; }
  };
  llm::LlmGateway gw(std::make_shared<EchoProvider>(), nullptr,
                     llm::Mode::Live);
  embed::HashEmbeddingClient embedder(8);

  llm::ControversyAxisSpec spec{"issue", "pro side", "con side"};
  auto axis = build_axis(spec, gw, embedder, 3);
  CHECK(axis.spec == spec);
  REQUIRE(axis.pro_ref.dim() == 8);

  // oracle: embed the three known texts directly and average them
  auto direct = embedder.embed_batch(
      {"speech ref:pro:0", "speech ref:pro:1", "speech ref:pro:2"});
  for (size_t i = 0; i < 8; ++i) {
    double want = (direct[0][i] + direct[1][i] + direct[2][i]) / 3.0;
    CHECK(axis.pro_ref.values[i] == Catch::Approx(want).margin(1e-15));
  }

  CHECK_THROWS_AS(build_axis(spec, gw, embedder, 0), ConfigError);
}

TEST_CASE("external plane files load with validation", "[pca]") {
  auto dir = std::filesystem::temp_directory_path() / "polscale_scale_plane";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  write_file(dir / "plane.tsv", "a\t0.5\t1.5\nb\t-1\t2\n");
  auto plane = load_plane_2d(dir / "plane.tsv");
  CHECK(plane.method == "external");
  REQUIRE(plane.points.size() == 2);
  CHECK(plane.points[0] == Projection2D{"a", 0.5, 1.5});

  write_file(dir / "bad.tsv", "a\tnot-a-number\t2\n");
  CHECK_THROWS_AS(load_plane_2d(dir / "bad.tsv"), DataError);
}
