#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "polscale/embed.hpp"
#include "polscale/linalg.hpp"
#include "polscale/llm.hpp"

namespace polscale::scale {

using embed::EmbeddingVector;

struct Axis {
  llm::ControversyAxisSpec spec;
  EmbeddingVector pro_ref;
  EmbeddingVector con_ref;
};

inline constexpr double kDegenerateAxisEps = 1e-12;

inline void validate(const Axis& axis) {
  if (axis.pro_ref.dim() == 0 || axis.pro_ref.dim() != axis.con_ref.dim())
    throw DataError("axis endpoints have mismatched dimensions");
  std::vector<double> d(axis.pro_ref.dim());
  for (size_t i = 0; i < d.size(); ++i)
    d[i] = axis.pro_ref.values[i] - axis.con_ref.values[i];
  if (embed::norm(d) <= kDegenerateAxisEps)
    throw DataError("degenerate axis: reference endpoints coincide for '" +
                    axis.spec.topic + "'");
}

// Builds the axis for one controversy: n_refs generated speeches per side,
// each embedded, means become the endpoints.
inline Axis build_axis(const llm::ControversyAxisSpec& spec,
                       const llm::LlmGateway& gateway,
                       embed::IEmbeddingClient& embedder, int n_refs = 3,
                       const std::filesystem::path& embed_cache = {}) {
  if (n_refs < 1) throw ConfigError("n_refs must be >= 1");
  std::vector<std::string> pro_texts, con_texts;
  for (int i = 0; i < n_refs; ++i) {
    pro_texts.push_back(
        gateway.generate_reference_speech(spec, llm::Side::Pro, i));
    con_texts.push_back(
        gateway.generate_reference_speech(spec, llm::Side::Con, i));
  }
  Axis axis;
  axis.spec = spec;
  axis.pro_ref = embed::mean_vector(embed::embed_texts(pro_texts, embedder, embed_cache));
  axis.con_ref = embed::mean_vector(embed::embed_texts(con_texts, embedder, embed_cache));
  axis.pro_ref.source_id = "pro_ref";
  axis.con_ref.source_id = "con_ref";
  validate(axis);
  return axis;
}

struct ScaledScore {
  std::string subject_id;
  std::string axis_topic;
  double score = 0.0;  // con endpoint -1, pro endpoint +1, not clipped

  bool operator==(const ScaledScore&) const = default;
};

// Orthogonal projection onto the con->pro chord, mapped to [-1, 1] at the
// endpoints. Values beyond the endpoints stay beyond; clipping would destroy
// the ordering in the tails.
inline double project_score(const EmbeddingVector& v, const Axis& axis,
                            bool normalize = false) {
  validate(axis);
  if (v.dim() != axis.pro_ref.dim())
    throw DataError("projection dimension mismatch");
  auto unit = [](std::vector<double> x) {
    double n = embed::norm(x);
    if (n == 0.0) throw DataError("cannot normalize zero vector");
    for (double& c : x) c /= n;
    return x;
  };
  std::vector<double> vv = v.values, pro = axis.pro_ref.values,
                      con = axis.con_ref.values;
  if (normalize) {
    vv = unit(vv);
    pro = unit(pro);
    con = unit(con);
  }
  std::vector<double> d(pro.size()), rel(pro.size());
  for (size_t i = 0; i < d.size(); ++i) {
    d[i] = pro[i] - con[i];
    rel[i] = vv[i] - con[i];
  }
  double denom = embed::dot(d, d);
  if (denom <= kDegenerateAxisEps * kDegenerateAxisEps)
    throw DataError("degenerate axis after normalization");
  double t = embed::dot(rel, d) / denom;
  return 2.0 * t - 1.0;
}

// One summary per subject in, one score per subject out.
inline std::vector<ScaledScore> scale_subjects(
    const std::vector<llm::StanceSummary>& summaries, const Axis& axis,
    bool normalize = false) {
  std::vector<ScaledScore> out;
  out.reserve(summaries.size());
  std::map<std::string, bool> seen;
  for (const auto& s : summaries) {
    if (s.embedding.empty())
      throw DataError("summary for " + s.legislator_id + " has no embedding");
    if (seen.count(s.legislator_id))
      throw DataError("more than one summary for subject " + s.legislator_id);
    seen[s.legislator_id] = true;
    EmbeddingVector v{s.embedding, s.legislator_id};
    out.push_back({s.legislator_id, axis.spec.topic,
                   project_score(v, axis, normalize)});
  }
  return out;
}

enum class Cluster { Against, Middle, For };

inline std::string cluster_token(Cluster c) {
  switch (c) {
    case Cluster::Against: return "against";
    case Cluster::Middle: return "middle";
    default: return "for";
  }
}

struct ThreeWayClustering {
  double lower = 0.0;  // Against/Middle boundary
  double upper = 0.0;  // Middle/For boundary
  bool degenerate = false;  // all scores equal
  std::map<std::string, Cluster> assignment;
};

// Splits the observed score range into three equal-width bands. Intervals are
// left-closed right-open except the last; equal scores everywhere means there
// is no range to split, so everything is Middle.
inline ThreeWayClustering cluster_three_way(
    const std::vector<ScaledScore>& scores) {
  if (scores.empty()) throw DataError("cluster_three_way: no scores");
  double lo = scores[0].score, hi = scores[0].score;
  for (const auto& s : scores) {
    lo = std::min(lo, s.score);
    hi = std::max(hi, s.score);
  }
  ThreeWayClustering out;
  out.lower = lo + (hi - lo) / 3.0;
  out.upper = lo + 2.0 * (hi - lo) / 3.0;
  out.degenerate = !(lo < hi);
  for (const auto& s : scores) {
    Cluster c;
    if (out.degenerate) {
      c = Cluster::Middle;
    } else if (s.score < out.lower) {
      c = Cluster::Against;
    } else if (s.score < out.upper) {
      c = Cluster::Middle;
    } else {
      c = Cluster::For;
    }
    if (!out.assignment.emplace(s.subject_id, c).second)
      throw DataError("duplicate subject in clustering: " + s.subject_id);
  }
  return out;
}

struct Projection2D {
  std::string subject_id;
  double x = 0.0, y = 0.0;

  bool operator==(const Projection2D&) const = default;
};

struct Plane2D {
  std::vector<Projection2D> points;
  std::array<double, 2> eigenvalues{0.0, 0.0};
  // axis endpoints mapped through the same transform, when an axis was given
  std::optional<Projection2D> pro_ref, con_ref;
  std::string method = "pca";
};

// 2-D principal-component view of the embeddings, with a deterministic sign:
// each component's largest-magnitude loading is positive. When an axis is
// supplied its endpoints ride through the identical transform so the chord
// can be drawn over the cloud.
inline Plane2D pca_2d(
    const std::vector<std::pair<std::string, EmbeddingVector>>& subjects,
    const Axis* axis = nullptr) {
  if (subjects.size() < 2)
    throw DataError("pca_2d needs at least two subjects");
  size_t d = subjects[0].second.dim();
  if (d < 2) throw DataError("pca_2d needs dimension >= 2");
  for (const auto& [id, v] : subjects)
    if (v.dim() != d) throw DataError("pca_2d: mixed dimensions");

  std::vector<double> mean(d, 0.0);
  for (const auto& [id, v] : subjects)
    for (size_t i = 0; i < d; ++i) mean[i] += v.values[i];
  for (double& m : mean) m /= static_cast<double>(subjects.size());

  linalg::Matrix cov(d, std::vector<double>(d, 0.0));
  for (const auto& [id, v] : subjects)
    for (size_t i = 0; i < d; ++i)
      for (size_t j = 0; j < d; ++j)
        cov[i][j] += (v.values[i] - mean[i]) * (v.values[j] - mean[j]);
  double denom = static_cast<double>(subjects.size() - 1);
  for (auto& row : cov)
    for (double& x : row) x /= denom;

  auto eig = linalg::sym_eigen(cov);
  if (eig.values[0] <= 1e-24)
    throw DataError("pca_2d: zero-variance data (all points identical)");

  std::array<std::vector<double>, 2> comp{eig.vectors[0], eig.vectors[1]};
  for (auto& c : comp) {
    size_t argmax = 0;
    for (size_t i = 1; i < c.size(); ++i)
      if (std::abs(c[i]) > std::abs(c[argmax])) argmax = i;
    if (c[argmax] < 0)
      for (double& x : c) x = -x;
  }

  auto map_point = [&](const std::vector<double>& v) {
    std::array<double, 2> xy{0.0, 0.0};
    for (size_t k = 0; k < 2; ++k)
      for (size_t i = 0; i < d; ++i)
        xy[k] += comp[k][i] * (v[i] - mean[i]);
    return xy;
  };

  Plane2D out;
  out.eigenvalues = {eig.values[0], eig.values[1]};
  for (const auto& [id, v] : subjects) {
    auto xy = map_point(v.values);
    out.points.push_back({id, xy[0], xy[1]});
  }
  if (axis) {
    validate(*axis);
    if (axis->pro_ref.dim() != d)
      throw DataError("pca_2d: axis dimension mismatch");
    auto p = map_point(axis->pro_ref.values);
    auto c = map_point(axis->con_ref.values);
    out.pro_ref = Projection2D{"pro_ref", p[0], p[1]};
    out.con_ref = Projection2D{"con_ref", c[0], c[1]};
  }
  return out;
}

// Pre-computed 2-D coordinates from an external reducer: TSV-ish delimited
// lines "subject <tab> x <tab> y".
inline Plane2D load_plane_2d(const std::filesystem::path& path) {
  Plane2D out;
  out.method = "external";
  std::string content = read_file(path);
  size_t line_no = 0;
  for (const auto& line : split(content, '\n')) {
    ++line_no;
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto cols = split(t, '\t');
    if (cols.size() != 3)
      throw DataError(path.string() + ": line " + std::to_string(line_no) +
                      ": expected 3 tab-separated columns");
    try {
      out.points.push_back(
          {trim(cols[0]), std::stod(cols[1]), std::stod(cols[2])});
    } catch (const std::exception&) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) +
                      ": bad coordinate");
    }
  }
  if (out.points.empty())
    throw DataError(path.string() + ": no coordinate rows");
  return out;
}

}  // namespace polscale::scale
