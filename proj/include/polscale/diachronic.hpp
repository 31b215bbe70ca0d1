#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "polscale/filter.hpp"
#include "polscale/scale.hpp"

namespace polscale::diachronic {

using embed::EmbeddingVector;

// One opinion segment attributed to a party, speaker and calendar year.
struct SegmentRef {
  std::string party_id;
  std::string speaker_id;
  int year = 0;
  std::string text;
};

inline std::vector<SegmentRef> segment_refs_from_opinions(
    const std::vector<filter::OpinionRecord>& records) {
  std::vector<SegmentRef> out;
  for (const auto& r : records) {
    int year = date_year(r.date);
    for (const auto& text : r.extracted_opinions)
      out.push_back({r.speaker_group, r.speaker_id, year, text});
  }
  return out;
}

struct PartyYearVector {
  EmbeddingVector mean;
  long n_segments = 0;
  long n_representatives = 0;  // distinct speakers behind the mean
};

// Mean of the raw opinion-segment embeddings for one (party, year). Nothing
// to average means no value, not a zero vector.
inline std::optional<PartyYearVector> party_year_vector(
    const std::string& party_id, int year,
    const std::vector<SegmentRef>& segments,
    const std::map<std::string, EmbeddingVector>& embedding_of_text,
    bool by_speaker = false) {
  std::vector<EmbeddingVector> vecs;
  std::map<std::string, std::vector<EmbeddingVector>> per_speaker;
  std::set<std::string> speakers;
  long n = 0;
  for (const auto& s : segments) {
    if (s.party_id != party_id || s.year != year) continue;
    auto it = embedding_of_text.find(s.text);
    if (it == embedding_of_text.end())
      throw DataError("no embedding for segment text of " + s.speaker_id);
    ++n;
    speakers.insert(s.speaker_id);
    if (by_speaker)
      per_speaker[s.speaker_id].push_back(it->second);
    else
      vecs.push_back(it->second);
  }
  if (n == 0) return std::nullopt;
  PartyYearVector out;
  if (by_speaker) {
    // every speaker weighs the same regardless of how much they talked
    std::vector<EmbeddingVector> speaker_means;
    speaker_means.reserve(per_speaker.size());
    for (const auto& [id, vs] : per_speaker)
      speaker_means.push_back(embed::mean_vector(vs));
    out.mean = embed::mean_vector(speaker_means);
  } else {
    out.mean = embed::mean_vector(vecs);
  }
  out.mean.source_id = party_id + ":" + std::to_string(year);
  out.n_segments = n;
  out.n_representatives = static_cast<long>(speakers.size());
  return out;
}

struct PartyYearPosition {
  std::string party_id;
  int year = 0;
  double score = 0.0;
  long n_segments = 0;
  long n_representatives = 0;

  bool operator==(const PartyYearPosition&) const = default;
};

// Projects each (party, year) mean onto the axis. Years with fewer than
// min_segments segments are omitted rather than reported as noise. Sorted by
// party then year.
inline std::vector<PartyYearPosition> diachronic_series(
    const std::vector<SegmentRef>& segments,
    const std::map<std::string, EmbeddingVector>& embedding_of_text,
    const scale::Axis& axis, const std::vector<std::string>& parties,
    int year_from, int year_to, long min_segments = 1, bool by_speaker = false,
    bool normalize = false) {
  if (year_from > year_to)
    throw ConfigError("diachronic year range is inverted");
  if (min_segments < 1) throw ConfigError("min_segments must be >= 1");
  std::vector<PartyYearPosition> out;
  for (const auto& party : parties) {
    for (int year = year_from; year <= year_to; ++year) {
      auto pyv = party_year_vector(party, year, segments, embedding_of_text,
                                   by_speaker);
      if (!pyv || pyv->n_segments < min_segments) continue;
      PartyYearPosition p;
      p.party_id = party;
      p.year = year;
      p.score = scale::project_score(pyv->mean, axis, normalize);
      p.n_segments = pyv->n_segments;
      p.n_representatives = pyv->n_representatives;
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace polscale::diachronic
