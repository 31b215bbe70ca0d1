#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "polscale/jsonl.hpp"

namespace polscale::corpus {

enum class House { Unknown, Representatives, Councillors };

inline House parse_house(std::string_view name) {
  auto l = to_lower(name);
  if (l.find("repres") != std::string::npos) return House::Representatives;
  if (l.find("council") != std::string::npos) return House::Councillors;
  if (l == "hr") return House::Representatives;
  if (l == "hc") return House::Councillors;
  return House::Unknown;
}

inline std::string house_token(House h) {
  switch (h) {
    case House::Representatives: return "representatives";
    case House::Councillors: return "councillors";
    default: return "unknown";
  }
}

enum class SegmentLabel { Unlabeled, Opinion, Fact, Question, Descriptive, Other };

inline std::string label_token(SegmentLabel l) {
  switch (l) {
    case SegmentLabel::Opinion: return "opinion";
    case SegmentLabel::Fact: return "fact";
    case SegmentLabel::Question: return "question";
    case SegmentLabel::Descriptive: return "descriptive";
    case SegmentLabel::Other: return "other";
    default: return "unlabeled";
  }
}

inline std::optional<SegmentLabel> label_from_token(std::string_view tok) {
  auto t = to_lower(trim(tok));
  if (t == "opinion") return SegmentLabel::Opinion;
  if (t == "fact") return SegmentLabel::Fact;
  if (t == "question") return SegmentLabel::Question;
  if (t == "descriptive") return SegmentLabel::Descriptive;
  if (t == "other") return SegmentLabel::Other;
  if (t == "unlabeled") return SegmentLabel::Unlabeled;
  return std::nullopt;
}

struct Party {
  std::string id;            // short romanized id, e.g. "LDP"
  std::string name_native;
  std::string name_english;

  bool operator==(const Party&) const = default;
};

struct Legislator {
  std::string id;
  std::string name;
  std::string party_id;
  House house = House::Unknown;
  std::vector<int> service_years;

  bool operator==(const Legislator&) const = default;
};

struct SpeechSegment {
  std::string parent_speech_id;
  int index = 0;
  std::string text;
  SegmentLabel label = SegmentLabel::Unlabeled;

  // Stable id used for provenance links from summaries back to segments.
  std::string segment_id() const {
    return parent_speech_id + "#" + std::to_string(index);
  }

  bool operator==(const SpeechSegment&) const = default;
};

struct Speech {
  std::string speech_id;
  std::string house_name;
  std::string meeting_name;
  std::string date;  // ISO-8601
  std::string speech_url;
  std::string speaker_id;
  std::string speaker_group;  // party affiliation as recorded at speech time
  std::string topic;
  std::string body;
  std::vector<SpeechSegment> segments;

  bool operator==(const Speech&) const = default;
};

inline void validate(const Speech& s) {
  if (s.speech_id.empty()) throw DataError("speech with empty speech_id");
  if (!valid_iso_date(s.date))
    throw DataError("speech " + s.speech_id + ": bad date '" + s.date + "'");
  std::set<int> seen;
  for (const auto& seg : s.segments) {
    if (seg.parent_speech_id != s.speech_id)
      throw DataError("speech " + s.speech_id + ": segment parent mismatch");
    if (!seen.insert(seg.index).second)
      throw DataError("speech " + s.speech_id + ": duplicate segment index " +
                      std::to_string(seg.index));
  }
}

inline void to_json(json& j, const SpeechSegment& s) {
  j = json{{"index", s.index}, {"text", s.text}, {"label", label_token(s.label)}};
}

inline void to_json(json& j, const Speech& s) {
  j = json{{"speech_id", s.speech_id},     {"house_name", s.house_name},
           {"meeting_name", s.meeting_name}, {"date", s.date},
           {"speech_url", s.speech_url},   {"speaker_id", s.speaker_id},
           {"speaker_group", s.speaker_group}, {"topic", s.topic},
           {"body", s.body}};
  j["segments"] = json::array();
  for (const auto& seg : s.segments) j["segments"].push_back(seg);
}

inline Speech speech_from_json(const json& j) {
  Speech s;
  s.speech_id = j.at("speech_id").get<std::string>();
  s.house_name = j.value("house_name", "");
  s.meeting_name = j.value("meeting_name", "");
  s.date = j.at("date").get<std::string>();
  s.speech_url = j.value("speech_url", "");
  s.speaker_id = j.value("speaker_id", "");
  s.speaker_group = j.value("speaker_group", "");
  s.topic = j.value("topic", "");
  s.body = j.value("body", "");
  for (const auto& sj : j.value("segments", json::array())) {
    SpeechSegment seg;
    seg.parent_speech_id = s.speech_id;
    seg.index = sj.at("index").get<int>();
    seg.text = sj.at("text").get<std::string>();
    auto lab = label_from_token(sj.value("label", "unlabeled"));
    if (!lab)
      throw DataError("speech " + s.speech_id + ": unknown segment label '" +
                      sj.value("label", "") + "'");
    seg.label = *lab;
    s.segments.push_back(std::move(seg));
  }
  return s;
}

// Append-only store of speeches, one JSON record per line.
class CorpusStore {
 public:
  explicit CorpusStore(std::filesystem::path path) : path_(std::move(path)) {}

  const std::filesystem::path& path() const { return path_; }
  bool exists() const { return std::filesystem::exists(path_); }

  // Appends a batch. Duplicate speech ids within the batch are an error
  // naming the offender; nothing is written in that case.
  size_t save(const std::vector<Speech>& records) const {
    std::set<std::string> ids;
    for (const auto& r : records) {
      validate(r);
      if (!ids.insert(r.speech_id).second)
        throw DataError("duplicate speech_id in batch: " + r.speech_id);
    }
    std::vector<json> lines;
    lines.reserve(records.size());
    for (const auto& r : records) lines.push_back(json(r));
    append_jsonl(path_, lines);
    return records.size();
  }

  std::vector<Speech> load() const {
    std::vector<Speech> out;
    read_jsonl(path_, [&](size_t line_no, json&& j) {
      try {
        out.push_back(speech_from_json(j));
      } catch (const json::exception& e) {
        throw DataError(path_.string() + ": line " + std::to_string(line_no) +
                        ": " + e.what());
      }
    });
    return out;
  }

 private:
  std::filesystem::path path_;
};

struct TopicStats {
  long n_speeches = 0;
  long n_segments = 0;
  long n_opinion_segments = 0;
  long n_opinion_speeches = 0;  // speeches with at least one opinion segment
  long n_legislators = 0;
  long n_parties = 0;

  bool operator==(const TopicStats&) const = default;
};

inline std::map<std::string, TopicStats> corpus_stats(const CorpusStore& store) {
  struct Acc {
    TopicStats stats;
    std::set<std::string> speakers, parties;
  };
  std::map<std::string, Acc> acc;
  for (const auto& sp : store.load()) {
    auto& a = acc[sp.topic];
    a.stats.n_speeches++;
    a.stats.n_segments += static_cast<long>(sp.segments.size());
    long opinions = 0;
    for (const auto& seg : sp.segments)
      if (seg.label == SegmentLabel::Opinion) ++opinions;
    a.stats.n_opinion_segments += opinions;
    if (opinions > 0) a.stats.n_opinion_speeches++;
    if (!sp.speaker_id.empty()) a.speakers.insert(sp.speaker_id);
    if (!sp.speaker_group.empty()) a.parties.insert(sp.speaker_group);
  }
  std::map<std::string, TopicStats> out;
  for (auto& [topic, a] : acc) {
    a.stats.n_legislators = static_cast<long>(a.speakers.size());
    a.stats.n_parties = static_cast<long>(a.parties.size());
    out[topic] = a.stats;
  }
  return out;
}

// Speaker registry. Archive records identify speakers by display name only;
// the registry resolves (name, house, date) to a stable legislator id.
// Ambiguity is an error, never a guess.
class Registry {
 public:
  struct Alias {
    std::string name;
    House house = House::Unknown;  // Unknown matches either chamber
    std::string from, to;          // inclusive ISO dates; empty = open
    std::string legislator_id;
  };

  Registry() = default;

  static Registry load(const std::filesystem::path& path) {
    json j;
    try {
      j = json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw ConfigError("registry " + path.string() + ": " + e.what());
    }
    Registry reg;
    for (const auto& pj : j.value("parties", json::array())) {
      Party p{pj.at("id").get<std::string>(), pj.value("name_native", ""),
              pj.value("name_english", "")};
      reg.add_party(p);
    }
    for (const auto& lj : j.value("legislators", json::array())) {
      Legislator l;
      l.id = lj.at("id").get<std::string>();
      l.name = lj.value("name", "");
      l.party_id = lj.value("party_id", "");
      l.house = parse_house(lj.value("house", ""));
      for (const auto& y : lj.value("service_years", json::array()))
        l.service_years.push_back(y.get<int>());
      reg.add_legislator(l);
    }
    for (const auto& aj : j.value("aliases", json::array())) {
      Alias a;
      a.name = aj.at("name").get<std::string>();
      a.house = parse_house(aj.value("house", ""));
      a.from = aj.value("from", "");
      a.to = aj.value("to", "");
      a.legislator_id = aj.at("legislator_id").get<std::string>();
      reg.add_alias(a);
    }
    return reg;
  }

  void add_party(const Party& p) {
    if (p.id.empty()) throw DataError("party with empty id");
    if (!parties_.emplace(p.id, p).second)
      throw DataError("duplicate party id: " + p.id);
  }

  void add_legislator(const Legislator& l) {
    if (l.id.empty()) throw DataError("legislator with empty id");
    if (!l.party_id.empty() && !parties_.count(l.party_id))
      throw DataError("legislator " + l.id + ": unknown party_id " + l.party_id);
    if (!legislators_.emplace(l.id, l).second)
      throw DataError("duplicate legislator id: " + l.id);
    if (!l.name.empty()) {
      Alias a;
      a.name = l.name;
      a.house = l.house;
      a.legislator_id = l.id;
      aliases_.push_back(a);
    }
  }

  void add_alias(const Alias& a) {
    if (!legislators_.count(a.legislator_id))
      throw DataError("alias '" + a.name + "': unknown legislator " +
                      a.legislator_id);
    aliases_.push_back(a);
  }

  const std::map<std::string, Party>& parties() const { return parties_; }
  const std::map<std::string, Legislator>& legislators() const {
    return legislators_;
  }

  std::string resolve_speaker(const std::string& name,
                              const std::string& house_name,
                              const std::string& date) const {
    House h = parse_house(house_name);
    std::set<std::string> hits;
    for (const auto& a : aliases_) {
      if (a.name != name) continue;
      if (a.house != House::Unknown && h != House::Unknown && a.house != h)
        continue;
      if (!a.from.empty() && date < a.from) continue;
      if (!a.to.empty() && date > a.to) continue;
      hits.insert(a.legislator_id);
    }
    if (hits.empty())
      throw DataError("unknown speaker: '" + name + "' (" + house_name + ", " +
                      date + ")");
    if (hits.size() > 1)
      throw DataError("ambiguous speaker: '" + name + "' (" + house_name +
                      ", " + date + ") matches " +
                      std::to_string(hits.size()) + " legislators");
    return *hits.begin();
  }

  std::string party_of(const std::string& legislator_id) const {
    auto it = legislators_.find(legislator_id);
    if (it == legislators_.end()) return "";
    return it->second.party_id;
  }

 private:
  std::map<std::string, Party> parties_;
  std::map<std::string, Legislator> legislators_;
  std::vector<Alias> aliases_;
};

}  // namespace polscale::corpus
