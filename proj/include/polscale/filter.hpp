#pragma once

#include <httplib.h>

#include <string>
#include <vector>

#include "polscale/corpus.hpp"
#include "polscale/parallel.hpp"
#include "polscale/retry.hpp"

namespace polscale::filter {

using corpus::SegmentLabel;
using corpus::Speech;
using corpus::SpeechSegment;

// The ideographic full stop is the one sentence boundary in proceedings
// transcripts; question and exclamation marks appear inside quoted matter
// and must not split.
inline constexpr std::string_view kSentenceDelimiter = "。";  // 。

// Splits a speech body into sentence segments. The delimiter stays attached
// to its segment; fragments that are empty or whitespace-only (apart from
// the delimiter itself) are dropped; indices are consecutive from zero.
inline std::vector<SpeechSegment> split_segments(const Speech& speech) {
  std::vector<SpeechSegment> out;
  const std::string& body = speech.body;
  const std::string delim(kSentenceDelimiter);
  size_t start = 0;
  auto emit = [&](std::string_view piece, bool with_delim) {
    std::string content(piece);
    std::string without = content;
    if (with_delim) without.resize(without.size() - delim.size());
    if (trim(without).empty()) return;
    SpeechSegment seg;
    seg.parent_speech_id = speech.speech_id;
    seg.index = static_cast<int>(out.size());
    seg.text = std::move(content);
    out.push_back(std::move(seg));
  };
  for (;;) {
    size_t pos = body.find(delim, start);
    if (pos == std::string::npos) break;
    size_t end = pos + delim.size();
    emit(std::string_view(body).substr(start, end - start), true);
    start = end;
  }
  if (start < body.size())
    emit(std::string_view(body).substr(start), false);
  return out;
}

// Classifier endpoint. Two forms:
//   http(s)://host/path          POST a JSON array of texts, receive a JSON
//                                array of label tokens of the same length
//   stub:marker=X                offline rule: opinion iff the text contains X
class ClassifierClient {
 public:
  static ClassifierClient parse(const std::string& endpoint_spec,
                                int batch_size = 32) {
    ClassifierClient c;
    c.batch_size_ = batch_size > 0 ? batch_size : 32;
    if (endpoint_spec.rfind("stub:", 0) == 0) {
      auto rule = endpoint_spec.substr(5);
      if (rule.rfind("marker=", 0) != 0 || rule.size() <= 7)
        throw ConfigError("unrecognized classifier stub rule: " + endpoint_spec);
      c.marker_ = rule.substr(7);
    } else if (endpoint_spec.rfind("http", 0) == 0) {
      c.url_ = endpoint_spec;
    } else {
      throw ConfigError("classifier endpoint must be a URL or stub:marker=X, got: " +
                        endpoint_spec);
    }
    return c;
  }

  int batch_size() const { return batch_size_; }
  bool is_stub() const { return !marker_.empty(); }

  // One classification round trip (or stub evaluation) for a single batch.
  std::vector<SegmentLabel> classify(const std::vector<std::string>& texts) const {
    if (is_stub()) {
      std::vector<SegmentLabel> labels;
      labels.reserve(texts.size());
      for (const auto& t : texts)
        labels.push_back(t.find(marker_) != std::string::npos
                             ? SegmentLabel::Opinion
                             : SegmentLabel::Other);
      return labels;
    }
    return with_retries(retry_, [&] { return classify_http(texts); });
  }

  RetryPolicy retry_{};

 private:
  std::vector<SegmentLabel> classify_http(const std::vector<std::string>& texts) const {
    auto [base, path] = split_url(url_);
    httplib::Client cli(base);
    cli.set_read_timeout(60, 0);
    json body = json::array();
    for (const auto& t : texts) body.push_back(t);
    auto res = cli.Post(path, body.dump(), "application/json");
    if (!res)
      throw ProviderError("classifier unreachable: " + url_);
    if (res->status != 200)
      throw ProviderError("classifier HTTP " + std::to_string(res->status));
    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.is_array())
      throw ProviderError("classifier protocol: reply is not a JSON array");
    if (reply.size() != texts.size())
      throw ProviderError("classifier protocol: sent " +
                          std::to_string(texts.size()) + " texts, got " +
                          std::to_string(reply.size()) + " labels");
    std::vector<SegmentLabel> labels;
    labels.reserve(reply.size());
    for (const auto& item : reply) {
      if (!item.is_string())
        throw ProviderError("classifier protocol: non-string label");
      auto lab = corpus::label_from_token(item.get<std::string>());
      if (!lab || *lab == SegmentLabel::Unlabeled)
        throw ProviderError("classifier protocol: unknown label '" +
                            item.get<std::string>() + "'");
      labels.push_back(*lab);
    }
    return labels;
  }

  static std::pair<std::string, std::string> split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
      throw ConfigError("bad URL: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
  }

  std::string url_;
  std::string marker_;
  int batch_size_ = 32;
};

// Labels segments in batches. Batches may be classified concurrently; label
// order always matches input order regardless of batch size or scheduling.
inline std::vector<SegmentLabel> classify_segments(
    std::vector<SpeechSegment>& segments, const ClassifierClient& client,
    size_t parallelism = 4) {
  std::vector<SegmentLabel> labels(segments.size(), SegmentLabel::Unlabeled);
  size_t bs = static_cast<size_t>(client.batch_size());
  size_t n_batches = (segments.size() + bs - 1) / bs;
  parallel_for_bounded(n_batches, parallelism, [&](size_t b) {
    size_t lo = b * bs;
    size_t hi = std::min(lo + bs, segments.size());
    std::vector<std::string> texts;
    texts.reserve(hi - lo);
    for (size_t i = lo; i < hi; ++i) texts.push_back(segments[i].text);
    auto batch = client.classify(texts);
    for (size_t i = lo; i < hi; ++i) labels[i] = batch[i - lo];
  });
  for (size_t i = 0; i < segments.size(); ++i) segments[i].label = labels[i];
  return labels;
}

// Opinion-bearing view of one speech: the metadata record plus the segment
// texts that classified as opinions. Speeches without any opinion segment
// produce no record at all.
struct OpinionRecord {
  std::string speech_id;
  std::string house_name;
  std::string meeting_name;
  std::string date;
  std::string speech_url;
  std::string speaker_id;
  std::string speaker_group;
  std::string topic;
  std::vector<std::string> extracted_opinions;
  std::vector<int> opinion_segment_indices;

  bool operator==(const OpinionRecord&) const = default;
};

inline void to_json(json& j, const OpinionRecord& r) {
  j = json{{"speech_id", r.speech_id},
           {"house_name", r.house_name},
           {"meeting_name", r.meeting_name},
           {"date", r.date},
           {"speech_url", r.speech_url},
           {"speaker_id", r.speaker_id},
           {"speaker_group", r.speaker_group},
           {"topic", r.topic},
           {"extracted_opinions", r.extracted_opinions},
           {"opinion_segment_indices", r.opinion_segment_indices}};
}

inline OpinionRecord opinion_from_json(const json& j) {
  OpinionRecord r;
  r.speech_id = j.at("speech_id").get<std::string>();
  r.house_name = j.value("house_name", "");
  r.meeting_name = j.value("meeting_name", "");
  r.date = j.at("date").get<std::string>();
  r.speech_url = j.value("speech_url", "");
  r.speaker_id = j.value("speaker_id", "");
  r.speaker_group = j.value("speaker_group", "");
  r.topic = j.value("topic", "");
  r.extracted_opinions = j.value("extracted_opinions", std::vector<std::string>{});
  r.opinion_segment_indices =
      j.value("opinion_segment_indices", std::vector<int>{});
  return r;
}

// Segment, classify, keep the opinions. Also labels the segments on the
// returned speeches so the store can carry them.
inline std::vector<OpinionRecord> extract_opinions(
    std::vector<Speech>& speeches, const ClassifierClient& client,
    size_t parallelism = 4) {
  std::vector<OpinionRecord> out;
  for (auto& sp : speeches) {
    if (sp.segments.empty()) sp.segments = split_segments(sp);
    classify_segments(sp.segments, client, parallelism);
    OpinionRecord rec;
    rec.speech_id = sp.speech_id;
    rec.house_name = sp.house_name;
    rec.meeting_name = sp.meeting_name;
    rec.date = sp.date;
    rec.speech_url = sp.speech_url;
    rec.speaker_id = sp.speaker_id;
    rec.speaker_group = sp.speaker_group;
    rec.topic = sp.topic;
    for (const auto& seg : sp.segments) {
      if (seg.label != SegmentLabel::Opinion) continue;
      rec.extracted_opinions.push_back(seg.text);
      rec.opinion_segment_indices.push_back(seg.index);
    }
    if (!rec.extracted_opinions.empty()) out.push_back(std::move(rec));
  }
  return out;
}

inline void save_opinions(const std::filesystem::path& path,
                          const std::vector<OpinionRecord>& records) {
  std::vector<json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(json(r));
  write_jsonl(path, lines);
}

inline std::vector<OpinionRecord> load_opinions(const std::filesystem::path& path) {
  std::vector<OpinionRecord> out;
  read_jsonl(path, [&](size_t line_no, json&& j) {
    try {
      out.push_back(opinion_from_json(j));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) +
                      ": " + e.what());
    }
  });
  return out;
}

}  // namespace polscale::filter
