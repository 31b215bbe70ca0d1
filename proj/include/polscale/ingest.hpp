#pragma once

#include <httplib.h>

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "polscale/corpus.hpp"
#include "polscale/llm.hpp"
#include "polscale/parallel.hpp"
#include "polscale/retry.hpp"

namespace polscale::ingest {

using corpus::Speech;

struct TopicSpec {
  std::string name;
  std::vector<std::string> query_words;

  bool operator==(const TopicSpec&) const = default;
};

struct IngestConfig {
  std::string base_url;          // archive endpoint, e.g. https://host
  std::string from, to;          // inclusive ISO date bounds
  int page_size = 100;           // maximumRecords per request
  int max_pages = 1000;          // safety stop per query word
  double rate_limit = 3.0;       // requests per sliding second
  int parallelism = 2;           // concurrent query words
  RetryPolicy retry{};
};

inline void validate(const IngestConfig& cfg) {
  if (!valid_iso_date(cfg.from) || !valid_iso_date(cfg.to))
    throw ConfigError("ingest window must be ISO dates, got '" + cfg.from +
                      "'..'" + cfg.to + "'");
  if (cfg.from > cfg.to) throw ConfigError("ingest window is inverted");
  if (cfg.page_size < 1 || cfg.page_size > 100)
    throw ConfigError("page_size must be in 1..100");
  if (cfg.max_pages < 1) throw ConfigError("max_pages must be >= 1");
}

// ---------------------------------------------------------------------------
// Query-word generation

// Pulls the first bracket-delimited list out of a reply. Items may be quoted
// or bare; order is kept, duplicates collapse to the first occurrence.
inline std::vector<std::string> parse_word_list(const std::string& reply) {
  auto open = reply.find('[');
  if (open == std::string::npos)
    throw ParseError("no bracket-delimited word list in reply", reply);
  auto close = reply.find(']', open);
  if (close == std::string::npos)
    throw ParseError("unterminated bracket list in reply", reply);
  std::string inner = reply.substr(open + 1, close - open - 1);
  std::vector<std::string> words;
  std::set<std::string> seen;
  for (auto& item : split(inner, ',')) {
    std::string w = trim(item);
    // strip one layer of ASCII or CJK quotes
    auto strip = [&](std::string_view l, std::string_view r) {
      if (w.size() >= l.size() + r.size() && w.rfind(l, 0) == 0 &&
          w.compare(w.size() - r.size(), r.size(), r) == 0)
        w = w.substr(l.size(), w.size() - l.size() - r.size());
    };
    strip("\"", "\"");
    strip("'", "'");
    strip("「", "」");  // 「 」
    w = trim(w);
    if (w.empty()) continue;
    if (seen.insert(w).second) words.push_back(w);
  }
  if (words.empty())
    throw ParseError("bracket list contained no usable words", reply);
  return words;
}

struct QueryWords {
  TopicSpec spec;
  std::string raw_reply;  // archived next to the parsed list
};

inline QueryWords generate_query_words(const std::string& topic,
                                       const llm::LlmGateway& gateway) {
  llm::ChatRequest req;
  req.model = gateway.model;
  req.temperature = gateway.temperature;
  req.user = llm::render_template(llm::query_words_template(),
                                  {{"Topic", topic}, {"Topic", topic}});
  QueryWords out;
  out.raw_reply = gateway.complete(req);
  out.spec.name = topic;
  out.spec.query_words = parse_word_list(out.raw_reply);
  return out;
}

// ---------------------------------------------------------------------------
// Archive client

// One page of archive results in the national proceedings API shape.
struct ArchivePage {
  long number_of_records = 0;
  std::optional<long> next_record_position;
  std::vector<Speech> records;
};

inline ArchivePage parse_archive_page(const std::string& body,
                                      const std::string& topic) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded())
    throw ParseError("archive page is not JSON", body);
  ArchivePage page;
  if (!j.contains("numberOfRecords"))
    throw ParseError("archive page missing numberOfRecords", body);
  page.number_of_records = j["numberOfRecords"].get<long>();
  if (j.contains("nextRecordPosition") && !j["nextRecordPosition"].is_null())
    page.next_record_position = j["nextRecordPosition"].get<long>();
  for (const auto& rj : j.value("speechRecord", json::array())) {
    Speech s;
    try {
      s.speech_id = rj.at("speechID").get<std::string>();
      s.house_name = rj.value("nameOfHouse", "");
      s.meeting_name = rj.value("nameOfMeeting", "");
      s.date = rj.at("date").get<std::string>();
      s.speech_url = rj.value("speechURL", "");
      s.speaker_id = rj.value("speaker", "");
      s.speaker_group = rj.value("speakerGroup", "");
      s.body = rj.value("speech", "");
    } catch (const json::exception& e) {
      throw ParseError(std::string("archive record missing field: ") + e.what(),
                       body);
    }
    s.topic = topic;
    page.records.push_back(std::move(s));
  }
  return page;
}

// Stable key for one page request; shared by the live client and the fixture
// store so recorded pages replay against the same requests.
inline std::string page_request_key(const std::string& word,
                                    const std::string& from,
                                    const std::string& to, long start_record,
                                    int maximum_records) {
  return sha256_hex("GET speech any=" + word + "&from=" + from + "&until=" +
                    to + "&startRecord=" + std::to_string(start_record) +
                    "&maximumRecords=" + std::to_string(maximum_records));
}

// request-hash -> body fixture directory. Lets every ingest test and any
// offline rerun work without the archive.
class FixtureStore {
 public:
  explicit FixtureStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const { return dir_; }

  std::optional<std::string> lookup(const std::string& key) const {
    auto f = dir_ / (key + ".json");
    if (!std::filesystem::exists(f)) return std::nullopt;
    return read_file(f);
  }

  void store(const std::string& key, const std::string& body) const {
    std::filesystem::create_directories(dir_);
    write_file(dir_ / (key + ".json"), body);
  }

 private:
  std::filesystem::path dir_;
};

class ArchiveClient {
 public:
  ArchiveClient(IngestConfig cfg, llm::Mode mode,
                std::optional<FixtureStore> fixtures = std::nullopt)
      : cfg_(std::move(cfg)),
        mode_(mode),
        fixtures_(std::move(fixtures)),
        limiter_(cfg_.rate_limit) {
    validate(cfg_);
    if (mode_ == llm::Mode::Offline && !fixtures_)
      throw ConfigError("offline ingest requires a fixture directory");
  }

  // All pages for all query words, deduplicated by speech_id. Per-word page
  // order is preserved; words run concurrently under one shared rate limit.
  std::vector<Speech> fetch_speeches(const TopicSpec& topic) {
    if (topic.query_words.empty())
      throw ConfigError("topic '" + topic.name + "' has no query words");
    std::vector<std::vector<Speech>> per_word(topic.query_words.size());
    parallel_for_bounded(
        topic.query_words.size(), static_cast<size_t>(cfg_.parallelism),
        [&](size_t w) {
          per_word[w] = fetch_word(topic.query_words[w], topic.name);
        });
    std::vector<Speech> out;
    std::set<std::string> seen;
    for (const auto& batch : per_word)
      for (const auto& s : batch)
        if (seen.insert(s.speech_id).second) out.push_back(s);
    return out;
  }

  const RateLimiter& limiter() const { return limiter_; }

 private:
  std::vector<Speech> fetch_word(const std::string& word,
                                 const std::string& topic) {
    std::vector<Speech> out;
    long start = 1;
    for (int page_no = 0; page_no < cfg_.max_pages; ++page_no) {
      std::string body = fetch_page(word, start);
      ArchivePage page = parse_archive_page(body, topic);
      for (auto& s : page.records) out.push_back(std::move(s));
      if (!page.next_record_position) break;
      if (*page.next_record_position <= start)
        throw ProviderError("archive pagination did not advance past " +
                            std::to_string(start));
      start = *page.next_record_position;
    }
    return out;
  }

  std::string fetch_page(const std::string& word, long start) {
    std::string key =
        page_request_key(word, cfg_.from, cfg_.to, start, cfg_.page_size);
    if (mode_ != llm::Mode::Live && fixtures_) {
      if (auto hit = fixtures_->lookup(key)) return *hit;
      if (mode_ == llm::Mode::Offline)
        throw ProviderError("offline ingest fixture miss for request " + key);
    }
    std::string body = with_retries(cfg_.retry, [&] {
      limiter_.acquire();
      return http_get(word, start);
    });
    if (mode_ == llm::Mode::Record && fixtures_) fixtures_->store(key, body);
    return body;
  }

  std::string http_get(const std::string& word, long start) {
    httplib::Client cli(cfg_.base_url);
    cli.set_read_timeout(120, 0);
    httplib::Params params{
        {"any", word},
        {"from", cfg_.from},
        {"until", cfg_.to},
        {"startRecord", std::to_string(start)},
        {"maximumRecords", std::to_string(cfg_.page_size)},
        {"recordPacking", "json"},
    };
    auto res = cli.Get("/speech", params, httplib::Headers{});
    if (!res) throw ProviderError("archive unreachable: " + cfg_.base_url);
    if (res->status == 429 || res->status >= 500)
      throw ProviderError("archive HTTP " + std::to_string(res->status));
    if (res->status != 200)
      throw DataError("archive rejected request: HTTP " +
                      std::to_string(res->status));
    return res->body;
  }

  IngestConfig cfg_;
  llm::Mode mode_;
  std::optional<FixtureStore> fixtures_;
  RateLimiter limiter_;
};

// Resolves archive display names to registry ids. Without a registry the
// display name doubles as the id, which synthetic stores rely on.
inline void resolve_speakers(std::vector<Speech>& speeches,
                             const corpus::Registry* registry) {
  if (!registry) return;
  for (auto& s : speeches)
    s.speaker_id = registry->resolve_speaker(s.speaker_id, s.house_name, s.date);
}

}  // namespace polscale::ingest
