#pragma once

#include <httplib.h>

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "polscale/embed.hpp"
#include "polscale/hash.hpp"
#include "polscale/jsonl.hpp"
#include "polscale/retry.hpp"

namespace polscale::llm {

// ---------------------------------------------------------------------------
// Requests, canonical form, replay cache

struct ChatRequest {
  std::string model;
  std::string system;
  std::string user;
  double temperature = 0.0;
  // Distinguishes deliberately repeated requests (reference speech variants)
  // that would otherwise collapse onto one cache entry.
  std::string seed_tag;

  bool operator==(const ChatRequest&) const = default;
};

inline std::string normalize_ws(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::string line;
  auto flush = [&] {
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    out += line;
    out += '\n';
    line.clear();
  };
  for (size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '\r') {
      if (i + 1 < s.size() && s[i + 1] == '\n') ++i;
      flush();
    } else if (c == '\n') {
      flush();
    } else {
      line += c;
    }
  }
  flush();
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

// Key order is alphabetical (nlohmann keeps objects sorted), whitespace is
// normalized, so formatting drift cannot split the cache.
inline std::string canonical_request_json(const ChatRequest& r) {
  json j{{"model", r.model},
         {"seed_tag", r.seed_tag},
         {"system", normalize_ws(r.system)},
         {"temperature", r.temperature},
         {"user", normalize_ws(r.user)}};
  return j.dump();
}

inline std::string request_hash(const ChatRequest& r) {
  return sha256_hex(canonical_request_json(r));
}

// Content-addressed reply store. Each entry keeps the canonical request next
// to the reply so entries are auditable on their own.
class ReplayCache {
 public:
  explicit ReplayCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& dir() const { return dir_; }

  std::optional<std::string> lookup(const std::string& hash) const {
    auto f = dir_ / (hash + ".json");
    if (!std::filesystem::exists(f)) {
      ++misses_;
      return std::nullopt;
    }
    json j = json::parse(read_file(f));
    ++hits_;
    return j.at("reply").get<std::string>();
  }

  void store(const std::string& hash, const std::string& canonical_request,
             const std::string& reply) const {
    json j{{"request", json::parse(canonical_request)}, {"reply", reply}};
    write_file(dir_ / (hash + ".json"), j.dump(2) + "\n");
  }

  long hits() const { return hits_.load(); }
  long misses() const { return misses_.load(); }

 private:
  std::filesystem::path dir_;
  mutable std::atomic<long> hits_{0};
  mutable std::atomic<long> misses_{0};
};

enum class Mode { Live, Offline, Record };

inline Mode mode_from_token(const std::string& tok) {
  auto t = to_lower(trim(tok));
  if (t == "live") return Mode::Live;
  if (t == "offline") return Mode::Offline;
  if (t == "record") return Mode::Record;
  throw ConfigError("unknown mode '" + tok + "' (live|offline|record)");
}

inline std::string mode_token(Mode m) {
  switch (m) {
    case Mode::Live: return "live";
    case Mode::Offline: return "offline";
    default: return "record";
  }
}

// ---------------------------------------------------------------------------
// Providers

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual std::string complete(const ChatRequest& req) = 0;
  virtual std::string name() const = 0;
};

class HttpChatProvider final : public ChatProvider {
 public:
  HttpChatProvider(std::string base_url, std::string api_key)
      : base_url_(std::move(base_url)), api_key_(std::move(api_key)) {}

  std::string complete(const ChatRequest& req) override {
    return with_retries(retry_, [&] { return post(req); });
  }

  std::string name() const override { return base_url_; }

  RetryPolicy retry_{};

 private:
  std::string post(const ChatRequest& req) {
    httplib::Client cli(base_url_);
    cli.set_read_timeout(300, 0);
    httplib::Headers headers;
    if (!api_key_.empty())
      headers.emplace("Authorization", "Bearer " + api_key_);
    json messages = json::array();
    if (!req.system.empty())
      messages.push_back({{"role", "system"}, {"content", req.system}});
    messages.push_back({{"role", "user"}, {"content", req.user}});
    json body{{"model", req.model},
              {"messages", messages},
              {"temperature", req.temperature}};
    auto res =
        cli.Post("/v1/chat/completions", headers, body.dump(), "application/json");
    if (!res) throw ProviderError("chat provider unreachable: " + base_url_);
    if (res->status != 200)
      throw ProviderError("chat provider HTTP " + std::to_string(res->status));
    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded())
      throw ProviderError("chat provider returned malformed JSON");
    try {
      return reply.at("choices").at(0).at("message").at("content")
          .get<std::string>();
    } catch (const json::exception&) {
      throw ProviderError("chat provider reply missing choices[0].message.content");
    }
  }

  std::string base_url_;
  std::string api_key_;
};

// ---------------------------------------------------------------------------
// Prompt templates
//
// Slots are written ⟨LikeThis⟩. render_template fills them positionally (one
// fill consumes one occurrence) and refuses to return a prompt with any slot
// left over.

inline std::string render_template(
    std::string tmpl,
    const std::vector<std::pair<std::string, std::string>>& fills) {
  for (const auto& [slot, value] : fills) {
    std::string needle = "⟨" + slot + "⟩";
    auto pos = tmpl.find(needle);
    if (pos == std::string::npos)
      throw ConfigError("template has no unfilled slot ⟨" + slot + "⟩");
    tmpl.replace(pos, needle.size(), value);
  }
  auto open = tmpl.find("⟨");
  if (open != std::string::npos) {
    auto close = tmpl.find("⟩", open);
    auto slot = tmpl.substr(open, close == std::string::npos
                                      ? std::string::npos
                                      : close - open + 3);
    throw ConfigError("unfilled template slot: " + slot);
  }
  return tmpl;
}

enum class PromptStyle { Base, WithContext, ContextFewShot };

inline PromptStyle style_from_token(const std::string& tok) {
  auto t = to_lower(trim(tok));
  if (t == "base") return PromptStyle::Base;
  if (t == "with_context" || t == "context") return PromptStyle::WithContext;
  if (t == "context_few_shot" || t == "few_shot")
    return PromptStyle::ContextFewShot;
  throw ConfigError("unknown prompt style '" + tok +
                    "' (base|with_context|context_few_shot)");
}

inline std::string style_token(PromptStyle s) {
  switch (s) {
    case PromptStyle::Base: return "base";
    case PromptStyle::WithContext: return "with_context";
    default: return "context_few_shot";
  }
}

inline std::string summary_instruction() {
  return "Please infer and summarize this politician's stance on ⟨Topic⟩ "
         "based on the politician's statements in the following parliamentary "
         "proceedings.";
}

inline std::string summary_context_note() {
  return "This summary is intended for those who have little knowledge of "
         "Japanese politics, so please give an overall picture of the "
         "politician's position rather than commentary on individual bills.";
}

inline std::string summary_template(PromptStyle style) {
  switch (style) {
    case PromptStyle::Base:
      return summary_instruction() + "\n\n⟨Statements⟩\n";
    case PromptStyle::WithContext:
      return summary_instruction() + "\n" + summary_context_note() +
             "\n\nStatements:\n⟨Statements⟩\n";
    default:
      return summary_instruction() + "\n" + summary_context_note() +
             "\n\nExample 1:\n⟨Example Speech⟩\n\n"
             "Sample summary:\n⟨Summary Example⟩\n\n"
             "Example 2:\n⟨Example Speech⟩\n\n"
             "Sample summary:\n⟨Summary Example⟩\n\n"
             "Statements:\n⟨Statements⟩\n\nSummary:\n";
  }
}

// Default few-shot pair. Nothing domain-critical rides on the exact wording;
// replace per deployment via config when a better curated pair exists.
struct FewShotExamples {
  std::string speech1, summary1, speech2, summary2;

  static FewShotExamples defaults() {
    FewShotExamples ex;
    ex.speech1 =
        "I have repeatedly argued that raising the commodity levy now would "
        "put household budgets under unacceptable strain, and I ask the "
        "government once more to withdraw this bill.";
    ex.summary1 =
        "This politician opposes raising the commodity levy, emphasizing the "
        "burden on households, and wants the proposal withdrawn.";
    ex.speech2 =
        "Our party has long maintained that the levy increase is indispensable "
        "for placing social insurance on a sound footing, and I urge swift "
        "passage of the bill.";
    ex.summary2 =
        "This politician supports the levy increase as necessary funding for "
        "social insurance and urges that the bill be passed quickly.";
    return ex;
  }
};

inline std::string query_words_template() {
  return "I am going to collect politicians' statements about ⟨Topic⟩ "
         "from the parliamentary proceedings archive.\n"
         "Please suggest search words for gathering statements about "
         "⟨Topic⟩.\n\n"
         "Example: for the topic \"defense\", search words such as "
         "[\"Self-Defense Forces\", \"collective self-defense\", \"security\", "
         "\"military strength\", \"defense\"] would be appropriate.\n\n"
         "Please enclose the results in [] so that they can be copied "
         "verbatim.\n";
}

inline std::string axes_delimiter_line() { return std::string(63, '-'); }

inline std::string axes_template() {
  return "Below is a text summarizing the stance on ⟨Topic⟩ of several "
         "legislators, extracted from parliamentary proceedings.\n"
         "Please use this text as a basis for identifying issues related to "
         "this topic, and describe the polar opposing views on these "
         "issues.\n\n"
         "Response Format (please be sure to respond in this format):\n\n"
         "Issue: outline of the issue\n"
         "For: opinion in favor of the issue\n"
         "Against: opinion against the issue\n\n"
         "Issue: outline of the issue\n"
         "For: opinion in favor of the issue\n"
         "Against: opinion against the issue\n\n" +
         axes_delimiter_line() + "\n\n⟨Summaries⟩\n\n" +
         axes_delimiter_line() + "\n";
}

inline std::string reference_speech_template() {
  return "You are a member of parliament taking part in a debate on "
         "⟨Topic⟩.\n"
         "In the first person, deliver a short stance statement that takes "
         "exactly the following position. Do not hedge and do not present "
         "the opposing view.\n\n"
         "Position: ⟨Position⟩\n\n"
         "Statement ⟨Variant⟩:\n";
}

// ---------------------------------------------------------------------------
// Domain types produced by the gateway

struct StanceSummary {
  std::string legislator_id;
  std::string topic;
  PromptStyle style = PromptStyle::ContextFewShot;
  std::string text;
  std::vector<std::string> source_segment_ids;
  std::vector<double> embedding;  // filled downstream; empty until then

  bool operator==(const StanceSummary&) const = default;
};

inline void to_json(json& j, const StanceSummary& s) {
  j = json{{"legislator_id", s.legislator_id},
           {"topic", s.topic},
           {"style", style_token(s.style)},
           {"text", s.text},
           {"source_segment_ids", s.source_segment_ids}};
  if (!s.embedding.empty()) j["embedding"] = s.embedding;
}

inline StanceSummary summary_from_json(const json& j) {
  StanceSummary s;
  s.legislator_id = j.at("legislator_id").get<std::string>();
  s.topic = j.value("topic", "");
  s.style = style_from_token(j.value("style", "context_few_shot"));
  s.text = j.at("text").get<std::string>();
  s.source_segment_ids =
      j.value("source_segment_ids", std::vector<std::string>{});
  s.embedding = j.value("embedding", std::vector<double>{});
  return s;
}

struct ControversyAxisSpec {
  std::string topic;  // issue statement
  std::string pro;    // position text of the supporting side
  std::string con;    // position text of the opposing side

  bool operator==(const ControversyAxisSpec&) const = default;
};

inline void validate(const ControversyAxisSpec& a) {
  if (trim(a.topic).empty() || trim(a.pro).empty() || trim(a.con).empty())
    throw DataError("axis spec with empty topic/pro/con");
}

inline void to_json(json& j, const ControversyAxisSpec& a) {
  j = json{{"topic", a.topic}, {"pro", a.pro}, {"con", a.con}};
}

inline ControversyAxisSpec axis_spec_from_json(const json& j) {
  ControversyAxisSpec a;
  a.topic = j.at("topic").get<std::string>();
  a.pro = j.at("pro").get<std::string>();
  a.con = j.at("con").get<std::string>();
  return a;
}

inline void save_axis_specs(const std::filesystem::path& path,
                            const std::vector<ControversyAxisSpec>& specs) {
  json j = json::array();
  for (const auto& s : specs) j.push_back(s);
  write_file(path, j.dump(2) + "\n");
}

inline std::vector<ControversyAxisSpec> load_axis_specs(
    const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("axis file " + path.string() + ": " + e.what());
  }
  std::vector<ControversyAxisSpec> out;
  for (const auto& item : j) {
    auto spec = axis_spec_from_json(item);
    validate(spec);
    out.push_back(std::move(spec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Axis reply parsing
//
// Replies are handwriting-grade markdown: labels may carry ** or __ wrappers,
// use full-width colons, or use synonyms (For/Yes/Agree, Oppose/Against/Con).
// A field's text may continue over following lines until the next label.

struct AxesParseResult {
  std::vector<ControversyAxisSpec> specs;
  std::vector<std::string> warnings;  // skipped blocks, with reason
};

namespace detail {

// Matches "<decoration>Label<decoration>: rest" and returns (label, rest).
inline std::optional<std::pair<std::string, std::string>> match_label_line(
    const std::string& line) {
  size_t i = 0;
  auto skip_decor = [&](size_t j) {
    while (j < line.size() &&
           (line[j] == '*' || line[j] == '_' || line[j] == ' ' ||
            line[j] == '\t' || line[j] == '-' || line[j] == '#'))
      ++j;
    return j;
  };
  i = skip_decor(0);
  size_t start = i;
  while (i < line.size() &&
         (std::isalnum(static_cast<unsigned char>(line[i])) || line[i] == ' ' ||
          line[i] == '-')) {
    ++i;
    if (i - start > 24) return std::nullopt;  // labels are short
  }
  // canonical label: lowercase, numbering stripped ("Issue 2" -> "issue")
  std::string word;
  for (char c : line.substr(start, i - start))
    if (!std::isdigit(static_cast<unsigned char>(c))) word += c;
  word = trim(word);
  // allow closing decoration between the word and the colon
  while (i < line.size() && (line[i] == '*' || line[i] == '_' || line[i] == ' '))
    ++i;
  bool colon = false;
  if (i < line.size()) {
    if (line[i] == ':') {
      colon = true;
      i += 1;
    } else if (line.compare(i, 3, "：") == 0) {  // full-width colon
      colon = true;
      i += 3;
    }
  }
  if (!colon || word.empty()) return std::nullopt;
  // tolerate bold markers that wrap the colon too, e.g. "**Issue:**"
  while (i < line.size() && (line[i] == '*' || line[i] == '_')) ++i;
  return std::make_pair(to_lower(word), trim(line.substr(i)));
}

inline bool is_issue_label(const std::string& w) {
  return w == "issue" || w == "discussion point" || w == "topic";
}
inline bool is_pro_label(const std::string& w) {
  return w == "for" || w == "yes" || w == "agree" || w == "pro" ||
         w == "in favor";
}
inline bool is_con_label(const std::string& w) {
  return w == "oppose" || w == "against" || w == "con" || w == "opposed" ||
         w == "no";
}

}  // namespace detail

inline AxesParseResult parse_axes_reply(const std::string& reply) {
  AxesParseResult result;
  struct Block {
    std::string topic, pro, con;
    bool open = false;
  } cur;
  std::string* active = nullptr;

  auto flush = [&] {
    if (!cur.open) return;
    if (!trim(cur.topic).empty() && !trim(cur.pro).empty() &&
        !trim(cur.con).empty()) {
      result.specs.push_back(
          {trim(cur.topic), trim(cur.pro), trim(cur.con)});
    } else {
      std::string what = trim(cur.topic).empty() ? "missing issue text"
                         : trim(cur.pro).empty() ? "missing supporting side"
                                                 : "missing opposing side";
      result.warnings.push_back("skipped block '" +
                                (cur.topic.empty() ? "?" : trim(cur.topic)) +
                                "': " + what);
    }
    cur = Block{};
    active = nullptr;
  };

  std::string normalized = normalize_ws(reply);
  for (const auto& raw_line : split(normalized, '\n')) {
    std::string line = trim(raw_line);
    if (line.empty()) continue;
    auto m = detail::match_label_line(line);
    if (m) {
      const auto& [label, rest] = *m;
      if (detail::is_issue_label(label)) {
        flush();
        cur.open = true;
        cur.topic = rest;
        active = &cur.topic;
        continue;
      }
      if (cur.open && detail::is_pro_label(label)) {
        cur.pro = rest;
        active = &cur.pro;
        continue;
      }
      if (cur.open && detail::is_con_label(label)) {
        cur.con = rest;
        active = &cur.con;
        continue;
      }
      // unknown label: fall through and treat the whole line as continuation
      // text rather than losing it
    }
    if (active) {
      if (!active->empty()) *active += ' ';
      *active += line;
    }
  }
  flush();

  if (result.specs.empty())
    throw ParseError("no axis blocks found in reply", reply);
  return result;
}

// Canonical rendering of axis specs in the reply grammar. The mock provider
// answers with this exact form, so the parser sees the same shape live and
// replayed; parse(format(specs)) round-trips for single-line texts.
inline std::string format_axes_reply(
    const std::vector<ControversyAxisSpec>& specs) {
  std::string out;
  for (const auto& s : specs) {
    out += "Issue: " + s.topic + "\n";
    out += "For: " + s.pro + "\n";
    out += "Oppose: " + s.con + "\n\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gateway

enum class Side { Pro, Con };

inline std::string side_token(Side s) { return s == Side::Pro ? "pro" : "con"; }

struct AxesRaw {
  std::string reply;
  size_t n_summaries_used = 0;
  size_t n_summaries_total = 0;
};

class LlmGateway {
 public:
  LlmGateway(std::shared_ptr<ChatProvider> provider, ReplayCache* cache,
             Mode mode)
      : provider_(std::move(provider)), cache_(cache), mode_(mode) {
    if (mode_ != Mode::Live && cache_ == nullptr)
      throw ConfigError("record/offline mode requires a replay cache");
    if (mode_ != Mode::Offline && provider_ == nullptr)
      throw ConfigError("live/record mode requires a chat provider");
  }

  std::string model = "default";
  double temperature = 0.0;

  // Prompt budget in tokens; the counter is injectable so truncation rules
  // can be tested without a real tokenizer.
  size_t max_prompt_tokens = 120000;
  std::function<size_t(const std::string&)> token_counter =
      [](const std::string& s) { return s.size() / 4 + 1; };
  std::function<void(const std::string&)> log = [](const std::string&) {};

  Mode mode() const { return mode_; }

  std::string complete(const ChatRequest& req) const {
    switch (mode_) {
      case Mode::Live:
        return provider_->complete(req);
      case Mode::Record: {
        auto hash = request_hash(req);
        if (auto hit = cache_->lookup(hash)) return *hit;
        auto reply = provider_->complete(req);
        cache_->store(hash, canonical_request_json(req), reply);
        return reply;
      }
      case Mode::Offline:
      default: {
        auto hash = request_hash(req);
        if (auto hit = cache_->lookup(hash)) return *hit;
        throw ProviderError("offline cache miss for request " + hash);
      }
    }
  }

  // One statement set in, one stance summary out. Statements that overflow
  // the prompt budget are dropped from the tail, never cut mid-sentence.
  StanceSummary summarize_stance(
      const std::string& legislator_id, const std::string& topic,
      const std::vector<std::pair<std::string, std::string>>& statements,
      PromptStyle style = PromptStyle::ContextFewShot,
      const FewShotExamples& examples = FewShotExamples::defaults()) const {
    if (statements.empty())
      throw DataError("summarize_stance: no opinion statements for " +
                      legislator_id);
    size_t used = statements.size();
    std::string prompt;
    for (;;) {
      std::vector<std::string> texts;
      texts.reserve(used);
      for (size_t i = 0; i < used; ++i) texts.push_back(statements[i].first);
      prompt = render_summary_prompt(topic, join(texts, "\n"), style, examples);
      if (token_counter(prompt) <= max_prompt_tokens || used == 1) break;
      --used;
    }
    if (used < statements.size())
      log("summarize_stance(" + legislator_id + "): kept " +
          std::to_string(used) + " of " + std::to_string(statements.size()) +
          " statements to fit the prompt budget");
    ChatRequest req;
    req.model = model;
    req.temperature = temperature;
    req.user = prompt;
    StanceSummary s;
    s.legislator_id = legislator_id;
    s.topic = topic;
    s.style = style;
    s.text = complete(req);
    for (size_t i = 0; i < used; ++i)
      s.source_segment_ids.push_back(statements[i].second);
    return s;
  }

  // All summaries go into one extraction prompt between the delimiter lines.
  // Over budget, the tail summaries are left out (whole summaries only) and
  // the count is logged.
  AxesRaw extract_axes_raw(const std::vector<StanceSummary>& summaries,
                           const std::string& topic) const {
    if (summaries.empty())
      throw DataError("extract_axes_raw: no summaries for topic " + topic);
    size_t used = summaries.size();
    std::string prompt;
    for (;;) {
      std::vector<std::string> texts;
      texts.reserve(used);
      for (size_t i = 0; i < used; ++i) texts.push_back(summaries[i].text);
      prompt = render_template(
          axes_template(),
          {{"Topic", topic}, {"Summaries", join(texts, "\n\n")}});
      if (token_counter(prompt) <= max_prompt_tokens || used == 1) break;
      --used;
    }
    if (used < summaries.size())
      log("extract_axes_raw(" + topic + "): kept " + std::to_string(used) +
          " of " + std::to_string(summaries.size()) +
          " summaries to fit the prompt budget");
    ChatRequest req;
    req.model = model;
    req.temperature = temperature;
    req.user = prompt;
    AxesRaw out;
    out.reply = complete(req);
    out.n_summaries_used = used;
    out.n_summaries_total = summaries.size();
    return out;
  }

  // The side's position text goes into the prompt verbatim; the variant index
  // keeps repeated generations distinct in both prompt and cache key.
  std::string generate_reference_speech(const ControversyAxisSpec& spec,
                                        Side side, int variant = 0) const {
    validate(spec);
    ChatRequest req;
    req.model = model;
    req.temperature = temperature;
    req.seed_tag =
        "ref:" + side_token(side) + ":" + std::to_string(variant);
    req.user = render_template(
        reference_speech_template(),
        {{"Topic", spec.topic},
         {"Position", side == Side::Pro ? spec.pro : spec.con},
         {"Variant", std::to_string(variant + 1)}});
    return complete(req);
  }

  std::string render_summary_prompt(const std::string& topic,
                                    const std::string& statements,
                                    PromptStyle style,
                                    const FewShotExamples& ex) const {
    std::vector<std::pair<std::string, std::string>> fills{{"Topic", topic}};
    if (style == PromptStyle::ContextFewShot) {
      fills.push_back({"Example Speech", ex.speech1});
      fills.push_back({"Summary Example", ex.summary1});
      fills.push_back({"Example Speech", ex.speech2});
      fills.push_back({"Summary Example", ex.summary2});
    }
    fills.push_back({"Statements", statements});
    return render_template(summary_template(style), fills);
  }

 private:
  std::shared_ptr<ChatProvider> provider_;
  ReplayCache* cache_;
  Mode mode_;
};

}  // namespace polscale::llm
