#pragma once

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "polscale/corpus.hpp"
#include "polscale/diachronic.hpp"
#include "polscale/embed.hpp"
#include "polscale/evaluate.hpp"
#include "polscale/filter.hpp"
#include "polscale/ingest.hpp"
#include "polscale/llm.hpp"
#include "polscale/report.hpp"
#include "polscale/scale.hpp"
#include "polscale/synth.hpp"

namespace polscale::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kToolName = "polscale";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kManifestFormat = 1;

struct ChatProviderConfig {
  std::string endpoint;  // http(s) URL or mock:synth:<world.json>
  std::string model = "default";
  std::string api_key;
  double temperature = 0.0;
};

struct EmbeddingProviderConfig {
  std::string endpoint;  // http(s) URL, mock:planted:<file>, mock:hash:<dim>
  std::string model;
  std::string api_key;
  int dim = 0;
  int batch_size = 64;
};

struct ClassifierProviderConfig {
  std::string endpoint;  // http(s) URL or stub:marker=<token>
  int batch_size = 32;
  int parallelism = 4;
};

struct TopicConfig {
  std::string name;
  std::vector<std::string> query_words;  // empty = ask the chat model
  fs::path axes_file;                    // pre-authored axes skip extraction
};

struct SummarizeConfig {
  llm::PromptStyle style = llm::PromptStyle::ContextFewShot;
  size_t max_prompt_tokens = 120000;
};

struct ScaleConfig {
  int n_refs = 3;
  bool normalize = false;
};

struct DiachronicConfig {
  std::vector<std::string> parties;  // empty = every party seen in the data
  int from = 0, to = 0;              // 0 = derive from ingest window or data
  long min_segments = 1;
  bool by_speaker = false;
};

struct EvaluateConfig {
  fs::path expert_orderings;  // empty = no comparison table
  long pmi_min_count = 5;
  size_t pmi_top_k = 25;
};

struct RunConfig {
  llm::Mode mode = llm::Mode::Offline;
  fs::path config_dir;  // base for relative paths in the file
  fs::path cache_dir = "cache";
  fs::path out_dir = "out";
  fs::path registry_path;
  ChatProviderConfig chat;
  EmbeddingProviderConfig embedding;
  ClassifierProviderConfig classifier;
  std::vector<TopicConfig> topics;
  ingest::IngestConfig archive;
  fs::path ingest_fixtures;
  SummarizeConfig summarize;
  ScaleConfig scale;
  DiachronicConfig diachronic;
  EvaluateConfig evaluate;
  std::string config_hash;  // canonical file content, credentials redacted
};

namespace detail {

inline fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

// Secrets come from the environment: a value of the form ${NAME} is replaced
// by $NAME, and only credential fields get this treatment.
inline std::string interpolate_secret(const std::string& value,
                                      const std::string& field) {
  if (value.size() >= 4 && value.rfind("${", 0) == 0 && value.back() == '}') {
    std::string var = value.substr(2, value.size() - 3);
    const char* env = std::getenv(var.c_str());
    if (!env)
      throw ConfigError(field + ": environment variable " + var + " not set");
    return env;
  }
  return value;
}

inline std::string redacted_config_hash(json j) {
  if (j.contains("providers") && j["providers"].is_object())
    for (auto& [name, pj] : j["providers"].items())
      if (pj.is_object() && pj.contains("api_key")) pj["api_key"] = "<redacted>";
  return sha256_hex(j.dump());
}

// Endpoint specs may embed file paths; those resolve against the config dir
// like every other path.
inline std::string resolve_endpoint(const fs::path& base,
                                    const std::string& endpoint) {
  for (const char* prefix : {"mock:synth:", "mock:planted:"}) {
    if (endpoint.rfind(prefix, 0) == 0) {
      std::string rest = endpoint.substr(std::string(prefix).size());
      return prefix + resolve(base, rest).string();
    }
  }
  return endpoint;
}

}  // namespace detail

struct RunOverrides {
  std::optional<llm::Mode> mode;
  std::optional<fs::path> cache_dir;
  std::optional<fs::path> out_dir;
};

inline RunConfig run_config_from_json(const json& j, const fs::path& config_dir,
                                      const RunOverrides& over = {}) {
  RunConfig cfg;
  cfg.config_dir = config_dir;
  cfg.config_hash = detail::redacted_config_hash(j);
  if (j.contains("mode")) cfg.mode = llm::mode_from_token(j["mode"].get<std::string>());
  cfg.cache_dir = j.value("cache_dir", std::string("cache"));
  cfg.out_dir = j.value("out_dir", std::string("out"));
  cfg.registry_path = j.value("registry", std::string());

  json providers = j.value("providers", json::object());
  if (providers.contains("chat")) {
    const auto& c = providers["chat"];
    cfg.chat.endpoint = c.value("endpoint", "");
    cfg.chat.model = c.value("model", cfg.chat.model);
    cfg.chat.api_key =
        detail::interpolate_secret(c.value("api_key", ""), "providers.chat.api_key");
    cfg.chat.temperature = c.value("temperature", 0.0);
  }
  if (providers.contains("embedding")) {
    const auto& e = providers["embedding"];
    cfg.embedding.endpoint = e.value("endpoint", "");
    cfg.embedding.model = e.value("model", "");
    cfg.embedding.api_key = detail::interpolate_secret(
        e.value("api_key", ""), "providers.embedding.api_key");
    cfg.embedding.dim = e.value("dim", 0);
    cfg.embedding.batch_size = e.value("batch_size", 64);
  }
  if (providers.contains("classifier")) {
    const auto& c = providers["classifier"];
    cfg.classifier.endpoint = c.value("endpoint", "");
    cfg.classifier.batch_size = c.value("batch_size", 32);
    cfg.classifier.parallelism = c.value("parallelism", 4);
  }

  for (const auto& tj : j.value("topics", json::array())) {
    TopicConfig t;
    t.name = tj.at("name").get<std::string>();
    t.query_words = tj.value("query_words", std::vector<std::string>{});
    t.axes_file = tj.value("axes_file", std::string());
    cfg.topics.push_back(std::move(t));
  }

  if (j.contains("ingest")) {
    const auto& ij = j["ingest"];
    cfg.archive.base_url = ij.value("base_url", "");
    cfg.archive.from = ij.value("from", "");
    cfg.archive.to = ij.value("to", "");
    cfg.archive.page_size = ij.value("page_size", 100);
    cfg.archive.max_pages = ij.value("max_pages", 1000);
    cfg.archive.rate_limit = ij.value("rate_limit", 3.0);
    cfg.archive.parallelism = ij.value("parallelism", 2);
    cfg.ingest_fixtures = ij.value("fixtures", std::string());
  }

  if (j.contains("summarize")) {
    const auto& sj = j["summarize"];
    if (sj.contains("style"))
      cfg.summarize.style = llm::style_from_token(sj["style"].get<std::string>());
    cfg.summarize.max_prompt_tokens =
        sj.value("max_prompt_tokens", cfg.summarize.max_prompt_tokens);
  }
  if (j.contains("scale")) {
    cfg.scale.n_refs = j["scale"].value("n_refs", 3);
    cfg.scale.normalize = j["scale"].value("normalize", false);
  }
  if (j.contains("diachronic")) {
    const auto& dj = j["diachronic"];
    cfg.diachronic.parties = dj.value("parties", std::vector<std::string>{});
    cfg.diachronic.from = dj.value("from", 0);
    cfg.diachronic.to = dj.value("to", 0);
    cfg.diachronic.min_segments = dj.value("min_segments", 1L);
    cfg.diachronic.by_speaker = dj.value("by_speaker", false);
  }
  if (j.contains("evaluate")) {
    const auto& ej = j["evaluate"];
    cfg.evaluate.expert_orderings = ej.value("expert_orderings", std::string());
    cfg.evaluate.pmi_min_count = ej.value("pmi_min_count", 5L);
    cfg.evaluate.pmi_top_k = ej.value("pmi_top_k", size_t{25});
  }

  if (over.mode) cfg.mode = *over.mode;
  if (over.cache_dir) cfg.cache_dir = *over.cache_dir;
  if (over.out_dir) cfg.out_dir = *over.out_dir;

  cfg.cache_dir = detail::resolve(config_dir, cfg.cache_dir);
  cfg.out_dir = detail::resolve(config_dir, cfg.out_dir);
  cfg.registry_path = detail::resolve(config_dir, cfg.registry_path);
  cfg.ingest_fixtures = detail::resolve(config_dir, cfg.ingest_fixtures);
  cfg.chat.endpoint = detail::resolve_endpoint(config_dir, cfg.chat.endpoint);
  cfg.embedding.endpoint =
      detail::resolve_endpoint(config_dir, cfg.embedding.endpoint);
  for (auto& t : cfg.topics)
    t.axes_file = detail::resolve(config_dir, t.axes_file);
  cfg.evaluate.expert_orderings =
      detail::resolve(config_dir, cfg.evaluate.expert_orderings);

  // an empty topic list is legal here; stages that need topics check later,
  // and direct-file subcommands never do
  std::set<std::string> slugs;
  for (const auto& t : cfg.topics)
    if (!slugs.insert(slugify(t.name)).second)
      throw ConfigError("two topics share the slug '" + slugify(t.name) + "'");
  return cfg;
}

inline RunConfig load_run_config(const fs::path& path,
                                 const RunOverrides& over = {}) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  } catch (const DataError& e) {
    // an unreadable config file is the caller's configuration, not data
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  return run_config_from_json(j, dir, over);
}

// ---------------------------------------------------------------------------
// Stage output protocol
//
// A stage writes every output to "<name>.partial" and publishes all of them
// with renames only after the whole stage succeeded. An aborted stage leaves
// its .partial files behind for inspection and never clobbers a previous
// good output.
class StageWriter {
 public:
  void write(const fs::path& final_path, std::string_view content) {
    fs::path partial = final_path;
    partial += ".partial";
    write_file(partial, content);
    pending_.push_back({partial, final_path});
  }

  void write_jsonl(const fs::path& final_path, const std::vector<json>& records) {
    std::string body;
    for (const auto& r : records) {
      body += r.dump();
      body += '\n';
    }
    write(final_path, body);
  }

  void publish() {
    for (const auto& [partial, final_path] : pending_)
      fs::rename(partial, final_path);
    pending_.clear();
  }

 private:
  std::vector<std::pair<fs::path, fs::path>> pending_;
};

namespace detail {

// In offline mode a cache-missing embedding must fail like any other
// forbidden network call instead of silently going out.
class OfflineEmbeddingGuard final : public embed::IEmbeddingClient {
 public:
  explicit OfflineEmbeddingGuard(std::shared_ptr<embed::IEmbeddingClient> inner)
      : inner_(std::move(inner)) {}

  std::vector<std::vector<double>> embed_batch(
      const std::vector<std::string>& texts) override {
    throw ProviderError("offline embedding cache miss for " +
                        std::to_string(texts.size()) + " text(s) against " +
                        inner_->model_id());
  }
  std::string model_id() const override { return inner_->model_id(); }
  int batch_size() const override { return inner_->batch_size(); }
  int dim() const override { return inner_->dim(); }

 private:
  std::shared_ptr<embed::IEmbeddingClient> inner_;
};

template <typename E>
[[noreturn]] void rethrow_staged(const std::string& stage,
                                 const std::string& topic, const E& e) {
  throw E("stage " + stage + " (" + topic + "): " + e.what());
}

}  // namespace detail

class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) {
    fs::create_directories(cfg_.cache_dir);
    chat_cache_ = std::make_unique<llm::ReplayCache>(cfg_.cache_dir / "chat");

    std::shared_ptr<llm::ChatProvider> provider;
    if (cfg_.mode != llm::Mode::Offline && !cfg_.chat.endpoint.empty())
      provider = make_chat_provider();
    gateway_.emplace(provider, chat_cache_.get(), cfg_.mode);
    gateway_->model = cfg_.chat.model;
    gateway_->temperature = cfg_.chat.temperature;
    gateway_->max_prompt_tokens = cfg_.summarize.max_prompt_tokens;
    gateway_->log = [this](const std::string& m) { log("  " + m); };

    if (!cfg_.registry_path.empty())
      registry_ = corpus::Registry::load(cfg_.registry_path);
  }

  std::function<void(const std::string&)> log = [](const std::string& m) {
    std::cerr << m << '\n';
  };

  const RunConfig& config() const { return cfg_; }
  fs::path topic_dir(const TopicConfig& t) const {
    return cfg_.out_dir / slugify(t.name);
  }

  // ---- stages ------------------------------------------------------------

  void run_ingest(const TopicConfig& topic) {
    stage("ingest", topic.name, [&] {
      auto dir = topic_dir(topic);
      StageWriter w;

      ingest::TopicSpec spec{topic.name, topic.query_words};
      json qw{{"topic", topic.name}};
      if (spec.query_words.empty()) {
        auto generated = ingest::generate_query_words(topic.name, *gateway_);
        spec.query_words = generated.spec.query_words;
        qw["words"] = spec.query_words;
        qw["raw_reply"] = generated.raw_reply;
        qw["generated"] = true;
      } else {
        qw["words"] = spec.query_words;
        qw["generated"] = false;
      }

      std::optional<ingest::FixtureStore> fixtures;
      if (!cfg_.ingest_fixtures.empty())
        fixtures.emplace(cfg_.ingest_fixtures);
      ingest::ArchiveClient archive(cfg_.archive, cfg_.mode, fixtures);
      auto speeches = archive.fetch_speeches(spec);
      ingest::resolve_speakers(speeches, registry_ ? &*registry_ : nullptr);

      std::vector<json> rows;
      rows.reserve(speeches.size());
      for (const auto& s : speeches) {
        corpus::validate(s);
        rows.push_back(json(s));
      }
      w.write(dir / "query_words.json", qw.dump(2) + "\n");
      w.write_jsonl(dir / "speeches.jsonl", rows);
      w.publish();
      log("ingest(" + topic.name + "): " + std::to_string(speeches.size()) +
          " speeches");
    });
  }

  void run_filter(const TopicConfig& topic) {
    stage("filter", topic.name, [&] {
      auto dir = topic_dir(topic);
      auto speeches = corpus::CorpusStore(dir / "speeches.jsonl").load();
      if (cfg_.mode == llm::Mode::Offline &&
          cfg_.classifier.endpoint.rfind("http", 0) == 0)
        throw ProviderError("offline mode cannot call the classifier at " +
                            cfg_.classifier.endpoint);
      auto client = filter::ClassifierClient::parse(cfg_.classifier.endpoint,
                                                    cfg_.classifier.batch_size);
      auto records = filter::extract_opinions(speeches, client,
                                              cfg_.classifier.parallelism);
      std::vector<json> rows;
      rows.reserve(records.size());
      for (const auto& r : records) rows.push_back(json(r));
      StageWriter w;
      w.write_jsonl(dir / "opinions.jsonl", rows);
      w.publish();
      log("filter(" + topic.name + "): " + std::to_string(records.size()) +
          " opinion-bearing speeches of " + std::to_string(speeches.size()));
    });
  }

  void run_summarize(const TopicConfig& topic) {
    stage("summarize", topic.name, [&] {
      auto dir = topic_dir(topic);
      auto records = filter::load_opinions(dir / "opinions.jsonl");

      // (text, segment id) statements per speaker, in record order
      std::map<std::string, std::vector<std::pair<std::string, std::string>>>
          by_speaker;
      for (const auto& r : records)
        for (size_t i = 0; i < r.extracted_opinions.size(); ++i) {
          std::string seg_id =
              r.speech_id + "#" +
              std::to_string(r.opinion_segment_indices[i]);
          by_speaker[r.speaker_id].push_back({r.extracted_opinions[i], seg_id});
        }

      std::vector<json> rows;
      for (const auto& [speaker, statements] : by_speaker) {
        auto summary = gateway_->summarize_stance(speaker, topic.name,
                                                  statements,
                                                  cfg_.summarize.style);
        rows.push_back(json(summary));
      }
      StageWriter w;
      w.write_jsonl(dir / "summaries.jsonl", rows);
      w.publish();
      log("summarize(" + topic.name + "): " + std::to_string(rows.size()) +
          " stance summaries");
    });
  }

  void run_embed(const TopicConfig& topic) {
    stage("embed", topic.name, [&] {
      auto dir = topic_dir(topic);
      auto summaries = load_summaries(dir);
      std::vector<std::string> texts;
      for (const auto& s : summaries) texts.push_back(s.text);
      auto vecs = embed::embed_texts(texts, *embedder(), embed_cache_dir());
      std::vector<json> rows;
      for (size_t i = 0; i < summaries.size(); ++i)
        rows.push_back(json{{"subject_id", summaries[i].legislator_id},
                            {"text_sha256", vecs[i].source_id},
                            {"vector", vecs[i].values}});
      StageWriter w;
      w.write_jsonl(dir / "embeddings.jsonl", rows);
      w.publish();
      log("embed(" + topic.name + "): " + std::to_string(rows.size()) +
          " summary embeddings");
    });
  }

  void run_axes(const TopicConfig& topic) {
    stage("axes", topic.name, [&] {
      auto dir = topic_dir(topic);
      json out{{"topic", topic.name}};
      std::vector<llm::ControversyAxisSpec> specs;
      if (!topic.axes_file.empty()) {
        specs = llm::load_axis_specs(topic.axes_file);
        out["source"] = "file";
        out["warnings"] = json::array();
      } else {
        auto summaries = load_summaries(dir);
        auto raw = gateway_->extract_axes_raw(summaries, topic.name);
        auto parsed = llm::parse_axes_reply(raw.reply);
        specs = parsed.specs;
        out["source"] = "llm";
        out["raw_reply"] = raw.reply;
        out["n_summaries_used"] = raw.n_summaries_used;
        out["n_summaries_total"] = raw.n_summaries_total;
        out["warnings"] = parsed.warnings;
      }
      out["specs"] = json::array();
      for (const auto& s : specs) out["specs"].push_back(json(s));
      StageWriter w;
      w.write(dir / "axes.json", out.dump(2) + "\n");
      w.publish();
      log("axes(" + topic.name + "): " + std::to_string(specs.size()) +
          " controversy axes");
    });
  }

  void run_scale(const TopicConfig& topic) {
    stage("scale", topic.name, [&] {
      auto dir = topic_dir(topic);
      auto specs = load_axis_specs(dir);
      auto summaries = load_summaries(dir);
      attach_embeddings(dir, summaries);
      auto party_map = subject_party_map(dir);

      std::vector<std::pair<std::string, embed::EmbeddingVector>> subjects;
      for (const auto& s : summaries)
        subjects.push_back(
            {s.legislator_id,
             embed::EmbeddingVector{s.embedding, s.legislator_id}});

      StageWriter w;
      std::vector<json> score_rows;
      json clusters = json::object();
      json plane = json::object();
      json orderings = json::array();
      for (const auto& [slug, spec] : with_slugs(specs)) {
        auto axis = scale::build_axis(spec, *gateway_, *embedder(),
                                      cfg_.scale.n_refs, embed_cache_dir());
        auto scores =
            scale::scale_subjects(summaries, axis, cfg_.scale.normalize);
        auto clustering = scale::cluster_three_way(scores);

        std::string tsv = "subject\tparty\tscore\tcluster\n";
        std::vector<std::pair<std::string, double>> party_scores;
        for (const auto& s : scores) {
          std::string party = party_of(party_map, s.subject_id);
          std::string cluster =
              scale::cluster_token(clustering.assignment.at(s.subject_id));
          score_rows.push_back(json{{"axis", slug},
                                    {"axis_topic", spec.topic},
                                    {"subject_id", s.subject_id},
                                    {"party_id", party},
                                    {"score", s.score},
                                    {"cluster", cluster}});
          tsv += s.subject_id + "\t" + party + "\t" + format_double(s.score) +
                 "\t" + cluster + "\n";
          party_scores.push_back({party, s.score});
        }
        w.write(dir / ("scores_" + slug + ".tsv"), tsv);

        auto ours = evaluate::ordering_from_scores("scores:" + slug,
                                                   spec.topic, party_scores);
        orderings.push_back(json{{"label", ours.ordering.label},
                                 {"topic", ours.ordering.topic},
                                 {"parties", ours.ordering.parties},
                                 {"had_ties", ours.had_ties}});

        json cl{{"topic", spec.topic},
                {"lower", clustering.lower},
                {"upper", clustering.upper},
                {"degenerate", clustering.degenerate}};
        cl["assignment"] = json::object();
        for (const auto& [subject, c] : clustering.assignment)
          cl["assignment"][subject] = scale::cluster_token(c);
        clusters[slug] = std::move(cl);

        if (subjects.size() >= 2 && subjects[0].second.dim() >= 2) {
          try {
            auto p2 = scale::pca_2d(subjects, &axis);
            json pj{{"topic", spec.topic},
                    {"eigenvalues", p2.eigenvalues},
                    {"method", p2.method}};
            pj["points"] = json::array();
            for (const auto& pt : p2.points)
              pj["points"].push_back(json{
                  {"subject_id", pt.subject_id}, {"x", pt.x}, {"y", pt.y}});
            if (p2.pro_ref)
              pj["pro_ref"] = json{{"x", p2.pro_ref->x}, {"y", p2.pro_ref->y}};
            if (p2.con_ref)
              pj["con_ref"] = json{{"x", p2.con_ref->x}, {"y", p2.con_ref->y}};
            plane[slug] = std::move(pj);
          } catch (const DataError& e) {
            // an all-identical cloud has no principal plane; the report will
            // note the missing chart rather than the run failing here
            log(std::string("scale: no 2-D plane for ") + slug + ": " +
                e.what());
          }
        }
      }
      w.write_jsonl(dir / "scores.jsonl", score_rows);
      w.write(dir / "clusters.json", clusters.dump(2) + "\n");
      w.write(dir / "plane.json", plane.dump(2) + "\n");
      w.write(dir / "orderings.json", orderings.dump(2) + "\n");
      w.publish();
      log("scale(" + topic.name + "): " + std::to_string(score_rows.size()) +
          " scores across " + std::to_string(specs.size()) + " axes");
    });
  }

  void run_diachronic(const TopicConfig& topic) {
    stage("diachronic", topic.name, [&] {
      auto dir = topic_dir(topic);
      auto specs = load_axis_specs(dir);
      auto records = filter::load_opinions(dir / "opinions.jsonl");
      auto segments = diachronic::segment_refs_from_opinions(records);
      if (registry_)
        for (auto& s : segments) {
          auto party = registry_->party_of(s.speaker_id);
          if (!party.empty()) s.party_id = party;
        }

      std::vector<std::string> parties = cfg_.diachronic.parties;
      if (parties.empty()) {
        std::set<std::string> seen;
        for (const auto& s : segments)
          if (!s.party_id.empty()) seen.insert(s.party_id);
        parties.assign(seen.begin(), seen.end());
      }
      auto [year_from, year_to] = diachronic_window(segments);

      std::vector<std::string> texts;
      std::set<std::string> seen_texts;
      for (const auto& s : segments)
        if (seen_texts.insert(s.text).second) texts.push_back(s.text);
      std::map<std::string, embed::EmbeddingVector> by_text;
      if (!texts.empty()) {
        auto vecs = embed::embed_texts(texts, *embedder(), embed_cache_dir());
        for (size_t i = 0; i < texts.size(); ++i) by_text[texts[i]] = vecs[i];
      }

      StageWriter w;
      std::vector<json> rows;
      std::string tsv = "axis\tparty\tyear\tscore\tn_segments\tn_representatives\n";
      for (const auto& [slug, spec] : with_slugs(specs)) {
        auto axis = scale::build_axis(spec, *gateway_, *embedder(),
                                      cfg_.scale.n_refs, embed_cache_dir());
        auto series = diachronic::diachronic_series(
            segments, by_text, axis, parties, year_from, year_to,
            cfg_.diachronic.min_segments, cfg_.diachronic.by_speaker,
            cfg_.scale.normalize);
        for (const auto& p : series) {
          rows.push_back(json{{"axis", slug},
                              {"axis_topic", spec.topic},
                              {"party_id", p.party_id},
                              {"year", p.year},
                              {"score", p.score},
                              {"n_segments", p.n_segments},
                              {"n_representatives", p.n_representatives}});
          tsv += slug + "\t" + p.party_id + "\t" + std::to_string(p.year) +
                 "\t" + format_double(p.score) + "\t" +
                 std::to_string(p.n_segments) + "\t" +
                 std::to_string(p.n_representatives) + "\n";
        }
      }
      w.write_jsonl(dir / "diachronic.jsonl", rows);
      w.write(dir / "diachronic.tsv", tsv);
      w.publish();
      log("diachronic(" + topic.name + "): " + std::to_string(rows.size()) +
          " party-year positions");
    });
  }

  void run_evaluate(const TopicConfig& topic) {
    stage("evaluate", topic.name, [&] {
      auto dir = topic_dir(topic);
      json evaluation{{"topic", topic.name}};
      StageWriter w;

      // ordering comparisons against the expert file
      std::vector<evaluate::Ordering> ours;
      json ours_json = json::parse(read_file(dir / "orderings.json"));
      for (const auto& oj : ours_json) {
        evaluate::Ordering o;
        o.label = oj.at("label").get<std::string>();
        o.topic = oj.value("topic", "");
        o.parties = oj.at("parties").get<std::vector<std::string>>();
        ours.push_back(std::move(o));
      }

      json comparisons = json::array();
      std::string ctsv =
          "ours\texpert\ttopic\tn_common\tspearman_rho\tkendall_tau\tlcs_"
          "ratio\tdropped_ours\tdropped_expert\n";
      if (!cfg_.evaluate.expert_orderings.empty()) {
        auto expert = evaluate::load_orderings(cfg_.evaluate.expert_orderings);
        for (const auto& o : ours) {
          for (const auto& e : expert) {
            bool topic_match = !o.topic.empty() && o.topic == e.topic;
            bool sole_pair = ours.size() == 1 && expert.size() == 1;
            if (!topic_match && !sole_pair) continue;
            json row{{"ours", o.label}, {"expert", e.label}, {"topic", o.topic}};
            try {
              auto cmp = evaluate::compare_orderings(o, e);
              row["n_common"] = cmp.alignment.a.size();
              row["spearman_rho"] = cmp.spearman_rho;
              row["kendall_tau"] = cmp.kendall_tau;
              row["lcs_ratio"] = cmp.lcs;
              row["dropped_ours"] = cmp.alignment.dropped_a;
              row["dropped_expert"] = cmp.alignment.dropped_b;
              ctsv += o.label + "\t" + e.label + "\t" + o.topic + "\t" +
                      std::to_string(cmp.alignment.a.size()) + "\t" +
                      format_double(cmp.spearman_rho) + "\t" +
                      format_double(cmp.kendall_tau) + "\t" +
                      format_double(cmp.lcs) + "\t" +
                      join(cmp.alignment.dropped_a, ",") + "\t" +
                      join(cmp.alignment.dropped_b, ",") + "\n";
            } catch (const DataError& ex) {
              // two orderings that share too few parties is a finding,
              // not a reason to lose the rest of the table
              row["error"] = ex.what();
            }
            comparisons.push_back(std::move(row));
          }
        }
      }
      evaluation["comparisons"] = comparisons;

      // PMI of segment phrases against score clusters, per axis
      json clusters = json::parse(read_file(dir / "clusters.json"));
      auto records = filter::load_opinions(dir / "opinions.jsonl");
      std::map<std::string, std::vector<std::string>> texts_of_subject;
      for (const auto& r : records)
        for (const auto& text : r.extracted_opinions)
          texts_of_subject[r.speaker_id].push_back(text);

      json pmi_out = json::object();
      for (const auto& [slug, cl] : clusters.items()) {
        std::vector<std::pair<std::string, std::string>> occurrences;
        for (const auto& [subject, cluster] : cl.at("assignment").items()) {
          auto it = texts_of_subject.find(subject);
          if (it == texts_of_subject.end()) continue;
          for (const auto& text : it->second)
            for (const auto& phrase : evaluate::extract_phrases(text))
              occurrences.push_back({phrase, cluster.get<std::string>()});
        }
        if (occurrences.empty()) continue;
        auto table = evaluate::pmi_table(occurrences, cfg_.evaluate.pmi_min_count,
                                         cfg_.evaluate.pmi_top_k);
        json tj{{"total", table.total}, {"min_count", table.min_count}};
        tj["clusters"] = json::object();
        for (const auto& [cluster, entries] : table.by_cluster) {
          json arr = json::array();
          std::string ptsv = "phrase\tpmi\tcount\n";
          for (const auto& e : entries) {
            arr.push_back(json{
                {"phrase", e.phrase}, {"pmi", e.pmi}, {"count", e.count}});
            ptsv += e.phrase + "\t" + format_double(e.pmi) + "\t" +
                    std::to_string(e.count) + "\n";
          }
          tj["clusters"][cluster] = std::move(arr);
          w.write(dir / ("pmi_" + slug + "_" + cluster + ".tsv"), ptsv);
        }
        pmi_out[slug] = std::move(tj);
      }
      evaluation["pmi"] = pmi_out;

      w.write(dir / "comparisons.tsv", ctsv);
      w.write(dir / "evaluation.json", evaluation.dump(2) + "\n");
      w.publish();
      log("evaluate(" + topic.name + "): " +
          std::to_string(comparisons.size()) + " ordering comparisons");
    });
  }

  void run_report(const TopicConfig& topic) {
    stage("report", topic.name, [&] {
      auto dir = topic_dir(topic);
      auto bundle = report::emit_report(dir);
      StageWriter w;
      for (const auto& [name, content] : bundle.files)
        w.write(dir / "report" / name, content);
      w.publish();
      log("report(" + topic.name + "): " + std::to_string(bundle.files.size()) +
          " files, " + std::to_string(bundle.notes.size()) + " notes");
    });
  }

  // ---- full run ------------------------------------------------------------

  json run(bool force = false) {
    if (cfg_.topics.empty()) throw ConfigError("config lists no topics");
    json stages = json::object();
    for (const auto& topic : cfg_.topics) {
      const std::string slug = slugify(topic.name);
      json st = json::object();
      auto dir = topic_dir(topic);
      auto step = [&](const char* name, auto&& fn,
                      std::vector<fs::path> outputs) {
        bool have_all = !outputs.empty();
        for (const auto& p : outputs)
          have_all = have_all && fs::exists(dir / p);
        if (have_all && !force) {
          log(std::string(name) + "(" + topic.name + "): outputs present, skipped");
        } else {
          fn();
        }
        st[name] = "ok";
      };
      step("ingest", [&] { run_ingest(topic); },
           {"query_words.json", "speeches.jsonl"});
      step("filter", [&] { run_filter(topic); }, {"opinions.jsonl"});
      step("summarize", [&] { run_summarize(topic); }, {"summaries.jsonl"});
      step("embed", [&] { run_embed(topic); }, {"embeddings.jsonl"});
      step("axes", [&] { run_axes(topic); }, {"axes.json"});
      step("scale", [&] { run_scale(topic); },
           {"scores.jsonl", "clusters.json", "plane.json", "orderings.json"});
      step("diachronic", [&] { run_diachronic(topic); },
           {"diachronic.jsonl", "diachronic.tsv"});
      step("evaluate", [&] { run_evaluate(topic); },
           {"evaluation.json", "comparisons.tsv"});
      step("report", [&] { run_report(topic); },
           {fs::path("report") / "index.html"});
      stages[slug] = std::move(st);
    }
    auto manifest = build_manifest(stages);
    write_file(cfg_.out_dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
  }

  json build_manifest(const json& stages) const {
    json manifest{{"tool", kToolName},
                  {"version", kToolVersion},
                  {"format_version", kManifestFormat},
                  {"config_hash", cfg_.config_hash},
                  {"mode", llm::mode_token(cfg_.mode)},
                  {"stages", stages}};
    json outputs = json::object();
    std::vector<fs::path> files;
    if (fs::exists(cfg_.out_dir))
      for (const auto& entry : fs::recursive_directory_iterator(cfg_.out_dir)) {
        if (!entry.is_regular_file()) continue;
        auto name = entry.path().filename().string();
        if (name == "manifest.json" ||
            (name.size() > 8 &&
             name.compare(name.size() - 8, 8, ".partial") == 0))
          continue;
        files.push_back(entry.path());
      }
    std::sort(files.begin(), files.end());
    for (const auto& f : files)
      outputs[fs::relative(f, cfg_.out_dir).generic_string()] =
          sha256_file_hex(f);
    manifest["outputs"] = outputs;
    manifest["cache"] = json{{"chat_hits", chat_cache_->hits()},
                             {"chat_misses", chat_cache_->misses()}};
    return manifest;
  }

  llm::LlmGateway& gateway() { return *gateway_; }
  llm::ReplayCache& chat_cache() { return *chat_cache_; }

 private:
  template <typename Fn>
  void stage(const std::string& name, const std::string& topic, Fn&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      detail::rethrow_staged(name, topic, e);
    } catch (const ProviderError& e) {
      detail::rethrow_staged(name, topic, e);
    } catch (const ParseError& e) {
      throw ParseError("stage " + name + " (" + topic + "): " + e.what(),
                       e.raw());
    } catch (const DataError& e) {
      detail::rethrow_staged(name, topic, e);
    } catch (const json::exception& e) {
      // a malformed intermediate file is bad data, not an internal bug
      throw DataError("stage " + name + " (" + topic + "): " + e.what());
    }
  }

  std::shared_ptr<llm::ChatProvider> make_chat_provider() const {
    const auto& ep = cfg_.chat.endpoint;
    if (ep.rfind("mock:synth:", 0) == 0)
      return synth::make_synth_provider(ep.substr(11));
    if (ep.rfind("http", 0) == 0)
      return std::make_shared<llm::HttpChatProvider>(ep, cfg_.chat.api_key);
    throw ConfigError("unrecognized chat endpoint: " + ep);
  }

  std::shared_ptr<embed::IEmbeddingClient> embedder() {
    if (embedder_) return embedder_;
    if (cfg_.embedding.endpoint.empty())
      throw ConfigError("no embedding endpoint configured");
    auto inner = embed::make_embedding_client(
        cfg_.embedding.endpoint, cfg_.embedding.model, cfg_.embedding.dim,
        cfg_.embedding.batch_size, cfg_.embedding.api_key);
    if (cfg_.mode == llm::Mode::Offline &&
        cfg_.embedding.endpoint.rfind("http", 0) == 0)
      embedder_ = std::make_shared<detail::OfflineEmbeddingGuard>(inner);
    else
      embedder_ = inner;
    return embedder_;
  }

  fs::path embed_cache_dir() const { return cfg_.cache_dir / "embed"; }

  std::vector<llm::StanceSummary> load_summaries(const fs::path& dir) const {
    std::vector<llm::StanceSummary> out;
    read_jsonl(dir / "summaries.jsonl", [&](size_t, json&& j) {
      out.push_back(llm::summary_from_json(j));
    });
    return out;
  }

  void attach_embeddings(const fs::path& dir,
                         std::vector<llm::StanceSummary>& summaries) const {
    std::map<std::string, std::vector<double>> by_subject;
    read_jsonl(dir / "embeddings.jsonl", [&](size_t, json&& j) {
      by_subject[j.at("subject_id").get<std::string>()] =
          j.at("vector").get<std::vector<double>>();
    });
    for (auto& s : summaries) {
      auto it = by_subject.find(s.legislator_id);
      if (it == by_subject.end())
        throw DataError("no embedding stored for subject " + s.legislator_id);
      s.embedding = it->second;
    }
  }

  std::vector<llm::ControversyAxisSpec> load_axis_specs(
      const fs::path& dir) const {
    json j = json::parse(read_file(dir / "axes.json"));
    std::vector<llm::ControversyAxisSpec> specs;
    for (const auto& sj : j.at("specs"))
      specs.push_back(llm::axis_spec_from_json(sj));
    if (specs.empty())
      throw DataError("axes.json holds no controversy axes");
    return specs;
  }

  // Deterministic slug per axis; repeated topics get a numeric suffix.
  std::vector<std::pair<std::string, llm::ControversyAxisSpec>> with_slugs(
      const std::vector<llm::ControversyAxisSpec>& specs) const {
    std::vector<std::pair<std::string, llm::ControversyAxisSpec>> out;
    std::map<std::string, int> used;
    for (const auto& spec : specs) {
      std::string slug = slugify(spec.topic);
      int n = ++used[slug];
      if (n > 1) slug += "-" + std::to_string(n);
      out.push_back({slug, spec});
    }
    return out;
  }

  std::map<std::string, std::string> subject_party_map(
      const fs::path& dir) const {
    std::map<std::string, std::string> out;
    for (const auto& r : filter::load_opinions(dir / "opinions.jsonl"))
      out[r.speaker_id] = r.speaker_group;
    if (registry_)
      for (auto& [subject, party] : out) {
        auto p = registry_->party_of(subject);
        if (!p.empty()) party = p;
      }
    return out;
  }

  static std::string party_of(const std::map<std::string, std::string>& m,
                              const std::string& subject) {
    auto it = m.find(subject);
    if (it == m.end() || it->second.empty()) return "unknown";
    return it->second;
  }

  std::pair<int, int> diachronic_window(
      const std::vector<diachronic::SegmentRef>& segments) const {
    int from = cfg_.diachronic.from, to = cfg_.diachronic.to;
    if (from == 0 && valid_iso_date(cfg_.archive.from))
      from = date_year(cfg_.archive.from);
    if (to == 0 && valid_iso_date(cfg_.archive.to))
      to = date_year(cfg_.archive.to);
    if ((from == 0 || to == 0) && !segments.empty()) {
      int lo = segments[0].year, hi = segments[0].year;
      for (const auto& s : segments) {
        lo = std::min(lo, s.year);
        hi = std::max(hi, s.year);
      }
      if (from == 0) from = lo;
      if (to == 0) to = hi;
    }
    if (from == 0 || to == 0)
      throw ConfigError("cannot determine the diachronic year window");
    return {from, to};
  }

  RunConfig cfg_;
  std::unique_ptr<llm::ReplayCache> chat_cache_;
  std::optional<llm::LlmGateway> gateway_;
  std::shared_ptr<embed::IEmbeddingClient> embedder_;
  std::optional<corpus::Registry> registry_;
};

}  // namespace polscale::pipeline
