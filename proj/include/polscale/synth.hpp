#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "polscale/corpus.hpp"
#include "polscale/evaluate.hpp"
#include "polscale/ingest.hpp"
#include "polscale/llm.hpp"
#include "polscale/scale.hpp"

namespace polscale::synth {

struct PartySpec {
  std::string id;
  double position = 0.0;  // planted stance in [-1, 1]
  int n_legislators = 4;
};

struct DriftSpec {
  double from = 0.0, to = 0.0;  // linear over the year window
};

struct WorldConfig {
  std::string topic = "energy transition";
  int dim = 8;
  uint64_t seed = 1;
  double noise_sigma = 0.0;  // gaussian sigma relative to axis length
  double jitter = 0.0;       // legislator offset sigma around party position
  int n_refs = 1;
  std::vector<PartySpec> parties;
  int year_from = 2021, year_to = 2023;
  int speeches_per_legislator_year = 1;
  int opinion_segments_per_speech = 2;
  int filler_segments_per_speech = 1;
  int page_size = 25;
  std::string opinion_marker = "★";  // ★
  std::map<std::string, DriftSpec> drift;
  std::optional<llm::ControversyAxisSpec> axis;
};

inline WorldConfig world_config_from_json(const json& j) {
  WorldConfig cfg;
  cfg.topic = j.value("topic", cfg.topic);
  cfg.dim = j.value("dim", cfg.dim);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
  cfg.jitter = j.value("jitter", cfg.jitter);
  cfg.n_refs = j.value("n_refs", cfg.n_refs);
  for (const auto& pj : j.value("parties", json::array())) {
    PartySpec p;
    p.id = pj.at("id").get<std::string>();
    p.position = pj.at("position").get<double>();
    p.n_legislators = pj.value("n_legislators", p.n_legislators);
    cfg.parties.push_back(std::move(p));
  }
  cfg.year_from = j.value("year_from", cfg.year_from);
  cfg.year_to = j.value("year_to", cfg.year_to);
  cfg.speeches_per_legislator_year =
      j.value("speeches_per_legislator_year", cfg.speeches_per_legislator_year);
  cfg.opinion_segments_per_speech =
      j.value("opinion_segments_per_speech", cfg.opinion_segments_per_speech);
  cfg.filler_segments_per_speech =
      j.value("filler_segments_per_speech", cfg.filler_segments_per_speech);
  cfg.page_size = j.value("page_size", cfg.page_size);
  cfg.opinion_marker = j.value("opinion_marker", cfg.opinion_marker);
  if (j.contains("drift"))  // items() must not outlive a temporary
    for (const auto& [party, dj] : j.at("drift").items())
      cfg.drift[party] = {dj.at("from").get<double>(),
                          dj.at("to").get<double>()};
  if (j.contains("axis")) cfg.axis = llm::axis_spec_from_json(j["axis"]);
  return cfg;
}

inline json world_config_to_json(const WorldConfig& cfg) {
  json j{{"topic", cfg.topic},
         {"dim", cfg.dim},
         {"seed", cfg.seed},
         {"noise_sigma", cfg.noise_sigma},
         {"jitter", cfg.jitter},
         {"n_refs", cfg.n_refs},
         {"year_from", cfg.year_from},
         {"year_to", cfg.year_to},
         {"speeches_per_legislator_year", cfg.speeches_per_legislator_year},
         {"opinion_segments_per_speech", cfg.opinion_segments_per_speech},
         {"filler_segments_per_speech", cfg.filler_segments_per_speech},
         {"page_size", cfg.page_size},
         {"opinion_marker", cfg.opinion_marker}};
  j["parties"] = json::array();
  for (const auto& p : cfg.parties)
    j["parties"].push_back({{"id", p.id},
                            {"position", p.position},
                            {"n_legislators", p.n_legislators}});
  if (!cfg.drift.empty()) {
    j["drift"] = json::object();
    for (const auto& [party, d] : cfg.drift)
      j["drift"][party] = {{"from", d.from}, {"to", d.to}};
  }
  if (cfg.axis) j["axis"] = *cfg.axis;
  return j;
}

inline void validate(const WorldConfig& cfg) {
  if (cfg.dim < 2) throw ConfigError("world dim must be >= 2");
  if (cfg.parties.empty()) throw ConfigError("world needs at least one party");
  if (cfg.year_from > cfg.year_to) throw ConfigError("world year range inverted");
  if (cfg.n_refs < 1) throw ConfigError("n_refs must be >= 1");
  if (cfg.noise_sigma < 0 || cfg.jitter < 0)
    throw ConfigError("noise_sigma and jitter must be >= 0");
  std::set<std::string> ids;
  for (const auto& p : cfg.parties)
    if (p.id.empty() || !ids.insert(p.id).second)
      throw ConfigError("world party ids must be unique and non-empty");
}

// Deterministic RNG; Box-Muller instead of std::normal_distribution because
// the latter's algorithm is implementation-defined and fixtures must be
// byte-identical for one seed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : g_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(g_() >> 11) * 0x1.0p-53;
  }

  double gaussian() {
    double u1 = std::max(uniform(), 1e-300);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  long integer(long lo, long hi) {  // inclusive
    return lo + static_cast<long>(g_() % static_cast<uint64_t>(hi - lo + 1));
  }

 private:
  std::mt19937_64 g_;
};

struct PlantedLegislator {
  std::string id;
  std::string name;
  std::string party_id;
  double position = 0.0;  // static stance incl. personal offset

  bool operator==(const PlantedLegislator&) const = default;
};

// A fully planted world: geometry, people, texts, and the exact replies the
// mock chat provider will give. Planted vectors live on a dyadic lattice so
// noise-free projection recovers positions exactly (dyadic sums and the
// final division stay correctly rounded to the true value).
struct PlantedWorld {
  WorldConfig cfg;
  llm::ControversyAxisSpec axis_spec;
  std::vector<double> pro_vec, con_vec;
  std::vector<PlantedLegislator> legislators;
  std::map<std::string, std::string> summary_texts;  // legislator -> text
  std::map<std::string, std::string> ref_texts;      // "pro:0" -> text
  std::string axes_reply;
  std::string query_reply;
  std::string query_word;
  std::map<std::string, std::vector<double>> embeddings;  // text -> vector
  std::vector<corpus::Speech> speeches;
  std::vector<std::string> party_order;  // planted, most-against first
  std::map<std::string, std::map<int, double>> party_pos_by_year;

  double axis_length() const {
    double s = 0;
    for (size_t i = 0; i < pro_vec.size(); ++i) {
      double d = pro_vec[i] - con_vec[i];
      s += d * d;
    }
    return std::sqrt(s);
  }
};

namespace detail {

inline std::vector<double> lattice_vector(Rng& rng, int dim, int denom) {
  std::vector<double> v(dim);
  bool nonzero = false;
  for (auto& x : v) {
    long k = rng.integer(-denom, denom);
    x = static_cast<double>(k) / static_cast<double>(denom);
    nonzero |= (k != 0);
  }
  if (!nonzero) v[0] = 1.0;
  return v;
}

inline double quantize(double x, double denom) {
  return std::round(x * denom) / denom;
}

}  // namespace detail

inline PlantedWorld generate_world(const WorldConfig& cfg_in) {
  WorldConfig cfg = cfg_in;
  validate(cfg);
  PlantedWorld w;
  w.cfg = cfg;
  Rng rng(cfg.seed);

  w.axis_spec = cfg.axis.value_or(llm::ControversyAxisSpec{
      "Expansion of public programs for " + cfg.topic,
      "These programs are essential and their expansion should be "
      "accelerated.",
      "These programs are wasteful and should be scaled back."});

  // half-axis u and a second direction for reference-speech variation
  auto u = detail::lattice_vector(rng, cfg.dim, 256);
  auto wdir = detail::lattice_vector(rng, cfg.dim, 256);
  auto center = detail::lattice_vector(rng, cfg.dim, 256);
  w.pro_vec.resize(cfg.dim);
  w.con_vec.resize(cfg.dim);
  for (int i = 0; i < cfg.dim; ++i) {
    w.pro_vec[i] = center[i] + u[i];
    w.con_vec[i] = center[i] - u[i];
  }

  double axis_len = w.axis_length();
  if (axis_len <= 1e-9) {
    // lattice draw collapsed; nudge one coordinate
    w.pro_vec[0] += 1.0;
    axis_len = w.axis_length();
  }
  double sigma = cfg.noise_sigma * axis_len;

  // position in [-1,1] -> planted vector, optionally noisy
  auto plant = [&](double position, bool noisy) {
    double s = (position + 1.0) / 2.0;
    std::vector<double> v(cfg.dim);
    for (int i = 0; i < cfg.dim; ++i)
      v[i] = w.con_vec[i] + s * (w.pro_vec[i] - w.con_vec[i]);
    if (noisy && sigma > 0)
      for (auto& x : v) x += sigma * rng.gaussian();
    return v;
  };

  // planted party trajectory; a drift spec overrides the static position
  for (const auto& party : cfg.parties) {
    auto it = cfg.drift.find(party.id);
    for (int year = cfg.year_from; year <= cfg.year_to; ++year) {
      double pos = party.position;
      if (it != cfg.drift.end()) {
        double frac = cfg.year_to == cfg.year_from
                          ? 0.0
                          : static_cast<double>(year - cfg.year_from) /
                                static_cast<double>(cfg.year_to - cfg.year_from);
        pos = it->second.from + frac * (it->second.to - it->second.from);
      }
      w.party_pos_by_year[party.id][year] = pos;
    }
  }

  // people; static position is the final-year party position plus a
  // personal offset, so summaries and the last year of segments agree
  std::map<std::string, double> leg_offset;
  for (const auto& party : cfg.parties) {
    for (int i = 0; i < party.n_legislators; ++i) {
      PlantedLegislator leg;
      char idx[16];
      std::snprintf(idx, sizeof idx, "%02d", i);
      leg.id = party.id + "-" + idx;
      leg.name = "Member " + leg.id;
      leg.party_id = party.id;
      double off = cfg.jitter > 0
                       ? detail::quantize(rng.gaussian() * cfg.jitter, 1 << 20)
                       : 0.0;
      leg_offset[leg.id] = off;
      leg.position = w.party_pos_by_year[party.id][cfg.year_to] + off;
      w.legislators.push_back(std::move(leg));
    }
  }

  // texts the mock provider will serve, and their planted embeddings
  for (const auto& leg : w.legislators) {
    std::string text = "⟦SUM:" + leg.id + "⟧ overall stance of " +
                       leg.id + " regarding " + cfg.topic;
    w.summary_texts[leg.id] = text;
    w.embeddings[text] = plant(leg.position, true);
  }

  for (auto side : {llm::Side::Pro, llm::Side::Con}) {
    const std::string& side_text =
        side == llm::Side::Pro ? w.axis_spec.pro : w.axis_spec.con;
    const auto& anchor = side == llm::Side::Pro ? w.pro_vec : w.con_vec;
    for (int i = 0; i < cfg.n_refs; ++i) {
      std::string key = llm::side_token(side) + ":" + std::to_string(i);
      std::string text = "⟦REF:" + key +
                         "⟧ statement taking the position: " + side_text;
      w.ref_texts[key] = text;
      // balanced offsets along wdir; their mean is exactly zero, so the
      // per-side mean lands back on the anchor when noise is off
      double coeff = (static_cast<double>(i) -
                      (static_cast<double>(cfg.n_refs) - 1.0) / 2.0) /
                     64.0;
      std::vector<double> v = anchor;
      for (int d = 0; d < cfg.dim; ++d) v[d] += coeff * wdir[d];
      if (sigma > 0)
        for (auto& x : v) x += sigma * rng.gaussian();
      w.embeddings[text] = v;
    }
  }

  // speeches: opinion segments carry the marker, filler does not
  for (const auto& leg : w.legislators) {
    size_t leg_index = &leg - w.legislators.data();
    for (int year = cfg.year_from; year <= cfg.year_to; ++year) {
      double pos_year =
          w.party_pos_by_year[leg.party_id][year] + leg_offset[leg.id];
      for (int sp = 0; sp < cfg.speeches_per_legislator_year; ++sp) {
        corpus::Speech s;
        s.speech_id = "SYN-" + leg.id + "-" + std::to_string(year) + "-" +
                      std::to_string(sp);
        s.house_name = (leg_index % 2 == 0) ? "House of Representatives"
                                            : "House of Councillors";
        s.meeting_name = "Plenary Session";
        s.date = std::to_string(year) + "-03-10";
        s.speech_url = "https://archive.invalid/speech/" + s.speech_id;
        s.speaker_id = leg.name;  // display name; registry resolves to id
        s.speaker_group = leg.party_id;
        s.topic = cfg.topic;
        for (int k = 0; k < cfg.opinion_segments_per_speech; ++k) {
          std::string text = "⟦LEG:" + leg.id + "⟧ " +
                             cfg.opinion_marker + " stance remark " +
                             std::to_string(year) + "-" + std::to_string(sp) +
                             "-" + std::to_string(k) + "。";
          s.body += text;
          w.embeddings[text] = plant(pos_year, true);
        }
        for (int k = 0; k < cfg.filler_segments_per_speech; ++k)
          s.body += "⟦LEG:" + leg.id + "⟧ procedural note " +
                    std::to_string(year) + "-" + std::to_string(sp) + "-" +
                    std::to_string(k) + "。";
        w.speeches.push_back(std::move(s));
      }
    }
  }

  w.query_word = cfg.topic;
  w.query_reply = "[\"" + cfg.topic + "\"]";
  w.axes_reply = llm::format_axes_reply({w.axis_spec});

  // expert ordering reflects final-year positions, matching what summaries
  // (which describe the overall, current stance) will recover
  std::vector<std::pair<std::string, double>> order;
  for (const auto& p : cfg.parties)
    order.push_back({p.id, w.party_pos_by_year[p.id][cfg.year_to]});
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  });
  for (const auto& [id, pos] : order) w.party_order.push_back(id);

  return w;
}

// ---------------------------------------------------------------------------
// Mock chat provider
//
// Answers exactly the prompts the live path renders, recognizing them by the
// structural markers the world plants: legislator marker tokens inside
// statements, the fixed response-format heading in extraction prompts, the
// seed tag on reference-speech requests, and the copy-verbatim instruction in
// query-word prompts. Replies are rendered with the same formatter the
// parsers consume everywhere else.
class SynthChatProvider final : public llm::ChatProvider {
 public:
  explicit SynthChatProvider(const PlantedWorld& world)
      : summaries_(world.summary_texts),
        refs_(world.ref_texts),
        axes_reply_(world.axes_reply),
        query_reply_(world.query_reply) {}

  SynthChatProvider(std::map<std::string, std::string> summaries,
                    std::map<std::string, std::string> refs,
                    std::string axes_reply, std::string query_reply)
      : summaries_(std::move(summaries)),
        refs_(std::move(refs)),
        axes_reply_(std::move(axes_reply)),
        query_reply_(std::move(query_reply)) {}

  std::string complete(const llm::ChatRequest& req) override {
    if (req.seed_tag.rfind("ref:", 0) == 0) {
      auto key = req.seed_tag.substr(4);
      auto it = refs_.find(key);
      if (it == refs_.end())
        throw ProviderError("mock provider has no reference speech " + key);
      return it->second;
    }
    auto marker = req.user.find("⟦LEG:");
    if (marker != std::string::npos) {
      auto end = req.user.find("⟧", marker);
      if (end == std::string::npos)
        throw ProviderError("mock provider: unterminated legislator marker");
      std::string id = req.user.substr(marker + 7, end - marker - 7);
      auto it = summaries_.find(id);
      if (it == summaries_.end())
        throw ProviderError("mock provider has no summary for " + id);
      return it->second;
    }
    if (req.user.find("Response Format") != std::string::npos)
      return axes_reply_;
    if (req.user.find("enclose the results in []") != std::string::npos)
      return query_reply_;
    throw ProviderError("mock provider cannot answer this request");
  }

  std::string name() const override { return "mock:synth"; }

 private:
  std::map<std::string, std::string> summaries_;
  std::map<std::string, std::string> refs_;
  std::string axes_reply_;
  std::string query_reply_;
};

// In-memory planted-table embedder, for in-process runs without files.
class TableEmbeddingClient final : public embed::IEmbeddingClient {
 public:
  explicit TableEmbeddingClient(const PlantedWorld& world)
      : table_(&world.embeddings), dim_(world.cfg.dim) {}

  std::vector<std::vector<double>> embed_batch(
      const std::vector<std::string>& texts) override {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
      auto it = table_->find(t);
      if (it == table_->end())
        throw DataError("no planted embedding for text: '" +
                        (t.size() > 80 ? t.substr(0, 80) + "..." : t) + "'");
      out.push_back(it->second);
    }
    return out;
  }

  std::string model_id() const override { return "planted"; }
  int dim() const override { return dim_; }

 private:
  const std::map<std::string, std::vector<double>>* table_;
  int dim_;
};

// ---------------------------------------------------------------------------
// World serialization

inline void write_world(const PlantedWorld& w, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  json world{{"config", world_config_to_json(w.cfg)},
             {"axis", w.axis_spec},
             {"query_word", w.query_word},
             {"query_reply", w.query_reply},
             {"axes_reply", w.axes_reply},
             {"party_order", w.party_order}};
  world["summaries"] = json::object();
  for (const auto& [id, text] : w.summary_texts) world["summaries"][id] = text;
  world["references"] = json::object();
  for (const auto& [key, text] : w.ref_texts) world["references"][key] = text;
  world["legislators"] = json::array();
  for (const auto& leg : w.legislators)
    world["legislators"].push_back({{"id", leg.id},
                                    {"name", leg.name},
                                    {"party_id", leg.party_id},
                                    {"position", leg.position}});
  world["party_positions_by_year"] = json::object();
  for (const auto& [party, by_year] : w.party_pos_by_year) {
    json y = json::object();
    for (const auto& [year, pos] : by_year) y[std::to_string(year)] = pos;
    world["party_positions_by_year"][party] = y;
  }
  write_file(dir / "world.json", world.dump(2) + "\n");

  json table{{"model", "planted"}, {"dim", w.cfg.dim}};
  table["vectors"] = json::object();
  for (const auto& [text, vec] : w.embeddings) table["vectors"][text] = vec;
  write_file(dir / "embeddings.json", table.dump() + "\n");

  json registry{{"parties", json::array()},
                {"legislators", json::array()},
                {"aliases", json::array()}};
  for (const auto& p : w.cfg.parties)
    registry["parties"].push_back(
        {{"id", p.id}, {"name_english", "Party " + p.id}});
  std::vector<int> years;
  for (int y = w.cfg.year_from; y <= w.cfg.year_to; ++y) years.push_back(y);
  for (const auto& leg : w.legislators)
    registry["legislators"].push_back({{"id", leg.id},
                                       {"name", leg.name},
                                       {"party_id", leg.party_id},
                                       {"service_years", years}});
  write_file(dir / "registry.json", registry.dump(2) + "\n");

  evaluate::Ordering expert;
  expert.label = "planted";
  expert.topic = w.axis_spec.topic;
  expert.parties = w.party_order;
  evaluate::save_orderings(dir / "expert_orderings.json", {expert});

  corpus::CorpusStore store(dir / "corpus.jsonl");
  if (store.exists()) std::filesystem::remove(store.path());
  store.save(w.speeches);

  // archive fixtures: the exact pages a paginated fetch of the query word
  // over the world's window will request
  std::string from = std::to_string(w.cfg.year_from) + "-01-01";
  std::string to = std::to_string(w.cfg.year_to) + "-12-31";
  ingest::FixtureStore fixtures(dir / "fixtures");
  long total = static_cast<long>(w.speeches.size());
  int ps = w.cfg.page_size;
  for (long start = 1, page = 0; page == 0 || start <= total;
       start += ps, ++page) {
    json body{{"numberOfRecords", total}, {"startRecord", start}};
    long end = std::min(total, start + ps - 1);
    if (end < total)
      body["nextRecordPosition"] = end + 1;
    else
      body["nextRecordPosition"] = nullptr;
    body["speechRecord"] = json::array();
    for (long i = start - 1; i < end; ++i) {
      const auto& s = w.speeches[static_cast<size_t>(i)];
      body["speechRecord"].push_back({{"speechID", s.speech_id},
                                      {"nameOfHouse", s.house_name},
                                      {"nameOfMeeting", s.meeting_name},
                                      {"date", s.date},
                                      {"speechURL", s.speech_url},
                                      {"speaker", s.speaker_id},
                                      {"speakerGroup", s.speaker_group},
                                      {"speech", s.body}});
    }
    fixtures.store(
        ingest::page_request_key(w.query_word, from, to, start, ps),
        body.dump());
    if (end >= total) break;
  }

  json run_cfg{
      {"mode", "record"},
      {"cache_dir", "cache"},
      {"out_dir", "out"},
      {"registry", "registry.json"},
      {"providers",
       {{"chat", {{"endpoint", "mock:synth:world.json"}, {"model", "mock"}}},
        {"embedding",
         {{"endpoint", "mock:planted:embeddings.json"}, {"model", "planted"}}},
        {"classifier",
         {{"endpoint", "stub:marker=" + w.cfg.opinion_marker}}}}},
      {"topics", json::array({{{"name", w.cfg.topic},
                               {"query_words", json::array()}}})},
      {"ingest",
       {{"base_url", "http://archive.invalid"},
        {"from", from},
        {"to", to},
        {"page_size", ps},
        {"rate_limit", 200},
        {"fixtures", "fixtures"}}},
      {"summarize", {{"style", "context_few_shot"}}},
      {"scale", {{"n_refs", w.cfg.n_refs}}},
      {"diachronic",
       {{"parties", [&] {
           json arr = json::array();
           for (const auto& p : w.cfg.parties) arr.push_back(p.id);
           return arr;
         }()},
        {"from", w.cfg.year_from},
        {"to", w.cfg.year_to},
        {"min_segments", 1}}},
      {"evaluate",
       {{"expert_orderings", "expert_orderings.json"},
        {"pmi_min_count", 2},
        {"pmi_top_k", 25}}}};
  write_file(dir / "run_config.json", run_cfg.dump(2) + "\n");

  // digest manifest so same-seed regeneration is checkable at a glance
  json manifest = json::object();
  std::vector<std::filesystem::path> files;
  for (const auto& entry :
       std::filesystem::recursive_directory_iterator(dir))
    if (entry.is_regular_file() &&
        entry.path().filename() != "world_manifest.json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files)
    manifest[std::filesystem::relative(f, dir).generic_string()] =
        sha256_file_hex(f);
  write_file(dir / "world_manifest.json", manifest.dump(2) + "\n");
}

struct LoadedWorld {
  std::map<std::string, std::string> summaries;
  std::map<std::string, std::string> refs;
  std::string axes_reply;
  std::string query_reply;
  std::vector<PlantedLegislator> legislators;
  std::vector<std::string> party_order;
};

inline LoadedWorld load_world(const std::filesystem::path& world_json) {
  json j;
  try {
    j = json::parse(read_file(world_json));
  } catch (const json::exception& e) {
    throw ConfigError("world file " + world_json.string() + ": " + e.what());
  }
  LoadedWorld w;
  for (const auto& [id, text] : j.at("summaries").items())
    w.summaries[id] = text.get<std::string>();
  for (const auto& [key, text] : j.at("references").items())
    w.refs[key] = text.get<std::string>();
  w.axes_reply = j.at("axes_reply").get<std::string>();
  w.query_reply = j.at("query_reply").get<std::string>();
  for (const auto& lj : j.value("legislators", json::array())) {
    PlantedLegislator leg;
    leg.id = lj.at("id").get<std::string>();
    leg.name = lj.value("name", "");
    leg.party_id = lj.at("party_id").get<std::string>();
    leg.position = lj.at("position").get<double>();
    w.legislators.push_back(std::move(leg));
  }
  w.party_order = j.value("party_order", std::vector<std::string>{});
  return w;
}

inline std::shared_ptr<llm::ChatProvider> make_synth_provider(
    const std::filesystem::path& world_json) {
  auto w = load_world(world_json);
  return std::make_shared<SynthChatProvider>(w.summaries, w.refs, w.axes_reply,
                                             w.query_reply);
}

// ---------------------------------------------------------------------------
// Recovery

struct RecoveryReport {
  double max_abs_error = 0.0;  // per-legislator |recovered - planted|
  double spearman_rho = 0.0;   // recovered vs planted party ordering
  size_t n_subjects = 0;
};

inline RecoveryReport recovery_report(
    const std::vector<PlantedLegislator>& legislators,
    const std::vector<std::string>& planted_party_order,
    const std::vector<scale::ScaledScore>& scores) {
  std::map<std::string, double> recovered;
  for (const auto& s : scores) recovered[s.subject_id] = s.score;
  RecoveryReport rep;
  std::vector<std::pair<std::string, double>> party_scores;
  for (const auto& leg : legislators) {
    auto it = recovered.find(leg.id);
    if (it == recovered.end())
      throw DataError("recovery: no score for planted legislator " + leg.id);
    rep.max_abs_error =
        std::max(rep.max_abs_error, std::abs(it->second - leg.position));
    party_scores.push_back({leg.party_id, it->second});
    ++rep.n_subjects;
  }
  auto ours = evaluate::ordering_from_scores("recovered", "", party_scores);
  rep.spearman_rho =
      evaluate::spearman(planted_party_order, ours.ordering.parties);
  return rep;
}

inline RecoveryReport recovery_report(const PlantedWorld& world,
                                      const std::vector<scale::ScaledScore>& scores) {
  return recovery_report(world.legislators, world.party_order, scores);
}

// The scaling path in-process: mock provider, planted embeddings, real
// gateway, real axis build, real projection. No files, no network.
inline std::vector<scale::ScaledScore> run_scale_path(const PlantedWorld& world) {
  auto provider = std::make_shared<SynthChatProvider>(world);
  llm::LlmGateway gateway(provider, nullptr, llm::Mode::Live);
  gateway.model = "mock";
  TableEmbeddingClient embedder(world);

  auto axis = scale::build_axis(world.axis_spec, gateway, embedder,
                                world.cfg.n_refs);

  std::vector<llm::StanceSummary> summaries;
  for (const auto& leg : world.legislators) {
    // one representative statement is enough for the mock to identify the
    // speaker; the live path would pass every opinion segment
    std::string statement = "⟦LEG:" + leg.id + "⟧ " +
                            world.cfg.opinion_marker + " stance remark " +
                            std::to_string(world.cfg.year_to) + "-0-0。";
    auto s = gateway.summarize_stance(leg.id, world.cfg.topic,
                                      {{statement, leg.id + "#0"}});
    summaries.push_back(std::move(s));
  }
  std::vector<std::string> texts;
  for (const auto& s : summaries) texts.push_back(s.text);
  auto vecs = embed::embed_texts(texts, embedder);
  for (size_t i = 0; i < summaries.size(); ++i)
    summaries[i].embedding = vecs[i].values;

  return scale::scale_subjects(summaries, axis);
}

}  // namespace polscale::synth
