// Command-line front end. Every subcommand is a thin shell over the library;
// errors map onto fixed exit codes so scripts can tell a bad config from a
// misbehaving provider.

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "polscale/pipeline.hpp"

namespace {

using namespace polscale;
namespace fs = std::filesystem;

struct GlobalArgs {
  std::string config;
  std::string mode;
  std::string cache_dir;
  std::string out_dir;
};

pipeline::RunConfig load_config(const GlobalArgs& g) {
  if (g.config.empty())
    throw ConfigError("--config <file> is required for this command");
  pipeline::RunOverrides over;
  if (!g.mode.empty()) over.mode = llm::mode_from_token(g.mode);
  if (!g.cache_dir.empty()) over.cache_dir = g.cache_dir;
  if (!g.out_dir.empty()) over.out_dir = g.out_dir;
  return pipeline::load_run_config(g.config, over);
}

// --topic accepts either the configured name or its directory slug.
std::vector<pipeline::TopicConfig> pick_topics(const pipeline::RunConfig& cfg,
                                               const std::string& wanted) {
  if (cfg.topics.empty()) throw ConfigError("config lists no topics");
  if (wanted.empty()) return cfg.topics;
  for (const auto& t : cfg.topics)
    if (t.name == wanted || slugify(t.name) == slugify(wanted)) return {t};
  throw ConfigError("topic '" + wanted + "' is not in the config");
}

int run_stage_command(const GlobalArgs& g, const std::string& topic,
                      const std::function<void(pipeline::Pipeline&,
                                               const pipeline::TopicConfig&)>& fn) {
  auto cfg = load_config(g);
  pipeline::Pipeline pipe(std::move(cfg));
  for (const auto& t : pick_topics(pipe.config(), topic)) fn(pipe, t);
  return 0;
}

std::vector<scale::ScaledScore> read_scores(const fs::path& path,
                                            std::string axis_filter) {
  std::vector<scale::ScaledScore> out;
  std::set<std::string> axes_seen;
  read_jsonl(path, [&](size_t, json&& j) {
    std::string axis = j.value("axis", "");
    axes_seen.insert(axis);
    if (!axis_filter.empty() && axis != axis_filter) return;
    out.push_back({j.at("subject_id").get<std::string>(),
                   j.value("axis_topic", ""), j.at("score").get<double>()});
  });
  if (axis_filter.empty() && axes_seen.size() > 1)
    throw DataError("scores file holds " + std::to_string(axes_seen.size()) +
                    " axes; pick one with --axis");
  if (out.empty()) throw DataError("no score rows selected from " + path.string());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ideological scaling of parliamentary speech records"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config, "run configuration file (JSON)");
  app.add_option("--mode", g.mode, "provider mode")
      ->check(CLI::IsMember({"live", "offline", "record"}));
  app.add_option("--cache-dir", g.cache_dir, "replay/embedding cache directory");
  app.add_option("--out", g.out_dir, "output directory");

  std::string topic;

  auto* ingest_cmd = app.add_subcommand("ingest", "fetch speeches from the archive");
  ingest_cmd->fallthrough();
  std::string ingest_from, ingest_to, ingest_fixtures;
  ingest_cmd->add_option("--topic", topic, "topic name or slug");
  ingest_cmd->add_option("--from", ingest_from, "window start (YYYY-MM-DD)");
  ingest_cmd->add_option("--to", ingest_to, "window end (YYYY-MM-DD)");
  ingest_cmd->add_option("--record-fixtures", ingest_fixtures,
                         "store fetched pages as replayable fixtures here");

  auto* filter_cmd =
      app.add_subcommand("filter", "segment speeches and keep opinion bearers");
  filter_cmd->fallthrough();
  std::string filter_in, filter_out, filter_classifier;
  filter_cmd->add_option("--topic", topic, "topic name or slug");
  filter_cmd->add_option("--in", filter_in, "speech store to read (bypasses config layout)");
  filter_cmd->add_option("--out-file", filter_out, "opinion store to write");
  filter_cmd->add_option("--classifier", filter_classifier,
                         "classifier endpoint (url or stub:marker=X)");

  auto* summarize_cmd =
      app.add_subcommand("summarize", "summarize each speaker's stance");
  summarize_cmd->fallthrough();
  summarize_cmd->add_option("--topic", topic, "topic name or slug");

  auto* embed_cmd = app.add_subcommand("embed", "embed stance summaries");
  embed_cmd->fallthrough();
  embed_cmd->add_option("--topic", topic, "topic name or slug");

  auto* axes_cmd =
      app.add_subcommand("axes", "extract controversy axes from summaries");
  axes_cmd->fallthrough();
  axes_cmd->add_option("--topic", topic, "topic name or slug");

  auto* scale_cmd =
      app.add_subcommand("scale", "project summaries onto controversy axes");
  scale_cmd->fallthrough();
  std::string scale_axis_file, scale_summaries, scale_out;
  scale_cmd->add_option("--topic", topic, "topic name or slug");
  scale_cmd->add_option("--axis-file", scale_axis_file,
                        "axis spec file (bypasses the axes stage output)");
  scale_cmd->add_option("--summaries", scale_summaries,
                        "summary store to scale (requires --axis-file)");
  scale_cmd->add_option("--out-dir", scale_out,
                        "direct mode: directory whose scale/ folder gets the outputs");

  auto* diachronic_cmd =
      app.add_subcommand("diachronic", "per-party yearly positions");
  diachronic_cmd->fallthrough();
  std::string dia_parties;
  int dia_from = 0, dia_to = 0;
  std::string dia_axis_file;
  diachronic_cmd->add_option("--topic", topic, "topic name or slug");
  diachronic_cmd->add_option("--axis-file", dia_axis_file,
                             "axis spec file overriding the axes stage output");
  diachronic_cmd->add_option("--parties", dia_parties,
                             "comma-separated party ids");
  diachronic_cmd->add_option("--from", dia_from, "first year");
  diachronic_cmd->add_option("--to", dia_to, "last year");

  auto* evaluate_cmd =
      app.add_subcommand("evaluate", "compare orderings and compute PMI tables");
  evaluate_cmd->fallthrough();
  evaluate_cmd->add_option("--topic", topic, "topic name or slug");

  auto* report_cmd = app.add_subcommand("report", "emit the static report bundle");
  report_cmd->fallthrough();
  report_cmd->add_option("--topic", topic, "topic name or slug");

  auto* run_cmd = app.add_subcommand("run", "run the full pipeline");
  run_cmd->fallthrough();
  bool run_force = false;
  run_cmd->add_flag("--force", run_force, "re-run stages whose outputs exist");

  auto* synth_cmd = app.add_subcommand("synth", "synthetic worlds with known truth");
  synth_cmd->require_subcommand(1);
  auto* synth_gen = synth_cmd->add_subcommand("generate", "generate a planted world");
  synth_gen->fallthrough();
  std::string synth_config, synth_out;
  std::optional<uint64_t> synth_seed;
  uint64_t synth_seed_value = 0;
  synth_gen->add_option("--config", synth_config, "world config file (JSON)");
  synth_gen
      ->add_option("--seed", synth_seed_value, "seed overriding the config")
      ->each([&](const std::string&) { synth_seed = synth_seed_value; });
  synth_gen->add_option("--out", synth_out, "directory for the world files")
      ->required();
  auto* synth_verify =
      synth_cmd->add_subcommand("verify", "compare pipeline scores to the planted truth");
  synth_verify->fallthrough();
  std::string verify_world, verify_scores, verify_axis;
  synth_verify->add_option("--world", verify_world, "world.json of the planted world")
      ->required();
  synth_verify->add_option("--scores", verify_scores, "scores.jsonl from the pipeline")
      ->required();
  synth_verify->add_option("--axis", verify_axis, "axis slug when several were scaled");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(ingest_cmd)) {
      auto cfg = load_config(g);
      if (!ingest_from.empty()) cfg.archive.from = ingest_from;
      if (!ingest_to.empty()) cfg.archive.to = ingest_to;
      if (!ingest_fixtures.empty()) cfg.ingest_fixtures = ingest_fixtures;
      pipeline::Pipeline pipe(std::move(cfg));
      for (const auto& t : pick_topics(pipe.config(), topic))
        pipe.run_ingest(t);
      return 0;
    }

    if (app.got_subcommand(filter_cmd)) {
      if (!filter_in.empty() || !filter_out.empty()) {
        if (filter_in.empty() || filter_out.empty())
          throw ConfigError("direct filter mode needs both --in and --out-file");
        if (filter_classifier.empty())
          throw ConfigError("direct filter mode needs --classifier");
        auto speeches = corpus::CorpusStore(filter_in).load();
        auto client = filter::ClassifierClient::parse(filter_classifier);
        auto records = filter::extract_opinions(speeches, client);
        pipeline::StageWriter w;
        std::vector<json> rows;
        for (const auto& r : records) rows.push_back(json(r));
        w.write_jsonl(filter_out, rows);
        w.publish();
        std::cout << records.size() << " opinion-bearing speeches of "
                  << speeches.size() << "\n";
        return 0;
      }
      auto cfg = load_config(g);
      if (!filter_classifier.empty()) cfg.classifier.endpoint = filter_classifier;
      pipeline::Pipeline pipe(std::move(cfg));
      for (const auto& t : pick_topics(pipe.config(), topic))
        pipe.run_filter(t);
      return 0;
    }

    if (app.got_subcommand(summarize_cmd))
      return run_stage_command(g, topic, [](auto& p, const auto& t) {
        p.run_summarize(t);
      });
    if (app.got_subcommand(embed_cmd))
      return run_stage_command(g, topic, [](auto& p, const auto& t) {
        p.run_embed(t);
      });

    if (app.got_subcommand(axes_cmd))
      return run_stage_command(g, topic, [](auto& p, const auto& t) {
        p.run_axes(t);
      });

    if (app.got_subcommand(scale_cmd)) {
      auto cfg = load_config(g);
      if (!scale_axis_file.empty() || !scale_summaries.empty()) {
        if (scale_axis_file.empty() || scale_summaries.empty())
          throw ConfigError(
              "direct scale mode needs both --axis-file and --summaries");
        // direct mode reuses the pipeline wiring; outputs land in a scale/
        // folder under the chosen directory
        pipeline::TopicConfig t;
        t.name = "scale";
        t.axes_file = scale_axis_file;
        cfg.topics = {t};
        if (!scale_out.empty()) cfg.out_dir = scale_out;
        pipeline::Pipeline pipe(std::move(cfg));
        auto dir = pipe.topic_dir(t);
        fs::create_directories(dir);
        // seed the layout the scale stage expects
        fs::copy_file(scale_summaries, dir / "summaries.jsonl",
                      fs::copy_options::overwrite_existing);
        pipe.run_embed(t);
        pipe.run_axes(t);
        pipe.run_scale(t);
        std::cout << "scaled into " << dir << "\n";
        return 0;
      }
      pipeline::Pipeline pipe(std::move(cfg));
      for (const auto& t : pick_topics(pipe.config(), topic))
        pipe.run_scale(t);
      return 0;
    }

    if (app.got_subcommand(diachronic_cmd)) {
      auto cfg = load_config(g);
      if (!dia_parties.empty()) {
        cfg.diachronic.parties.clear();
        for (const auto& p : split(dia_parties, ','))
          if (!trim(p).empty()) cfg.diachronic.parties.push_back(trim(p));
      }
      if (dia_from) cfg.diachronic.from = dia_from;
      if (dia_to) cfg.diachronic.to = dia_to;
      if (!dia_axis_file.empty())
        for (auto& t : cfg.topics) t.axes_file = dia_axis_file;
      pipeline::Pipeline pipe(std::move(cfg));
      for (const auto& t : pick_topics(pipe.config(), topic)) {
        if (!t.axes_file.empty()) pipe.run_axes(t);
        pipe.run_diachronic(t);
      }
      return 0;
    }

    if (app.got_subcommand(evaluate_cmd))
      return run_stage_command(g, topic, [](auto& p, const auto& t) {
        p.run_evaluate(t);
      });

    if (app.got_subcommand(report_cmd))
      return run_stage_command(g, topic, [](auto& p, const auto& t) {
        p.run_report(t);
      });

    if (app.got_subcommand(run_cmd)) {
      auto cfg = load_config(g);
      pipeline::Pipeline pipe(std::move(cfg));
      auto manifest = pipe.run(run_force);
      std::cout << manifest.dump(2) << "\n";
      return 0;
    }

    if (app.got_subcommand(synth_cmd)) {
      if (synth_cmd->got_subcommand(synth_gen)) {
        synth::WorldConfig wc;
        if (!synth_config.empty()) {
          try {
            wc = synth::world_config_from_json(json::parse(read_file(synth_config)));
          } catch (const json::exception& e) {
            throw ConfigError("world config " + synth_config + ": " + e.what());
          } catch (const DataError& e) {
            throw ConfigError("world config " + synth_config + ": " + e.what());
          }
        }
        if (wc.parties.empty())
          wc.parties = {{"P1", -1.0, 4}, {"P2", 0.0, 4}, {"P3", 1.0, 4}};
        if (synth_seed) wc.seed = *synth_seed;
        auto world = synth::generate_world(wc);
        synth::write_world(world, synth_out);
        std::cout << "world with " << world.legislators.size()
                  << " legislators in " << synth_out << "\n";
        return 0;
      }
      // verify
      auto world = synth::load_world(verify_world);
      auto scores = read_scores(verify_scores, verify_axis);
      auto rep = synth::recovery_report(world.legislators, world.party_order,
                                        scores);
      json out{{"max_abs_error", rep.max_abs_error},
               {"spearman_rho", rep.spearman_rho},
               {"n_subjects", rep.n_subjects}};
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    throw ConfigError("no subcommand given");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ProviderError& e) {
    std::cerr << "provider error: " << e.what() << "\n";
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
