#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "radnet/checkpoint.hpp"
#include "radnet/error.hpp"
#include "radnet/evaluation.hpp"
#include "radnet/incident.hpp"

namespace radnet::cli {

namespace fs = std::filesystem;

pipeline::PipelineConfig RunConfig::pipeline_for(std::size_t horizon_index) const {
  auto pc = pipeline;
  pc.model.seed = seed;
  pc.train.seed = seed;
  pc.model.variant = model::parse_variant(variant);
  if (!percentile_preset.empty()) {
    pc.pot.q0_percentile = incident::PercentileSchedule::preset(percentile_preset).at(horizon_index);
  }
  return pc;
}

nlohmann::json RunConfig::to_json() const {
  auto pj = pipeline.to_json();
  return {{"data", data.string()},
          {"horizons", horizons},
          {"variant", variant},
          {"out", out.string()},
          {"checkpoint", checkpoint.string()},
          {"seed", seed},
          {"percentile_preset", percentile_preset},
          {"model", pj["model"]},
          {"train", pj["train"]},
          {"pot", pj["pot"]},
          {"autoregressive", pipeline.autoregressive},
          {"fold", pipeline.fold},
          {"synth", synth.to_json()}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  c.data = j.value("data", c.data.string());
  c.horizons = j.value("horizons", c.horizons);
  c.variant = j.value("variant", c.variant);
  c.out = j.value("out", c.out.string());
  c.checkpoint = j.value("checkpoint", c.checkpoint.string());
  c.seed = j.value("seed", c.seed);
  c.percentile_preset = j.value("percentile_preset", c.percentile_preset);
  c.pipeline = pipeline::PipelineConfig::from_json(j);
  if (j.contains("synth")) c.synth = io::SynthConfig::from_json(j.at("synth"));
  return c;
}

void RunConfig::validate() const {
  if (horizons.empty()) throw ArgumentError("at least one horizon is required");
  for (auto h : horizons)
    if (h < 1) throw ArgumentError("horizons must be >= 1");
  model::parse_variant(variant);
  pipeline.train.validate();
  pipeline.pot.validate();
}

RunConfig resolve_config(const std::optional<fs::path>& file, const Flags& flags) {
  nlohmann::json merged = RunConfig{}.to_json();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw FormatError("cannot open config '" + file->string() + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("invalid config '" + file->string() + "': " + e.what());
    }
    merged.merge_patch(j);
  }
  auto c = RunConfig::from_json(merged);
  if (flags.data) c.data = *flags.data;
  if (flags.horizons) c.horizons = *flags.horizons;
  if (flags.variant) c.variant = *flags.variant;
  if (flags.out) c.out = *flags.out;
  if (flags.checkpoint) c.checkpoint = *flags.checkpoint;
  if (flags.seed) c.seed = *flags.seed;
  c.validate();
  return c;
}

namespace {

std::string suffix(std::size_t h) { return "_h" + std::to_string(h); }

fs::path checkpoint_stem(const RunConfig& c, std::size_t h) {
  return c.checkpoint_dir() / ("model" + suffix(h));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

io::Dataset load_data(const RunConfig& c) {
  if (c.data.empty()) throw ArgumentError("no dataset given (use --data or \"data\" in the config)");
  return io::load_dataset(c.data);
}

struct Loaded {
  model::RadNet model;
  training::Normalizer normalizer;
  training::FoldSplit split;
  std::size_t fold = 0;
  pipeline::PipelineConfig config;
};

Loaded load_model(const RunConfig& c, const io::Dataset& ds, std::size_t h) {
  const auto stem = checkpoint_stem(c, h);
  const auto manifest_path = fs::path(stem.string() + ".json");
  if (!fs::exists(manifest_path)) {
    throw FormatError("missing checkpoint: expected '" + manifest_path.string() +
                      "' (run `radnet train` first)");
  }
  const auto manifest = ad::read_manifest(stem);
  const auto& hp = manifest.hyperparameters;
  auto mcfg = model::RadNetConfig::from_json(hp.at("model"));
  if (mcfg.nodes != ds.series.nodes() || mcfg.features != ds.series.features()) {
    throw DimensionError("checkpoint '" + stem.string() + "' was trained on N=" +
                         std::to_string(mcfg.nodes) + ", D=" + std::to_string(mcfg.features));
  }
  auto pc = pipeline::PipelineConfig::from_json(hp.at("pipeline"));
  Loaded l{model::RadNet(mcfg, ds.graph), training::Normalizer::from_json(hp.at("normalizer")), {},
           hp.at("fold").get<std::size_t>(), pc};
  ad::load_checkpoint(stem, l.model.parameters());
  const auto splits =
      training::split_folds(ds.series.timesteps(), pc.train.folds, mcfg.window, h);
  l.split = splits.at(l.fold);
  return l;
}

int cmd_synth(const RunConfig& c) {
  auto sc = c.synth;
  sc.seed = c.seed;
  const auto result = io::synth_traffic(sc);
  io::save_dataset(c.out, "synthetic", result.series, result.graph);
  io::write_truth_csv(c.out / "incidents.csv", result);
  spdlog::info("wrote {} timesteps × {} links to {}", result.series.timesteps(),
               result.series.nodes(), c.out.string());
  return 0;
}

int cmd_stats(const RunConfig& c, bool json) {
  const auto ds = load_data(c);
  const auto s = io::stats(ds.series, ds.graph, ds.meta.name);
  std::cout << (json ? s.to_json().dump(2) + "\n" : s.to_text());
  return 0;
}

int cmd_train(const RunConfig& c) {
  const auto ds = load_data(c);
  fs::create_directories(c.checkpoint_dir());
  for (std::size_t i = 0; i < c.horizons.size(); ++i) {
    const std::size_t h = c.horizons[i];
    const auto pc = c.pipeline_for(i);
    const auto mcfg = pipeline::model_config_for(pc, ds.series, h);
    const auto tcfg = pipeline::train_config_for(pc, h);
    const std::size_t fold = pipeline::resolve_fold(pc.fold, tcfg.folds);
    const auto splits = training::split_folds(ds.series.timesteps(), tcfg.folds, mcfg.window, h);
    model::RadNet net(mcfg, ds.graph);
    spdlog::info("training {} (H={}, fold {}, {} parameters)", c.variant, h, fold,
                 model::count_parameters(net));
    const auto result = training::train(net, ds.series, splits[fold], tcfg);
    nlohmann::json hp = {{"pipeline", pc.to_json()},
                         {"model", mcfg.to_json()},
                         {"normalizer", result.normalizer.to_json()},
                         {"horizon", h},
                         {"fold", fold},
                         {"dataset", ds.meta.name}};
    ad::save_checkpoint(checkpoint_stem(c, h), net.parameters(), c.seed, hp);
    training::write_loss_curve(c.checkpoint_dir() / ("loss" + suffix(h) + ".csv"), result.curve);
    write_json(c.checkpoint_dir() / ("train" + suffix(h) + ".json"),
               {{"best_epoch", result.best_epoch},
                {"best_validation_loss", result.best_validation_loss},
                {"best_validation_mse", result.best_validation_mse},
                {"epochs", result.curve.size()},
                {"stopped_early", result.stopped_early}});
    spdlog::info("H={}: best epoch {}, validation loss {:.6f}", h, result.best_epoch,
                 result.best_validation_loss);
  }
  return 0;
}

int cmd_forecast(const RunConfig& c) {
  const auto ds = load_data(c);
  fs::create_directories(c.out);
  for (std::size_t h : c.horizons) {
    const auto l = load_model(c, ds, h);
    const auto ends = pipeline::validation_ends(l.split, l.model.config().window, h);
    const auto fc = pipeline::forecast(l.model, l.normalizer, ds.series, ends, h);
    std::ofstream out(c.out / ("predictions" + suffix(h) + ".csv"), std::ios::trunc);
    out.precision(17);
    out << "timestep,link_id,feature,prediction,truth\n";
    const std::size_t n = ds.series.nodes();
    const std::size_t d = ds.series.features();
    for (std::size_t i = 0; i < fc.targets.size(); ++i) {
      const auto truth = ds.series.frame(fc.targets[i]);
      for (std::size_t k = 0; k < n * d; ++k) {
        out << fc.targets[i] << ',' << k / d << ',' << ds.series.feature_names()[k % d] << ','
            << fc.values[i * n * d + k] << ',' << truth[k] << '\n';
      }
    }
  }
  return 0;
}

pipeline::Detection detect_for(const RunConfig& c, const io::Dataset& ds, std::size_t h,
                               std::size_t horizon_index, pipeline::Forecasts* forecasts) {
  const auto l = load_model(c, ds, h);
  const auto ends = pipeline::validation_ends(l.split, l.model.config().window, h);
  auto fc = pipeline::forecast(l.model, l.normalizer, ds.series, ends, h);
  auto det = pipeline::detect(ds.series, l.split, fc, c.pipeline_for(horizon_index).pot);
  if (forecasts != nullptr) *forecasts = std::move(fc);
  return det;
}

int cmd_detect(const RunConfig& c) {
  const auto ds = load_data(c);
  fs::create_directories(c.out);
  for (std::size_t i = 0; i < c.horizons.size(); ++i) {
    const std::size_t h = c.horizons[i];
    const auto det = detect_for(c, ds, h, i, nullptr);
    incident::write_labels_csv(c.out / ("labels_truth" + suffix(h) + ".csv"), det.truth);
    incident::write_labels_csv(c.out / ("labels_pred" + suffix(h) + ".csv"), det.predicted);
    nlohmann::json links = nlohmann::json::array();
    for (const auto& s : det.detector.links) links.push_back(s.to_json());
    write_json(c.out / ("thresholds" + suffix(h) + ".json"),
               {{"network", det.detector.network.to_json()},
                {"links", links},
                {"pot", det.detector.config.to_json()},
                {"baseline_fallbacks", det.baseline.fallback_count()}});
  }
  return 0;
}

int cmd_evaluate(const RunConfig& c, const std::optional<fs::path>& pred,
                 const std::optional<fs::path>& truth) {
  std::vector<eval::EvalReport> reports;
  if (pred || truth) {
    if (!pred || !truth) throw ArgumentError("--pred and --truth must be given together");
    const std::size_t h = c.horizons.front();
    reports.push_back(eval::evaluate(incident::read_labels_csv(*pred, h),
                                     incident::read_labels_csv(*truth, h)));
  } else {
    for (std::size_t h : c.horizons) {
      const auto p = c.out / ("labels_pred" + suffix(h) + ".csv");
      const auto t = c.out / ("labels_truth" + suffix(h) + ".csv");
      if (!fs::exists(p) || !fs::exists(t)) {
        throw FormatError("missing labels for H=" + std::to_string(h) + ": expected '" +
                          p.string() + "' and '" + t.string() + "' (run `radnet detect` first)");
      }
      reports.push_back(eval::evaluate(incident::read_labels_csv(p, h), incident::read_labels_csv(t, h)));
    }
  }
  fs::create_directories(c.out);
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(r.to_json());
  write_json(c.out / "report.json", arr);
  const auto table = eval::format_table(reports);
  write_text(c.out / "report.txt", table);
  std::cout << table;
  return 0;
}

int cmd_ablate(const RunConfig& c) {
  const auto ds = load_data(c);
  fs::create_directories(c.out);
  const std::size_t h = c.horizons.front();
  std::ostringstream csv;
  csv.precision(10);
  csv << "variant,validation_mse,f1,hitrate100,ndcg100\n";
  std::ostringstream txt;
  txt << "variant     val_mse        F1     H@100     N@100\n";
  nlohmann::json rows = nlohmann::json::array();
  for (const char* v : {"full", "no_skip", "no_st", "no_ts"}) {
    auto rc = c;
    rc.variant = v;
    const auto pc = rc.pipeline_for(0);
    const std::size_t fold = pipeline::resolve_fold(pc.fold, pc.train.folds);
    const auto run = pipeline::run_fold(ds.series, ds.graph, pc, h, fold);
    const auto rep = eval::evaluate(run.detection.predicted, run.detection.truth);
    csv << v << ',' << run.train.best_validation_mse << ',' << rep.detection.f1 << ','
        << rep.hitrate.at(100) << ',' << rep.ndcg.at(100) << '\n';
    char line[128];
    std::snprintf(line, sizeof line, "%-9s %9.6f %9.3f %9.3f %9.3f\n", v,
                  run.train.best_validation_mse, rep.detection.f1, rep.hitrate.at(100),
                  rep.ndcg.at(100));
    txt << line;
    rows.push_back({{"variant", v},
                    {"validation_mse", run.train.best_validation_mse},
                    {"report", rep.to_json()}});
    spdlog::info("{}: validation mse {:.6f}, F1 {:.3f}", v, run.train.best_validation_mse,
                 rep.detection.f1);
  }
  write_text(c.out / "ablation.csv", csv.str());
  write_text(c.out / "ablation.txt", txt.str());
  write_json(c.out / "ablation.json", rows);
  std::cout << txt.str();
  return 0;
}

int cmd_report(const RunConfig& c) {
  const auto ds = load_data(c);
  fs::create_directories(c.out);
  for (std::size_t i = 0; i < c.horizons.size(); ++i) {
    const std::size_t h = c.horizons[i];
    pipeline::Forecasts fc;
    const auto det = detect_for(c, ds, h, i, &fc);
    std::ofstream out(c.out / ("per_link" + suffix(h) + ".csv"), std::ios::trunc);
    out.precision(10);
    out << "timestep,link_id,feature,baseline,truth,prediction,score,threshold,label,true_label\n";
    const std::size_t n = ds.series.nodes();
    const std::size_t d = ds.series.features();
    for (std::size_t k = 0; k < fc.targets.size(); ++k) {
      const std::size_t t = fc.targets[k];
      const auto base = det.baseline.at(ds.series, t).mean;
      const auto truth = ds.series.frame(t);
      for (std::size_t link = 0; link < n; ++link) {
        const std::size_t li = k * n + link;
        for (std::size_t f = 0; f < d; ++f) {
          const std::size_t j = link * d + f;
          out << t << ',' << link << ',' << ds.series.feature_names()[f] << ',' << base[j] << ','
              << truth[j] << ',' << fc.values[k * n * d + j] << ','
              << det.predicted.link_scores[li] << ',' << det.predicted.link_thresholds[li] << ','
              << int(det.predicted.link_labels[li]) << ',' << int(det.truth.link_labels[li])
              << '\n';
        }
      }
    }
  }
  return 0;
}

void configure_logging() {
  auto logger = spdlog::stderr_logger_mt("radnet");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("RADNET_LOG")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off") {
      spdlog::warn("RADNET_LOG='{}' is not a log level; keeping 'info'", env);
    } else {
      spdlog::set_level(level);
    }
  }
}

}  // namespace

int run(int argc, char** argv) {
  if (!spdlog::get("radnet")) configure_logging();

  CLI::App app{"RadNet incident prediction"};
  app.require_subcommand(1);
  std::optional<fs::path> config_file;
  Flags flags;
  app.add_option("--config", config_file, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "Random seed");
  app.add_option("--horizon", flags.horizons, "Forecast horizon(s) in intervals")->delimiter(',');
  app.add_option("--variant", flags.variant, "full, no_skip, no_st or no_ts");
  app.add_option("--out", flags.out, "Output directory");
  app.add_option("--data", flags.data, "Dataset directory");
  app.add_option("--checkpoint", flags.checkpoint, "Checkpoint directory (default: --out)");
  app.fallthrough();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::optional<std::size_t> nodes, days, incidents, duration, features;
  std::optional<std::int64_t> delta;
  std::optional<double> depth, noise;
  synth->add_option("--nodes", nodes);
  synth->add_option("--days", days);
  synth->add_option("--delta", delta, "Interval duration in seconds");
  synth->add_option("--features", features);
  synth->add_option("--incidents", incidents);
  synth->add_option("--depth", depth);
  synth->add_option("--duration", duration);
  synth->add_option("--noise", noise);

  auto* stats = app.add_subcommand("stats", "Dataset summary");
  bool stats_json = false;
  stats->add_flag("--json", stats_json, "Emit JSON instead of text");
  auto* train = app.add_subcommand("train", "Train and checkpoint a model per horizon");
  auto* forecast = app.add_subcommand("forecast", "Forecast the validation block");
  auto* detect = app.add_subcommand("detect", "Write truth and predicted incident labels");
  auto* evaluate = app.add_subcommand("evaluate", "Score predicted labels against truth");
  std::optional<fs::path> pred_path, truth_path;
  evaluate->add_option("--pred", pred_path, "Predicted labels CSV")->check(CLI::ExistingFile);
  evaluate->add_option("--truth", truth_path, "Truth labels CSV")->check(CLI::ExistingFile);
  auto* ablate = app.add_subcommand("ablate", "Compare model variants");
  auto* report = app.add_subcommand("report", "Per-link series for plotting");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    auto c = resolve_config(config_file, flags);
    if (nodes) c.synth.nodes = *nodes;
    if (days) c.synth.days = *days;
    if (delta) c.synth.delta_seconds = *delta;
    if (features) c.synth.features = *features;
    if (incidents) c.synth.incidents = *incidents;
    if (depth) c.synth.depth = *depth;
    if (duration) c.synth.duration = *duration;
    if (noise) c.synth.noise = *noise;

    if (*synth) return cmd_synth(c);
    if (*stats) return cmd_stats(c, stats_json);
    if (*train) return cmd_train(c);
    if (*forecast) return cmd_forecast(c);
    if (*detect) return cmd_detect(c);
    if (*evaluate) return cmd_evaluate(c, pred_path, truth_path);
    if (*ablate) return cmd_ablate(c);
    if (*report) return cmd_report(c);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 1;
}

}  // namespace radnet::cli
