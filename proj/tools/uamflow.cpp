// uamflow command-line front end.
//
// Every subcommand builds its outputs in memory and writes them, plus a run
// manifest, only after the whole command has succeeded.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "uamflow/evalkit/evaluate.hpp"
#include "uamflow/predictor.hpp"
#include "uamflow/rng.hpp"
#include "uamflow/sim/io.hpp"
#include "uamflow/sim/report.hpp"
#include "uamflow/train.hpp"
#include "uamflow/trajdata.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace uamflow;
using geo::GeoPoint;
using trajdata::Trajectory;
using trajdata::WindowPair;
using trajdata::WindowSpec;
using trajdata::NormStats;
using namespace uamflow::train;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kMissingFile = 3,
  kSchema = 4,
  kMalformed = 5,
  kNumeric = 6,
  kIo = 7,
};

struct MissingFile : Error {
  explicit MissingFile(const std::string& path) : Error("missing file: '" + path + "'") {}
};

struct IoError : Error {
  using Error::Error;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw MissingFile(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(what + " is not valid JSON: " + e.what());
  }
}

// ISO-8601 UTC; SOURCE_DATE_EPOCH pins the clock for reproducible manifests.
std::string timestamp() {
  std::time_t t;
  if (const char* e = std::getenv("SOURCE_DATE_EPOCH"); e && *e) {
    t = static_cast<std::time_t>(std::strtoll(e, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Collects artifacts of one run and writes them together with the manifest.
class Run {
 public:
  Run(std::string command, std::vector<std::string> argv) : command_(std::move(command)), argv_(std::move(argv)) {
    started_ = timestamp();
  }

  void set_config(json cfg) { config_ = std::move(cfg); }
  void set_options(json opts) { options_ = std::move(opts); }
  void seed(const std::string& name, std::uint64_t v) { seeds_[name] = v; }

  void input(const std::string& path) {
    inputs_.push_back({{"path", path}, {"fnv1a64", hex64(fnv1a64(read_file(path)))}});
  }

  void artifact(const std::string& name, std::string content) {
    if (files_.count(name)) throw InvariantViolation("artifact '" + name + "' written twice");
    files_[name] = std::move(content);
  }

  std::string text(const std::string& name) const { return files_.at(name); }

  /// Writes every artifact, then the manifest. Files go through a temporary
  /// name so a failed write never leaves a truncated artifact behind.
  void commit(const fs::path& out) {
    json artifacts = json::array();
    for (const auto& [name, content] : files_) {
      artifacts.push_back({{"path", name}, {"bytes", content.size()}, {"fnv1a64", hex64(fnv1a64(content))}});
    }
    const std::string cfg = config_.dump();
    json m{{"format", "uamflow-manifest"},
           {"version", 1},
           {"tool", std::string("uamflow ") + kVersion},
           {"command", command_},
           {"argv", argv_},
           {"config", config_},
           {"config_hash", hex64(fnv1a64(cfg))},
           {"options", options_},
           {"seeds", seeds_},
           {"inputs", inputs_},
           {"artifacts", artifacts},
           {"started_at", started_},
           {"finished_at", timestamp()}};
    files_["manifest.json"] = m.dump(2) + "\n";

    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory '" + out.string() + "': " + ec.message());
    std::vector<fs::path> staged;
    for (const auto& [name, content] : files_) {
      const fs::path tmp = out / (name + ".partial");
      std::ofstream f(tmp, std::ios::binary);
      f << content;
      f.close();
      if (!f) {
        for (const auto& p : staged) fs::remove(p, ec);
        fs::remove(tmp, ec);
        throw IoError("cannot write '" + (out / name).string() + "'");
      }
      staged.push_back(tmp);
    }
    for (const auto& [name, content] : files_) {
      fs::rename(out / (name + ".partial"), out / name, ec);
      if (ec) throw IoError("cannot finalize '" + (out / name).string() + "': " + ec.message());
    }
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::string started_;
  json config_ = json::object();
  json options_ = json::object();
  json seeds_ = json::object();
  json inputs_ = json::array();
  std::map<std::string, std::string> files_;
};

/// Reads a config file. A run manifest is accepted in place of a config:
/// its recorded config is used, which reproduces that run.
json load_config(const std::string& path, const std::string& command) {
  json j = parse_json(read_file(path), "config '" + path + "'");
  if (j.is_object() && j.value("format", std::string()) == "uamflow-manifest") {
    if (j.value("command", std::string()) != command) {
      throw ConfigError("manifest '" + path + "' records command '" + j.value("command", std::string()) +
                        "', not '" + command + "'");
    }
    return j.at("config");
  }
  if (!j.is_object()) throw ConfigError("config '" + path + "' must be a JSON object");
  return j;
}

// ---------------------------------------------------------------------------
// Datasets on disk: trajectories.csv, split.json, stats.json, dataset.json

struct DatasetSpec {
  GeoPoint origin{126.7958, 37.5583, 0.0};
  WindowSpec window;
  double ground_altitude_m = trajdata::kGroundAltitude;
  int window_stride = 1;
  std::uint64_t seed = 0;

  json to_json() const {
    return {{"origin", trajdata::to_json(origin)},
            {"history", window.history},
            {"future", window.future},
            {"ground_altitude_m", ground_altitude_m},
            {"window_stride", window_stride},
            {"seed", seed}};
  }

  static DatasetSpec from_json(const json& j) {
    sim::detail::allow_keys(j, {"input", "origin", "history", "future", "ground_altitude_m", "window_stride", "seed"},
                            "dataset config");
    DatasetSpec d;
    try {
      if (j.contains("origin")) d.origin = trajdata::geo_from_json(j.at("origin"));
      d.window.history = j.value("history", d.window.history);
      d.window.future = j.value("future", d.window.future);
      d.ground_altitude_m = j.value("ground_altitude_m", d.ground_altitude_m);
      d.window_stride = j.value("window_stride", d.window_stride);
      d.seed = j.value("seed", d.seed);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("dataset config: ") + e.what());
    }
    geo::check_origin(d.origin);
    if (d.window.history < 1 || d.window.future < 1 || d.window_stride < 1) {
      throw ConfigError("dataset config: history, future and window_stride must be positive");
    }
    return d;
  }
};

std::vector<WindowPair> windows(std::span<const Trajectory> trajs, const DatasetSpec& d) {
  auto all = trajdata::altitude_filter(trajdata::make_windows(trajs, d.window), d.ground_altitude_m);
  std::vector<WindowPair> out;
  for (std::size_t i = 0; i < all.size(); i += static_cast<std::size_t>(d.window_stride)) out.push_back(all[i]);
  return out;
}

struct Dataset {
  DatasetSpec spec;
  trajdata::DatasetSplit split;
  NormStats stats;
  std::vector<WindowPair> train, val, test;  // point into `split`
};

std::unique_ptr<Dataset> load_dataset(const fs::path& dir, Run& run) {
  auto ds = std::make_unique<Dataset>();
  for (const char* f : {"dataset.json", "trajectories.csv", "split.json", "stats.json"}) {
    run.input((dir / f).string());
  }
  const json meta = parse_json(read_file((dir / "dataset.json").string()), "dataset.json");
  if (meta.value("format", std::string()) != "uamflow-dataset") throw MalformedInput("dataset.json: not a dataset");
  ds->spec = DatasetSpec::from_json(meta.at("spec"));
  std::istringstream csv(read_file((dir / "trajectories.csv").string()));
  const auto pool = trajdata::read_csv(csv);
  try {
    ds->split = trajdata::split_from_json(parse_json(read_file((dir / "split.json").string()), "split.json"), pool);
    ds->stats = trajdata::stats_from_json(parse_json(read_file((dir / "stats.json").string()), "stats.json"));
  } catch (const json::exception& e) {
    throw MalformedInput(std::string("dataset schema violation: ") + e.what());
  }
  ds->train = windows(ds->split.train, ds->spec);
  ds->val = windows(ds->split.val, ds->spec);
  ds->test = windows(ds->split.test, ds->spec);
  return ds;
}

// ---------------------------------------------------------------------------
// Subcommands

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void cmd_ingest(const Common& c, const std::string& input_flag, Run& run) {
  json cfg = c.config.empty() ? json::object() : load_config(c.config, "ingest");
  DatasetSpec spec = DatasetSpec::from_json(cfg);
  if (c.seed) spec.seed = *c.seed;
  std::string input = input_flag.empty() ? cfg.value("input", std::string()) : input_flag;
  if (input.empty()) throw ConfigError("ingest: no input CSV (use --input or the 'input' config key)");

  json eff = spec.to_json();
  eff["input"] = input;
  run.set_config(eff);
  run.seed("split", spec.seed);
  run.input(input);

  std::istringstream raw_csv(read_file(input));
  auto raw = trajdata::read_csv(raw_csv);
  std::vector<Trajectory> kept;
  int dropped = 0;
  for (const auto& t : raw) {
    if (t.points.size() < 2) {
      ++dropped;
      continue;
    }
    kept.push_back(trajdata::resample_1hz(t));
  }
  auto split = trajdata::split_dataset(kept, spec.seed);
  const auto train = windows(split.train, spec);
  const auto val = windows(split.val, spec);
  const auto test = windows(split.test, spec);
  if (train.empty() || val.empty() || test.empty()) {
    throw MalformedInput("ingest: a split has no window pairs (tracks too short for history + future?)");
  }
  const NormStats stats = trajdata::compute_stats(train, spec.origin);

  std::ostringstream traj_csv;
  trajdata::write_csv(traj_csv, kept);
  run.artifact("trajectories.csv", traj_csv.str());
  run.artifact("split.json", trajdata::split_to_json(split, spec.seed).dump(2) + "\n");
  run.artifact("stats.json", trajdata::to_json(stats).dump(2) + "\n");
  json meta{{"format", "uamflow-dataset"},
            {"spec", spec.to_json()},
            {"trajectories", kept.size()},
            {"dropped_short", dropped},
            {"pairs", {{"train", train.size()}, {"val", val.size()}, {"test", test.size()}}}};
  run.artifact("dataset.json", meta.dump(2) + "\n");
  std::cerr << "ingest: " << kept.size() << " trajectories, " << train.size() << "/" << val.size() << "/"
            << test.size() << " train/val/test pairs\n";
}

void cmd_train(const Common& c, const std::string& data, bool untrained, Run& run) {
  json cfg = c.config.empty() ? json::object() : load_config(c.config, "train");
  sim::detail::allow_keys(cfg, {"model", "train"}, "train config");
  auto ds = load_dataset(data, run);
  ModelConfig mc;
  TrainConfig tc;
  try {
    mc = model_config_from_json(cfg.value("model", json::object()));
    const json tj = cfg.value("train", json::object());
    tc.objective = objective_for(mc.kind);
    tc = train_config_from_json(tj, tc);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  const json mj = cfg.value("model", json::object());
  if ((mj.contains("history") && mc.window.history != ds->spec.window.history) ||
      (mj.contains("future") && mc.window.future != ds->spec.window.future)) {
    throw ConfigError("train config: model window does not match the dataset window");
  }
  mc.window = ds->spec.window;
  if (c.seed) tc.seed = *c.seed;
  tc.validate();
  run.set_config({{"model", to_json(mc)}, {"train", to_json(tc)}});
  run.set_options({{"untrained", untrained}});
  run.seed("train", tc.seed);

  const PreparedSet tr = prepare(ds->train, mc.input, ds->stats);
  const PreparedSet va = prepare(ds->val, mc.input, ds->stats);
  Model model(mc, ds->stats, derive_seed(tc.seed, fnv1a64("init")));
  Checkpoint ck;
  if (untrained) {
    const double v = evaluate_loss(model, va, tc.batch_size);
    ck = Checkpoint{model, tc, v, 0, {v}, {0.0}};
  } else {
    ck = fit(model, tr, va, tc);
  }
  run.artifact("checkpoint.json", to_json(ck).dump() + "\n");
  std::ostringstream hist;
  csv::write_row(hist, {"epoch", "train_loss", "val_score"});
  for (std::size_t e = 0; e < ck.val_history.size(); ++e) {
    const std::string tl = e > 0 && e < ck.train_history.size() ? csv::format_double(ck.train_history[e]) : "";
    csv::write_row(hist, {std::to_string(e), tl, csv::format_double(ck.val_history[e])});
  }
  run.artifact("history.csv", hist.str());
  std::cerr << "train: " << to_string(mc.kind) << " best epoch " << ck.best_epoch << ", val "
            << csv::format_double(ck.val_score) << "\n";
}

void cmd_eval(const Common& c, const std::string& data, const std::vector<std::string>& checkpoints, Run& run) {
  json cfg = c.config.empty() ? json::object() : load_config(c.config, "eval");
  sim::detail::allow_keys(cfg, {"samples", "split", "seed"}, "eval config");
  int k = evalkit::kDefaultSamples;
  std::string split = "test";
  std::uint64_t seed = 0;
  try {
    k = cfg.value("samples", k);
    split = cfg.value("split", split);
    seed = cfg.value("seed", seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("eval config: ") + e.what());
  }
  if (c.seed) seed = *c.seed;
  if (k < 1) throw ConfigError("eval config: samples must be positive");
  if (split != "train" && split != "val" && split != "test") throw ConfigError("eval config: unknown split '" + split + "'");
  run.set_config({{"samples", k}, {"split", split}, {"seed", seed}});
  run.set_options({{"checkpoints", checkpoints}});
  run.seed("sampling", seed);

  auto ds = load_dataset(data, run);
  const auto& pairs = split == "train" ? ds->train : split == "val" ? ds->val : ds->test;
  std::vector<evalkit::MetricRow> rows;
  for (const auto& path : checkpoints) {
    run.input(path);
    const Checkpoint ck = checkpoint_from_json(parse_json(read_file(path), "checkpoint '" + path + "'"));
    const auto& w = ck.model.config().window;
    if (w.history != ds->spec.window.history || w.future != ds->spec.window.future) {
      throw ConfigError("checkpoint '" + path + "' window does not match the dataset");
    }
    const PreparedSet set = prepare(pairs, ck.model.config().input, ck.model.stats());
    rows.push_back(evalkit::evaluate(ck.model, set, k, seed));
  }
  std::ostringstream out;
  evalkit::write_metrics_csv(out, rows);
  run.artifact("metrics.csv", out.str());
}

std::string result_name(const std::string& lane, double alt_ft, sim::Mode m) {
  return "result_" + lane + "_" + csv::format_double(alt_ft) + "ft_" + sim::to_string(m) + ".json";
}

void cmd_simulate(const Common& c, const std::string& mode, const std::string& pred_kind,
                  const std::string& checkpoint, Run& run) {
  if (c.config.empty()) throw ConfigError("simulate: --config <scenario.json> is required");
  sim::Scenario sc = sim::scenario_from_json(load_config(c.config, "simulate"));
  if (c.seed) sc.seed = *c.seed;
  std::vector<sim::Mode> modes;
  if (mode == "both") {
    modes = {sim::Mode::baseline, sim::Mode::adjusted};
  } else {
    modes = {sim::parse_mode(mode)};
  }
  const bool adjusted = std::count(modes.begin(), modes.end(), sim::Mode::adjusted) > 0;
  if (pred_kind != "flow" && pred_kind != "truth") throw ConfigError("simulate: --predictor must be flow or truth");
  run.set_config(sim::to_json(sc));
  run.set_options({{"mode", mode}, {"predictor", pred_kind}, {"checkpoint", checkpoint}});
  run.seed("scenario", sc.seed);
  if (sc.source == sim::TrafficSource::replay) run.input(sc.replay_csv);

  std::unique_ptr<predictor::Predictor> pred;
  if (adjusted) {
    if (pred_kind == "flow") {
      if (checkpoint.empty()) throw ConfigError("simulate: adjusted mode with the flow predictor needs --checkpoint");
      run.input(checkpoint);
      Checkpoint ck = checkpoint_from_json(parse_json(read_file(checkpoint), "checkpoint '" + checkpoint + "'"));
      pred = std::make_unique<predictor::FlowPredictor>(std::move(ck.model), sc.seed, sc.samples, sc.sanity);
    } else {
      pred = std::make_unique<predictor::TruthInSamplesPredictor>(sc.origin, controller::kHorizon, sc.samples, 0.0,
                                                                  sc.seed);
    }
  }
  const auto traffic = sim::build_traffic(sc);
  std::ostringstream summary;
  csv::write_row(summary, {"lane", "altitude_ft", "mode", "spawned", "completed", "active", "los_events",
                           "median_delay", "min_separation_m"});
  for (const auto& lane : sc.lanes) {
    for (double alt : lane.altitudes_ft) {
      for (sim::Mode m : modes) {
        const sim::SimResult r = sim::run(sc, traffic, lane, alt, m, pred.get());
        auto seps = sim::min_separations(r);
        const double lo = seps.empty() ? INFINITY : *std::min_element(seps.begin(), seps.end());
        const auto d = sim::summarize_delays(r);
        csv::write_row(summary, {lane.id, csv::format_double(alt), sim::to_string(m), std::to_string(r.spawned),
                                 std::to_string(r.completed), std::to_string(r.active), std::to_string(r.los_events()),
                                 d.flights ? csv::format_double(d.median) : "",
                                 std::isfinite(lo) ? csv::format_double(lo) : "inf"});
        run.artifact(result_name(lane.id, alt, m), sim::to_json(r).dump() + "\n");
        std::cerr << "simulate: " << lane.id << " " << alt << " ft " << sim::to_string(m) << ": " << r.spawned
                  << " flights, " << r.los_events() << " LoS events\n";
      }
    }
  }
  run.artifact("summary.csv", summary.str());
}

sim::ReportConfig report_config_from_json(const json& j) {
  sim::detail::allow_keys(j,
                          {"hist_bin_m", "hist_max_m", "bearing_bin_deg", "range_bin_m", "range_max_m", "band_lo",
                           "band_hi"},
                          "report config");
  sim::ReportConfig r;
  try {
    r.hist_bin_m = j.value("hist_bin_m", r.hist_bin_m);
    r.hist_max_m = j.value("hist_max_m", r.hist_max_m);
    r.bearing_bin_deg = j.value("bearing_bin_deg", r.bearing_bin_deg);
    r.range_bin_m = j.value("range_bin_m", r.range_bin_m);
    r.range_max_m = j.value("range_max_m", r.range_max_m);
    r.band_lo = j.value("band_lo", r.band_lo);
    r.band_hi = j.value("band_hi", r.band_hi);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("report config: ") + e.what());
  }
  r.validate();
  return r;
}

void cmd_report(const Common& c, const std::vector<std::string>& results, Run& run) {
  const sim::ReportConfig rc = report_config_from_json(c.config.empty() ? json::object() : load_config(c.config, "report"));
  run.set_config({{"hist_bin_m", rc.hist_bin_m},
                  {"hist_max_m", rc.hist_max_m},
                  {"bearing_bin_deg", rc.bearing_bin_deg},
                  {"range_bin_m", rc.range_bin_m},
                  {"range_max_m", rc.range_max_m},
                  {"band_lo", rc.band_lo},
                  {"band_hi", rc.band_hi}});
  std::vector<std::string> files;
  for (const auto& p : results) {
    if (fs::is_directory(p)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(p)) {
        const std::string n = e.path().filename().string();
        if (e.is_regular_file() && n.rfind("result_", 0) == 0 && e.path().extension() == ".json") {
          found.push_back(e.path().string());
        }
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(p);
    }
  }
  if (files.empty()) throw ConfigError("report: no result files given");
  std::vector<sim::SimResult> rs;
  for (const auto& f : files) {
    run.input(f);
    rs.push_back(sim::result_from_json(parse_json(read_file(f), "result '" + f + "'")));
  }
  const sim::ReportBundle b = sim::build_report(rs, rc);
  run.artifact("cdf.csv", b.cdf);
  run.artifact("histogram.csv", b.histogram);
  run.artifact("delays.csv", b.delays);
  run.artifact("cpa_polar.csv", b.cpa_polar);

  // Pairwise CDF comparison of adjusted against baseline runs.
  std::map<std::pair<std::string, double>, std::map<sim::Mode, std::vector<double>>> groups;
  for (const auto& r : rs) {
    auto& v = groups[{r.lane, r.altitude_ft}][r.mode];
    auto s = sim::min_separations(r);
    v.insert(v.end(), s.begin(), s.end());
  }
  std::ostringstream dom;
  csv::write_row(dom, {"lane", "altitude_ft", "baseline_flights", "adjusted_flights", "adjusted_dominates"});
  for (const auto& [key, by_mode] : groups) {
    auto b_it = by_mode.find(sim::Mode::baseline), a_it = by_mode.find(sim::Mode::adjusted);
    if (b_it == by_mode.end() || a_it == by_mode.end() || b_it->second.empty() || a_it->second.empty()) continue;
    csv::write_row(dom, {key.first, csv::format_double(key.second), std::to_string(b_it->second.size()),
                         std::to_string(a_it->second.size()),
                         sim::dominates(a_it->second, b_it->second) ? "true" : "false"});
  }
  run.artifact("dominance.csv", dom.str());
  if (b.median_outside_band > 0) {
    std::cerr << "report: " << b.median_outside_band << " adjusted group(s) have a median delay outside ["
              << rc.band_lo << ", " << rc.band_hi << "]\n";
  }
}

void cmd_synth(const Common& c, int duration, Run& run) {
  sim::Scenario sc;
  sc.lanes.push_back(sim::default_lane(sc.origin));
  if (!c.config.empty()) sc = sim::scenario_from_json(load_config(c.config, "synth"));
  if (c.seed) sc.seed = *c.seed;
  if (duration > 0) sc.duration_s = duration;
  run.set_config(sim::to_json(sc));
  run.set_options({{"duration_s", sc.duration_s}});
  run.seed("scenario", sc.seed);
  const auto traffic = sim::generate_traffic(sc.generator, sc.origin, sc.duration_s, sc.seed);
  std::ostringstream out;
  trajdata::write_csv(out, traffic);
  run.artifact("traffic.csv", out.str());
  std::cerr << "synth: " << traffic.size() << " flights\n";
}

int report_error(const char* kind, const std::exception& e, int code) {
  std::cerr << "uamflow: error (" << kind << "): " << e.what() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory flows and UAM speed-adjustment simulation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub, bool out_required = true) {
    sub->add_option("--config", common.config, "JSON config (or a run manifest to reproduce)");
    sub->add_option("--seed", common.seed, "master seed (overrides the config)");
    auto* o = sub->add_option("--out", common.out, "output directory");
    if (out_required) o->required();
  };

  std::string input, data, mode = "both", pred_kind = "flow", checkpoint;
  std::vector<std::string> checkpoints, results;
  bool untrained = false;
  int duration = 0;

  auto* ingest = app.add_subcommand("ingest", "trajectory CSV -> windowed dataset");
  add_common(ingest);
  ingest->add_option("--input", input, "trajectory CSV (id,kind,t,lon,lat,alt_m)");

  auto* train = app.add_subcommand("train", "dataset + config -> checkpoint");
  add_common(train);
  train->add_option("--data", data, "dataset directory from ingest")->required();
  train->add_flag("--untrained", untrained, "write the initialized model without training");

  auto* eval = app.add_subcommand("eval", "checkpoints -> minADE/minFDE table");
  add_common(eval);
  eval->add_option("--data", data, "dataset directory from ingest")->required();
  eval->add_option("--checkpoint", checkpoints, "checkpoint file (repeatable)")->required();

  auto* simulate = app.add_subcommand("simulate", "scenario -> per-lane simulation results");
  add_common(simulate);
  simulate->add_option("--mode", mode, "baseline, adjusted or both")
      ->check(CLI::IsMember({"baseline", "adjusted", "both"}));
  simulate->add_option("--predictor", pred_kind, "flow (needs --checkpoint) or truth")
      ->check(CLI::IsMember({"flow", "truth"}));
  simulate->add_option("--checkpoint", checkpoint, "flow checkpoint for adjusted mode");

  auto* report = app.add_subcommand("report", "simulation results -> CSV bundle");
  add_common(report);
  report->add_option("--results", results, "result files or directories")->required();

  auto* synth = app.add_subcommand("synth", "scenario traffic generator -> trajectory CSV");
  add_common(synth);
  synth->add_option("--duration", duration, "seconds of traffic (overrides the scenario)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "uamflow: error (usage): " << e.what() << "\n";
    return kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  std::vector<std::string> args(argv + 1, argv + argc);
  Run run(sub->get_name(), args);
  try {
    if (sub == ingest) cmd_ingest(common, input, run);
    if (sub == train) cmd_train(common, data, untrained, run);
    if (sub == eval) cmd_eval(common, data, checkpoints, run);
    if (sub == simulate) cmd_simulate(common, mode, pred_kind, checkpoint, run);
    if (sub == report) cmd_report(common, results, run);
    if (sub == synth) cmd_synth(common, duration, run);
    run.commit(common.out);
  } catch (const MissingFile& e) {
    return report_error("missing file", e, kMissingFile);
  } catch (const ConfigError& e) {
    return report_error("config", e, kSchema);
  } catch (const MalformedInput& e) {
    return report_error("malformed input", e, kMalformed);
  } catch (const DivergedTraining& e) {
    return report_error("training diverged", e, kNumeric);
  } catch (const NumericOverflow& e) {
    return report_error("numeric", e, kNumeric);
  } catch (const IoError& e) {
    return report_error("io", e, kIo);
  } catch (const Error& e) {
    return report_error("invalid input", e, kFailure);
  } catch (const std::exception& e) {
    return report_error("internal", e, kFailure);
  }
  return kOk;
}
