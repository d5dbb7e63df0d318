#pragma once

// Run configuration and the stage functions behind the command-line tool.
//
// Output directory layout (one artifact set per stage):
//   synthetic_manifest.json                       synth
//   frame.csv, ingest.json                        ingest
//   physics.json                                  calibrate
//   checkpoint_{cnn,transformer}.json,
//   history_{cnn,transformer}.csv                 train
//   ensemble.json                                 fuse
//   predictions.csv, regimes.csv, metrics.json,
//   metrics.csv                                   evaluate
//   attribution.csv, exact_attribution.csv,
//   importance.json, regime_comparison.csv,
//   stability.json                                explain
//   ablation.json, ablation.csv                   ablate
// Every artifact carries the config digest and the base seed.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pilf/attribution.hpp"
#include "pilf/csv.hpp"
#include "pilf/ensemble.hpp"
#include "pilf/error.hpp"
#include "pilf/evaluation.hpp"
#include "pilf/extreme_events.hpp"
#include "pilf/forecaster.hpp"
#include "pilf/ingest.hpp"
#include "pilf/physics.hpp"
#include "pilf/synthetic.hpp"

namespace pilf {

struct PhysicsSettings {
  double lambda1 = 0.1;
  double lambda2 = 0.05;
  double t0_c = 18.5;
  bool continuous = false;
  double tolerance_bin_width_c = 2.0;
  std::size_t tolerance_min_count = 30;
  double sigma_floor_mw = 50.0;
  std::optional<double> delta_max_mw;  // estimated from training data when absent
  double delta_max_percentile = 99.5;
};

struct AttributionSettings {
  std::size_t background = 500;
  std::size_t permutations = 200;
  std::size_t samples_per_regime = 100;
  std::size_t exact_samples = 5;
  std::size_t exact_background = 50;
  std::size_t bootstrap = 20;
};

struct RunConfig {
  std::string load_path = "data/ercot_load.csv";
  std::string weather_path = "data/asos_weather.csv";
  std::string holidays_path;  // empty: computed federal calendar
  std::string out_dir = "out";

  std::vector<std::string> stations = {"BKS", "JDD", "TME"};
  SplitSpec split = {{make_hour(2018, 1, 1, 0), make_hour(2023, 1, 1, 0)},
                     {make_hour(2023, 1, 1, 0), make_hour(2024, 1, 1, 0)},
                     {make_hour(2024, 1, 1, 0), make_hour(2026, 1, 1, 0)}};
  std::size_t max_gap_hours = 6;
  CnnBranchConfig cnn;
  TransformerBranchConfig transformer;
  TrainConfig train;  // lambda fields are taken from `physics`
  PhysicsSettings physics;
  HampelConfig hampel;
  AttributionSettings attribution;
  std::vector<std::uint64_t> ablation_seeds;  // empty: the base seed only
  std::uint64_t seed = 42;
  SyntheticConfig synthetic = default_synthetic_config();

  TrainConfig train_config() const {
    TrainConfig t = train;
    t.lambda1 = physics.lambda1;
    t.lambda2 = physics.lambda2;
    t.seed = seed;
    return t;
  }

  std::string path(const std::string& name) const { return (std::filesystem::path(out_dir) / name).string(); }
};

namespace detail {

inline nlohmann::json range_json(const HourRange& r) { return {format_utc_hour(r.begin), format_utc_hour(r.end)}; }

inline HourRange range_from_json(const nlohmann::json& j) {
  require(j.is_array() && j.size() == 2, "config", "a range is [begin, end)");
  return {parse_utc_hour(j.at(0).get<std::string>()), parse_utc_hour(j.at(1).get<std::string>())};
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json delta = c.physics.delta_max_mw ? nlohmann::json(*c.physics.delta_max_mw) : nlohmann::json(nullptr);
  return {
      {"paths", {{"load", c.load_path}, {"weather", c.weather_path}, {"holidays", c.holidays_path}, {"out_dir", c.out_dir}}},
      {"stations", c.stations},
      {"split", {{"train", detail::range_json(c.split.train)},
                 {"val", detail::range_json(c.split.val)},
                 {"test", detail::range_json(c.split.test)}}},
      {"ingest", {{"max_gap_hours", c.max_gap_hours}}},
      {"cnn", build_cnn(c.cnn, 0)->config_json()},
      {"transformer", build_transformer(c.transformer, 0)->config_json()},
      {"train", {{"lr", c.train.lr},
                 {"batch", c.train.batch},
                 {"max_epochs", c.train.max_epochs},
                 {"patience", c.train.patience},
                 {"segment_hours", c.train.segment_hours},
                 {"mse_standardized", c.train.mse_standardized}}},
      {"physics", {{"lambda1", c.physics.lambda1},
                   {"lambda2", c.physics.lambda2},
                   {"t0_c", c.physics.t0_c},
                   {"continuous", c.physics.continuous},
                   {"tolerance_bin_width_c", c.physics.tolerance_bin_width_c},
                   {"tolerance_min_count", c.physics.tolerance_min_count},
                   {"sigma_floor_mw", c.physics.sigma_floor_mw},
                   {"delta_max_mw", delta},
                   {"delta_max_percentile", c.physics.delta_max_percentile}}},
      {"hampel", {{"window_hours", c.hampel.window_hours}, {"k_mad", c.hampel.k_mad}, {"mad_floor", c.hampel.mad_floor}}},
      {"attribution", {{"background", c.attribution.background},
                       {"permutations", c.attribution.permutations},
                       {"samples_per_regime", c.attribution.samples_per_regime},
                       {"exact_samples", c.attribution.exact_samples},
                       {"exact_background", c.attribution.exact_background},
                       {"bootstrap", c.attribution.bootstrap}}},
      {"ablation", {{"seeds", c.ablation_seeds}}},
      {"seed", c.seed},
      {"synthetic", synthetic_config_json(c.synthetic)},
  };
}

/// Missing keys keep their defaults; unknown top-level keys are rejected.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"paths",  "stations", "split",       "ingest",   "cnn",  "transformer",
                                              "train",  "physics",  "hampel",      "attribution", "ablation", "seed",
                                              "synthetic"};
  require(j.is_object(), "config", "config must be a JSON object");
  for (const auto& [k, _] : j.items()) require(known.count(k) > 0, "config", "unknown config key '" + k + "'", k);
  RunConfig c;
  try {
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      c.load_path = p.value("load", c.load_path);
      c.weather_path = p.value("weather", c.weather_path);
      c.holidays_path = p.value("holidays", c.holidays_path);
      c.out_dir = p.value("out_dir", c.out_dir);
    }
    if (j.contains("stations")) c.stations = j.at("stations").get<std::vector<std::string>>();
    if (j.contains("split")) {
      const auto& s = j.at("split");
      c.split = {detail::range_from_json(s.at("train")), detail::range_from_json(s.at("val")),
                 detail::range_from_json(s.at("test"))};
    }
    if (j.contains("ingest")) c.max_gap_hours = j.at("ingest").value("max_gap_hours", c.max_gap_hours);
    if (j.contains("cnn")) c.cnn = cnn_config_from_json(j.at("cnn"));
    if (j.contains("transformer")) c.transformer = transformer_config_from_json(j.at("transformer"));
    if (j.contains("train")) {
      const auto& t = j.at("train");
      c.train.lr = t.value("lr", c.train.lr);
      c.train.batch = t.value("batch", c.train.batch);
      c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
      c.train.patience = t.value("patience", c.train.patience);
      c.train.segment_hours = t.value("segment_hours", c.train.segment_hours);
      c.train.mse_standardized = t.value("mse_standardized", c.train.mse_standardized);
    }
    if (j.contains("physics")) {
      const auto& p = j.at("physics");
      c.physics.lambda1 = p.value("lambda1", c.physics.lambda1);
      c.physics.lambda2 = p.value("lambda2", c.physics.lambda2);
      c.physics.t0_c = p.value("t0_c", c.physics.t0_c);
      c.physics.continuous = p.value("continuous", c.physics.continuous);
      c.physics.tolerance_bin_width_c = p.value("tolerance_bin_width_c", c.physics.tolerance_bin_width_c);
      c.physics.tolerance_min_count = p.value("tolerance_min_count", c.physics.tolerance_min_count);
      c.physics.sigma_floor_mw = p.value("sigma_floor_mw", c.physics.sigma_floor_mw);
      if (p.contains("delta_max_mw") && !p.at("delta_max_mw").is_null()) c.physics.delta_max_mw = p.at("delta_max_mw").get<double>();
      c.physics.delta_max_percentile = p.value("delta_max_percentile", c.physics.delta_max_percentile);
    }
    if (j.contains("hampel")) {
      const auto& h = j.at("hampel");
      c.hampel.window_hours = h.value("window_hours", c.hampel.window_hours);
      c.hampel.k_mad = h.value("k_mad", c.hampel.k_mad);
      c.hampel.mad_floor = h.value("mad_floor", c.hampel.mad_floor);
    }
    if (j.contains("attribution")) {
      const auto& a = j.at("attribution");
      c.attribution.background = a.value("background", c.attribution.background);
      c.attribution.permutations = a.value("permutations", c.attribution.permutations);
      c.attribution.samples_per_regime = a.value("samples_per_regime", c.attribution.samples_per_regime);
      c.attribution.exact_samples = a.value("exact_samples", c.attribution.exact_samples);
      c.attribution.exact_background = a.value("exact_background", c.attribution.exact_background);
      c.attribution.bootstrap = a.value("bootstrap", c.attribution.bootstrap);
    }
    if (j.contains("ablation")) c.ablation_seeds = j.at("ablation").value("seeds", c.ablation_seeds);
    c.seed = j.value("seed", c.seed);
    if (j.contains("synthetic")) c.synthetic = synthetic_config_from_json(j.at("synthetic"));
  } catch (const nlohmann::json::exception& e) {
    throw Error("config", std::string("invalid config value: ") + e.what());
  }
  return c;
}

inline void validate(const RunConfig& c) {
  c.split.validate();
  c.cnn.validate();
  c.transformer.validate();
  c.train_config().validate();
  c.hampel.validate();
  require(!c.stations.empty(), "config", "at least one station is required");
  require(c.attribution.background >= 1 && c.attribution.exact_background >= 1 && c.attribution.permutations >= 1 && c.attribution.bootstrap >= 2, "config",
          "attribution sizes must be positive (bootstrap >= 2)");
  require(c.physics.delta_max_percentile > 0 && c.physics.delta_max_percentile <= 100, "config",
          "delta_max_percentile must lie in (0, 100]");
}

inline RunConfig load_run_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(csv::read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error("config", std::string("cannot parse config: ") + e.what(), path);
  }
  return run_config_from_json(j);
}

/// FNV-1a 64 of the canonical config JSON without paths, as 16 hex digits.
inline std::string config_digest(const RunConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("paths");
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// artifact io

inline nlohmann::json provenance(const RunConfig& c) { return {{"config_digest", config_digest(c)}, {"seed", c.seed}}; }

inline std::string csv_comment(const RunConfig& c) {
  return "# config_digest=" + config_digest(c) + " seed=" + std::to_string(c.seed) + "\n";
}

inline void write_artifact(const RunConfig& c, const std::string& name, const std::string& content) {
  std::filesystem::create_directories(c.out_dir);
  csv::write_text_file(c.path(name), content);
}

inline void write_json_artifact(const RunConfig& c, const std::string& name, nlohmann::json body) {
  body["provenance"] = provenance(c);
  write_artifact(c, name, body.dump(2) + "\n");
}

/// Reads an upstream artifact. A missing file names the producing
/// subcommand; a digest mismatch is refused unless `force` is set.
inline nlohmann::json read_json_artifact(const RunConfig& c, const std::string& stage, const std::string& name,
                                         const std::string& producer, bool force) {
  const std::string p = c.path(name);
  if (!std::filesystem::exists(p))
    throw Error(stage, "missing artifact " + name + "; run the '" + producer + "' subcommand first", p);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(csv::read_text_file(p));
  } catch (const nlohmann::json::exception& e) {
    throw Error(stage, std::string("corrupt artifact: ") + e.what(), p);
  }
  const std::string have = j.contains("provenance") ? j["provenance"].value("config_digest", "") : "";
  if (!force && have != config_digest(c)) {
    throw Error(stage, "artifact was produced by a different config (digest " + have + ", expected " + config_digest(c) +
                           "); rerun '" + producer + "' or pass --force",
                p);
  }
  return j;
}

// ---------------------------------------------------------------------------
// in-memory building blocks shared by the stages and the ablation harness

struct PreparedData {
  AlignedFrame frame;
  Standardizer standardizer;
  SplitWindows windows;
};

inline PreparedData prepare_data(const AlignedFrame& frame, const RunConfig& c) {
  PreparedData d;
  d.frame = frame;
  d.standardizer = fit_standardizer(frame, c.split);
  d.windows = make_windows(frame, d.standardizer, c.split);
  return d;
}

struct IngestReport {
  AlignedFrame frame;
  std::size_t filled_values = 0;
  std::vector<GapRun> unfilled;
};

inline IngestReport ingest_files(const RunConfig& c) {
  const auto load = parse_load_csv(c.load_path);
  const auto weather = parse_weather_csv(c.weather_path);
  require(!load.empty(), "ingest", "load file has no rows", c.load_path);
  std::set<Date> holidays = c.holidays_path.empty()
                                ? us_federal_holidays(year_of(date_of(load.front().timestamp)), year_of(date_of(load.back().timestamp)))
                                : parse_holiday_file(c.holidays_path);
  AlignedFrame aligned = align_hourly(load, weather, std::set<std::string>(c.stations.begin(), c.stations.end()));
  ImputeResult imputed = impute_linear(aligned, c.max_gap_hours);
  return {encode_calendar(std::move(imputed.frame), holidays), imputed.filled_values, imputed.unfilled};
}

/// Envelope, tolerance band and ramp limit calibrated on the training range.
inline PhysicsContext calibrate_physics(const AlignedFrame& frame, const RunConfig& c, nlohmann::json* report = nullptr) {
  const RangeSeries s = series_in_range(frame, c.split.train);
  const EnvelopeFit fit = fit_envelope(s.air_temp_c, s.demand_mw, c.physics.t0_c, c.physics.continuous);
  PhysicsContext p;
  p.envelope = fit.envelope;
  p.tolerance = fit_tolerance(s.air_temp_c, fit.residuals, c.physics.tolerance_bin_width_c, c.physics.tolerance_min_count,
                              c.physics.sigma_floor_mw);
  std::vector<double> steps;
  for (std::size_t i = 1; i < s.timestamps.size(); ++i)
    if (s.timestamps[i] - s.timestamps[i - 1] == 1) steps.push_back(std::abs(s.demand_mw[i] - s.demand_mw[i - 1]));
  require(!steps.empty(), "calibrate", "training range has no consecutive demand pairs");
  p.delta_max_mw = c.physics.delta_max_mw ? *c.physics.delta_max_mw : percentile_linear(steps, c.physics.delta_max_percentile);
  if (report) {
    double ss = 0.0;
    for (double r : fit.residuals) ss += r * r;
    *report = {{"n", s.timestamps.size()},
               {"residual_rmse_mw", std::sqrt(ss / static_cast<double>(fit.residuals.size()))},
               {"delta_max_source", c.physics.delta_max_mw ? "config" : "training percentile"},
               {"jump_at_breakpoint_mw", p.envelope.jump_at_breakpoint()}};
  }
  return p;
}

inline nlohmann::json physics_to_json(const PhysicsContext& p) {
  return {{"envelope", p.envelope}, {"tolerance", p.tolerance}, {"delta_max_mw", p.delta_max_mw}};
}

inline PhysicsContext physics_from_json(const nlohmann::json& j) {
  PhysicsContext p;
  p.envelope = j.at("envelope").get<ParabolicEnvelope>();
  p.tolerance = j.at("tolerance").get<ToleranceModel>();
  p.delta_max_mw = j.at("delta_max_mw").get<double>();
  return p;
}

using EpochLog = std::function<void(BranchKind, const EpochRecord&)>;

inline TrainedBranch train_one(BranchKind kind, const PreparedData& d, const PhysicsContext& physics, const RunConfig& c) {
  TrainedBranch tb;
  tb.kind = kind;
  tb.seed = c.seed;
  tb.standardizer = d.standardizer;
  tb.model = kind == BranchKind::cnn ? build_cnn(c.cnn, c.seed) : build_transformer(c.transformer, c.seed);
  tb.history = train_branch(*tb.model, d.windows.train, d.windows.val, d.standardizer, physics, c.train_config());
  return tb;
}

struct FusionResult {
  EnsembleWeights weights;
  bool degenerate = false;
  double val_mse_cnn = 0, val_mse_t = 0, val_mse_ensemble = 0;
};

inline FusionResult fuse_branches(const TrainedBranch& cnn, const TrainedBranch& t, const WindowSet& val) {
  const auto pc = cnn.predict(val);
  const auto pt = t.predict(val);
  FusionResult f;
  try {
    f.weights = fit_weights(val.targets_mw, pc, pt);
  } catch (const Error&) {
    f.weights = {0.5, 0.5};
    f.degenerate = true;
  }
  f.val_mse_cnn = mean_squared_error(val.targets_mw, pc);
  f.val_mse_t = mean_squared_error(val.targets_mw, pt);
  f.val_mse_ensemble = mean_squared_error(val.targets_mw, predict_ensemble(f.weights, pc, pt));
  return f;
}

inline nlohmann::json fusion_to_json(const FusionResult& f) {
  return {{"weights", f.weights},
          {"degenerate", f.degenerate},
          {"val_mse_cnn", f.val_mse_cnn},
          {"val_mse_transformer", f.val_mse_t},
          {"val_mse_ensemble", f.val_mse_ensemble}};
}

struct ModelPredictions {
  std::string model;
  std::vector<double> pred;
  RegimeReports reports;
  std::size_t ramp_violations_all = 0;
  std::size_t ramp_violations_extreme = 0;
};

struct TestEvaluation {
  RegimeLabels labels;                // Hampel flags over the test range
  std::vector<std::uint8_t> flags;    // aligned to the test windows
  std::vector<ModelPredictions> models;  // cnn, transformer, ensemble, persistence

  const ModelPredictions& get(const std::string& name) const {
    for (const auto& m : models)
      if (m.model == name) return m;
    throw Error("evaluate", "unknown model " + name);
  }
};

inline TestEvaluation evaluate_test(const TrainedBranch& cnn, const TrainedBranch& t, const EnsembleWeights& w,
                                    const PreparedData& d, const PhysicsContext& physics, const RunConfig& c) {
  const WindowSet& test = d.windows.test;
  TestEvaluation ev;
  ev.labels = label_test_range(series_in_range(d.frame, c.split.test), c.hampel);
  ev.flags = flags_for_targets(ev.labels, test.target_timestamps);
  const auto pc = cnn.predict(test);
  const auto pt = t.predict(test);
  const std::vector<std::pair<std::string, std::vector<double>>> preds = {
      {"cnn", pc}, {"transformer", pt}, {"ensemble", predict_ensemble(w, pc, pt)}, {"persistence", persistence_forecast(test, d.standardizer)}};
  for (const auto& [name, p] : preds) {
    ModelPredictions m;
    m.model = name;
    m.pred = p;
    m.reports = evaluate_by_regime(test.targets_mw, p, ev.flags, name);
    m.ramp_violations_all = ramp_violations(p, test.target_timestamps, physics.delta_max_mw);
    m.ramp_violations_extreme = ramp_violations(p, test.target_timestamps, physics.delta_max_mw, ev.flags);
    ev.models.push_back(std::move(m));
  }
  return ev;
}

inline std::string predictions_csv(const TestEvaluation& ev, const WindowSet& test) {
  std::ostringstream out;
  out << "target_utc,demand_mw,cnn_mw,transformer_mw,ensemble_mw,persistence_mw,flag\n";
  for (std::size_t i = 0; i < test.size(); ++i) {
    out << format_utc_hour(test.target_timestamps[i]) << ',' << csv::format_double(test.targets_mw[i]);
    for (const auto& m : ev.models) out << ',' << csv::format_double(m.pred[i]);
    out << ',' << int(ev.flags[i]) << '\n';
  }
  return out.str();
}

inline nlohmann::json evaluation_to_json(const TestEvaluation& ev, const PhysicsContext& physics) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : ev.models) {
    models.push_back({{"model", m.model},
                      {"all", to_json(m.reports.all)},
                      {"extreme", to_json(m.reports.extreme)},
                      {"normal", to_json(m.reports.normal)},
                      {"ramp_violations", {{"all", m.ramp_violations_all}, {"extreme", m.ramp_violations_extreme}}}});
  }
  return {{"test_hours", ev.labels.flags.size()},
          {"flagged_hours", ev.labels.extreme_count()},
          {"delta_max_mw", physics.delta_max_mw},
          {"models", models}};
}

inline TrainedBranch load_checkpoint(const RunConfig& c, const std::string& stage, BranchKind kind, bool force) {
  return checkpoint_from_json(read_json_artifact(c, stage, std::string("checkpoint_") + to_string(kind) + ".json", "train", force));
}

inline PreparedData load_prepared(const RunConfig& c, const std::string& stage, bool force) {
  read_json_artifact(c, stage, "ingest.json", "ingest", force);
  if (!std::filesystem::exists(c.path("frame.csv")))
    throw Error(stage, "missing artifact frame.csv; run the 'ingest' subcommand first", c.path("frame.csv"));
  return prepare_data(read_frame_csv(c.path("frame.csv")), c);
}

// ---------------------------------------------------------------------------
// attribution

struct ExplainResult {
  std::vector<std::size_t> samples;  // test window indices, extreme ones first
  std::vector<std::uint8_t> sample_flags;
  AttributionMatrix cnn, transformer, ensemble;
  ImportanceRanking all, extreme, normal;
  bool has_extreme = false, has_normal = false;
  std::vector<RegimeComparisonRow> comparison;
  StabilityReport stability;
  std::vector<std::size_t> exact_samples;
  AttributionMatrix exact_cnn, exact_transformer, exact_ensemble;
  double exact_efficiency_error_mw = 0.0;
};

inline Predictor branch_predictor(const TrainedBranch& tb) {
  return [&tb](const Matrix& stacked) {
    std::vector<double> out = tb.model->infer(stacked);
    for (double& v : out) v = tb.standardizer.inverse(kDemand, v);
    return out;
  };
}

namespace detail {

// up to `count` entries spread evenly over `idx`, order preserved
inline std::vector<std::size_t> spread_pick(const std::vector<std::size_t>& idx, std::size_t count) {
  if (idx.size() <= count) return idx;
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back(idx[k * idx.size() / count]);
  return out;
}

inline AttributionMatrix attribution_shell(const std::string& model, std::size_t m) {
  AttributionMatrix a;
  a.model = model;
  a.phi = Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(kFeatureCount));
  a.base_value.assign(m, 0.0);
  a.prediction.assign(m, 0.0);
  a.per_background.resize(m);
  return a;
}

inline void store(AttributionMatrix& a, std::size_t i, const ShapleyResult& r) {
  for (std::size_t j = 0; j < r.phi.size(); ++j) a.phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r.phi[j];
  a.base_value[i] = r.base_value;
  a.prediction[i] = r.prediction;
  a.per_background[i] = r.per_background;
}

inline AttributionMatrix combine(const AttributionMatrix& c, const AttributionMatrix& t, const EnsembleWeights& w) {
  AttributionMatrix e;
  e.model = "ensemble";
  e.phi = ensemble_attribution(c.phi, t.phi, w);
  for (std::size_t i = 0; i < c.base_value.size(); ++i) {
    e.base_value.push_back(w.w_cnn * c.base_value[i] + w.w_t * t.base_value[i]);
    e.prediction.push_back(w.w_cnn * c.prediction[i] + w.w_t * t.prediction[i]);
    e.per_background.push_back(w.w_cnn * c.per_background[i] + w.w_t * t.per_background[i]);
  }
  return e;
}

}  // namespace detail

inline ExplainResult explain_models(const TrainedBranch& cnn, const TrainedBranch& t, const EnsembleWeights& w,
                                    const PreparedData& d, const std::vector<std::uint8_t>& test_flags,
                                    const RunConfig& c) {
  const WindowSet& test = d.windows.test;
  const RegimeSplit regimes = split_regimes(test, test_flags);
  ExplainResult r;
  const auto extreme = detail::spread_pick(regimes.extreme, c.attribution.samples_per_regime);
  const auto normal = detail::spread_pick(regimes.normal, c.attribution.samples_per_regime);
  r.samples = extreme;
  r.samples.insert(r.samples.end(), normal.begin(), normal.end());
  require(!r.samples.empty(), "explain", "no test windows to explain");
  for (std::size_t i : r.samples) r.sample_flags.push_back(test_flags[i]);

  const BackgroundSet bg = stratified_background(d.windows.train, std::min(c.attribution.background, d.windows.train.size()), c.seed);
  const Predictor fc = branch_predictor(cnn), ft = branch_predictor(t);

  r.cnn = detail::attribution_shell("cnn", r.samples.size());
  r.transformer = detail::attribution_shell("transformer", r.samples.size());
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    const Matrix x = test.window(r.samples[i]);
    const std::uint64_t sample_seed = c.seed + 1000003ull * (r.samples[i] + 1);
    detail::store(r.cnn, i, shapley_sampled(fc, x, bg, c.attribution.permutations, sample_seed));
    detail::store(r.transformer, i, shapley_sampled(ft, x, bg, c.attribution.permutations, sample_seed));
  }
  r.ensemble = detail::combine(r.cnn, r.transformer, w);

  std::vector<std::size_t> rows_e, rows_n;
  for (std::size_t i = 0; i < r.samples.size(); ++i) (r.sample_flags[i] ? rows_e : rows_n).push_back(i);
  r.all = global_importance(r.ensemble.phi, "all");
  r.has_extreme = !rows_e.empty();
  r.has_normal = !rows_n.empty();
  if (r.has_extreme) r.extreme = global_importance(r.ensemble.phi, rows_e, "extreme");
  if (r.has_normal) r.normal = global_importance(r.ensemble.phi, rows_n, "normal");
  if (r.has_extreme && r.has_normal) r.comparison = regime_comparison(r.extreme, r.normal, feature_name_list());
  r.stability = bootstrap_stability(r.ensemble.per_background, c.attribution.bootstrap, c.seed);

  // exact attributions for the first few explained samples (extreme first)
  const std::size_t ne = std::min(c.attribution.exact_samples, r.samples.size());
  r.exact_samples.assign(r.samples.begin(), r.samples.begin() + static_cast<std::ptrdiff_t>(ne));
  r.exact_cnn = detail::attribution_shell("cnn", ne);
  r.exact_transformer = detail::attribution_shell("transformer", ne);
  if (ne > 0) {
    const BackgroundSet small = stratified_background(d.windows.train, std::min(c.attribution.exact_background, d.windows.train.size()), c.seed);
    for (std::size_t i = 0; i < ne; ++i) {
      const Matrix x = test.window(r.exact_samples[i]);
      detail::store(r.exact_cnn, i, shapley_exact(fc, x, small));
      detail::store(r.exact_transformer, i, shapley_exact(ft, x, small));
    }
  }
  r.exact_ensemble = detail::combine(r.exact_cnn, r.exact_transformer, w);
  for (const auto* a : {&r.exact_cnn, &r.exact_transformer, &r.exact_ensemble}) {
    for (std::size_t i = 0; i < ne; ++i) {
      const double gap = a->phi.row(static_cast<Eigen::Index>(i)).sum() - (a->prediction[i] - a->base_value[i]);
      r.exact_efficiency_error_mw = std::max(r.exact_efficiency_error_mw, std::abs(gap));
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// stages

struct StageOptions {
  bool force = false;
  bool verbose = false;
  std::string branches = "both";  // train: cnn | transformer | both
};

namespace detail {

inline void note(const StageOptions& o, const std::string& msg) {
  if (o.verbose) std::clog << msg << std::endl;
}

}  // namespace detail

inline void stage_synth(const RunConfig& c, const StageOptions& o) {
  SyntheticConfig sc = c.synthetic;
  SyntheticDataset ds = generate_synthetic(sc);
  for (const std::string* p : {&c.load_path, &c.weather_path}) {
    const auto parent = std::filesystem::path(*p).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
  }
  csv::write_text_file(c.load_path, ds.load_csv);
  csv::write_text_file(c.weather_path, ds.weather_csv);
  if (!c.holidays_path.empty()) {
    const auto parent = std::filesystem::path(c.holidays_path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    csv::write_text_file(c.holidays_path, ds.holidays_txt);
  }
  write_json_artifact(c, "synthetic_manifest.json", ds.manifest);
  detail::note(o, "synth: " + std::to_string(ds.hours.size()) + " hours, " + std::to_string(ds.clipped_hours) + " clipped");
}

inline void stage_ingest(const RunConfig& c, const StageOptions& o) {
  IngestReport rep = ingest_files(c);
  nlohmann::json missing = nlohmann::json::object();
  for (std::size_t f = 0; f < kFeatureCount; ++f) missing[kFeatureNames[f]] = rep.frame.missing_count(f);
  nlohmann::json gaps = nlohmann::json::array();
  for (const auto& g : rep.unfilled)
    gaps.push_back({{"column", kFeatureNames[g.column]},
                    {"start_utc", format_utc_hour(rep.frame.timestamps[g.start_row])},
                    {"hours", g.length},
                    {"boundary", g.boundary}});
  write_artifact(c, "frame.csv", frame_to_csv(rep.frame, "config_digest=" + config_digest(c) + " seed=" + std::to_string(c.seed)));
  write_json_artifact(c, "ingest.json",
                      {{"rows", rep.frame.rows()},
                       {"first_utc", format_utc_hour(rep.frame.timestamps.front())},
                       {"last_utc", format_utc_hour(rep.frame.timestamps.back())},
                       {"filled_values", rep.filled_values},
                       {"unfilled_gaps", gaps},
                       {"missing_after_imputation", missing}});
  detail::note(o, "ingest: " + std::to_string(rep.frame.rows()) + " rows, " + std::to_string(rep.filled_values) + " values imputed");
}

inline void stage_calibrate(const RunConfig& c, const StageOptions& o) {
  const PreparedData d = load_prepared(c, "calibrate", o.force);
  nlohmann::json report;
  const PhysicsContext p = calibrate_physics(d.frame, c, &report);
  nlohmann::json body = physics_to_json(p);
  body["fit"] = report;
  write_json_artifact(c, "physics.json", body);
  detail::note(o, "calibrate: delta_max " + csv::format_double(p.delta_max_mw) + " MW");
}

inline void stage_train(const RunConfig& c, const StageOptions& o) {
  require(o.branches == "both" || o.branches == "cnn" || o.branches == "transformer", "train",
          "branch must be cnn, transformer or both", o.branches);
  const PreparedData d = load_prepared(c, "train", o.force);
  const PhysicsContext p = physics_from_json(read_json_artifact(c, "train", "physics.json", "calibrate", o.force));
  for (BranchKind kind : {BranchKind::cnn, BranchKind::transformer}) {
    if (o.branches != "both" && o.branches != to_string(kind)) continue;
    const TrainedBranch tb = train_one(kind, d, p, c);
    nlohmann::json ckpt = checkpoint_to_json(tb);
    write_json_artifact(c, std::string("checkpoint_") + to_string(kind) + ".json", ckpt);
    write_artifact(c, std::string("history_") + to_string(kind) + ".csv", csv_comment(c) + tb.history.to_csv());
    detail::note(o, std::string("train: ") + to_string(kind) + " best epoch " + std::to_string(tb.history.best_epoch) +
                        ", val MAE " + csv::format_double(tb.history.best_val_mae) + " MW");
  }
}

inline void stage_fuse(const RunConfig& c, const StageOptions& o) {
  const PreparedData d = load_prepared(c, "fuse", o.force);
  const TrainedBranch cnn = load_checkpoint(c, "fuse", BranchKind::cnn, o.force);
  const TrainedBranch t = load_checkpoint(c, "fuse", BranchKind::transformer, o.force);
  const FusionResult f = fuse_branches(cnn, t, d.windows.val);
  write_json_artifact(c, "ensemble.json", fusion_to_json(f));
  detail::note(o, "fuse: w_cnn " + csv::format_double(f.weights.w_cnn) + ", w_t " + csv::format_double(f.weights.w_t));
}

inline TestEvaluation stage_evaluate(const RunConfig& c, const StageOptions& o) {
  const PreparedData d = load_prepared(c, "evaluate", o.force);
  const PhysicsContext p = physics_from_json(read_json_artifact(c, "evaluate", "physics.json", "calibrate", o.force));
  const TrainedBranch cnn = load_checkpoint(c, "evaluate", BranchKind::cnn, o.force);
  const TrainedBranch t = load_checkpoint(c, "evaluate", BranchKind::transformer, o.force);
  const EnsembleWeights w = read_json_artifact(c, "evaluate", "ensemble.json", "fuse", o.force).at("weights").get<EnsembleWeights>();
  TestEvaluation ev = evaluate_test(cnn, t, w, d, p, c);
  write_artifact(c, "predictions.csv", csv_comment(c) + predictions_csv(ev, d.windows.test));
  write_artifact(c, "regimes.csv", csv_comment(c) + ev.labels.to_csv(series_in_range(d.frame, c.split.test).demand_mw));
  write_json_artifact(c, "metrics.json", evaluation_to_json(ev, p));
  std::vector<MetricReport> rows;
  for (const auto& m : ev.models) {
    rows.push_back(m.reports.all);
    rows.push_back(m.reports.extreme);
    rows.push_back(m.reports.normal);
  }
  write_artifact(c, "metrics.csv", csv_comment(c) + metrics_csv(rows));
  detail::note(o, "evaluate: ensemble MAPE " + csv::format_double(ev.get("ensemble").reports.all.mape_pct.value_or(-1)) + " %");
  return ev;
}

inline ExplainResult stage_explain(const RunConfig& c, const StageOptions& o) {
  const PreparedData d = load_prepared(c, "explain", o.force);
  read_json_artifact(c, "explain", "metrics.json", "evaluate", o.force);
  const TrainedBranch cnn = load_checkpoint(c, "explain", BranchKind::cnn, o.force);
  const TrainedBranch t = load_checkpoint(c, "explain", BranchKind::transformer, o.force);
  const EnsembleWeights w = read_json_artifact(c, "explain", "ensemble.json", "fuse", o.force).at("weights").get<EnsembleWeights>();
  const RegimeLabels labels = label_test_range(series_in_range(d.frame, c.split.test), c.hampel);
  const auto flags = flags_for_targets(labels, d.windows.test.target_timestamps);
  ExplainResult r = explain_models(cnn, t, w, d, flags, c);

  const auto names = feature_name_list();
  std::vector<UtcHour> targets, exact_targets;
  for (std::size_t i : r.samples) targets.push_back(d.windows.test.target_timestamps[i]);
  for (std::size_t i : r.exact_samples) exact_targets.push_back(d.windows.test.target_timestamps[i]);
  write_artifact(c, "attribution.csv", csv_comment(c) + attribution_csv({r.cnn, r.transformer, r.ensemble}, targets, names));
  write_artifact(c, "exact_attribution.csv",
                 csv_comment(c) + attribution_csv({r.exact_cnn, r.exact_transformer, r.exact_ensemble}, exact_targets, names));
  nlohmann::json imp = {{"weights", w}, {"all", importance_json(r.all, names)}};
  if (r.has_extreme) imp["extreme"] = importance_json(r.extreme, names);
  if (r.has_normal) imp["normal"] = importance_json(r.normal, names);
  imp["regime_comparison"] = regime_comparison_json(r.comparison);
  imp["exact_efficiency_max_error_mw"] = r.exact_efficiency_error_mw;
  write_json_artifact(c, "importance.json", imp);
  write_artifact(c, "regime_comparison.csv", csv_comment(c) + regime_comparison_csv(r.comparison));
  nlohmann::json ref = nlohmann::json::array();
  for (std::size_t j : r.stability.reference_rank) ref.push_back(names[j]);
  write_json_artifact(c, "stability.json",
                      {{"resamples", r.stability.tau.size()},
                       {"background", std::min(c.attribution.background, d.windows.train.size())},
                       {"reference_rank", ref},
                       {"tau", r.stability.tau},
                       {"mean_tau", r.stability.mean_tau}});
  detail::note(o, "explain: mean Kendall tau " + csv::format_double(r.stability.mean_tau));
  return r;
}

struct AblationCellResult {
  AblationCell cell;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string failure;
  double extreme_rmse_mw = 0.0;
  double all_mape_pct = 0.0;
  std::size_t extreme_ramp_violations = 0;
  std::size_t all_ramp_violations = 0;
};

struct AblationReport {
  std::vector<AblationCellResult> cells;  // seed-major, grid order within a seed

  // mean over seeds of one grid cell; nullopt when any seed failed
  std::optional<double> mean_extreme_rmse(const AblationCell& cell) const {
    double s = 0;
    std::size_t n = 0;
    for (const auto& r : cells) {
      if (r.cell.lambda1 != cell.lambda1 || r.cell.lambda2 != cell.lambda2) continue;
      if (!r.ok) return std::nullopt;
      s += r.extreme_rmse_mw;
      ++n;
    }
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n);
  }
};

/// Trains the two-branch ensemble for every grid cell and seed on the same
/// prepared data; a failing cell is annotated and the rest still run.
inline AblationReport run_ablation(const PreparedData& d, const PhysicsContext& p, const RunConfig& base,
                                   const AblationGrid& grid, const StageOptions& o = {}) {
  AblationReport rep;
  std::vector<std::uint64_t> seeds = base.ablation_seeds;
  if (seeds.empty()) seeds.push_back(base.seed);
  for (std::uint64_t seed : seeds) {
    for (const auto& cell : grid.configs) {
      AblationCellResult r;
      r.cell = cell;
      r.seed = seed;
      try {
        RunConfig c = base;
        c.seed = seed;
        c.physics.lambda1 = cell.lambda1;
        c.physics.lambda2 = cell.lambda2;
        const TrainedBranch cnn = train_one(BranchKind::cnn, d, p, c);
        const TrainedBranch t = train_one(BranchKind::transformer, d, p, c);
        const FusionResult f = fuse_branches(cnn, t, d.windows.val);
        const TestEvaluation ev = evaluate_test(cnn, t, f.weights, d, p, c);
        const auto& ens = ev.get("ensemble");
        require(ens.reports.extreme.n > 0, "ablate", "no Hampel-flagged test hours");
        r.extreme_rmse_mw = ens.reports.extreme.rmse_mw;
        r.all_mape_pct = ens.reports.all.mape_pct.value_or(0.0);
        r.extreme_ramp_violations = ens.ramp_violations_extreme;
        r.all_ramp_violations = ens.ramp_violations_all;
        r.ok = true;
      } catch (const std::exception& e) {
        r.failure = e.what();
      }
      detail::note(o, "ablate: seed " + std::to_string(seed) + " (" + csv::format_double(cell.lambda1) + ", " +
                          csv::format_double(cell.lambda2) + ") " +
                          (r.ok ? "extreme RMSE " + csv::format_double(r.extreme_rmse_mw) : "failed: " + r.failure));
      rep.cells.push_back(r);
    }
  }
  return rep;
}

inline nlohmann::json ablation_to_json(const AblationReport& rep, const AblationGrid& grid) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& r : rep.cells) {
    nlohmann::json j = {{"lambda1", r.cell.lambda1}, {"lambda2", r.cell.lambda2}, {"seed", r.seed}, {"ok", r.ok}};
    if (r.ok) {
      j["extreme_rmse_mw"] = r.extreme_rmse_mw;
      j["all_mape_pct"] = r.all_mape_pct;
      j["extreme_ramp_violations"] = r.extreme_ramp_violations;
      j["all_ramp_violations"] = r.all_ramp_violations;
    } else {
      j["failure"] = r.failure;
    }
    cells.push_back(j);
  }
  nlohmann::json summary = nlohmann::json::array();
  const auto baseline = rep.mean_extreme_rmse(grid.configs.front());
  for (const auto& cell : grid.configs) {
    const auto m = rep.mean_extreme_rmse(cell);
    nlohmann::json row = {{"lambda1", cell.lambda1}, {"lambda2", cell.lambda2}};
    row["mean_extreme_rmse_mw"] = m ? nlohmann::json(*m) : nlohmann::json(nullptr);
    row["delta_pct_vs_baseline"] = m && baseline ? nlohmann::json(delta_percent(*baseline, *m)) : nlohmann::json(nullptr);
    summary.push_back(row);
  }
  return {{"cells", cells}, {"summary", summary}};
}

inline std::string ablation_csv(const AblationReport& rep) {
  std::ostringstream out;
  out << "seed,lambda1,lambda2,ok,extreme_rmse_mw,all_mape_pct,extreme_ramp_violations,all_ramp_violations\n";
  for (const auto& r : rep.cells) {
    out << r.seed << ',' << csv::format_double(r.cell.lambda1) << ',' << csv::format_double(r.cell.lambda2) << ','
        << (r.ok ? 1 : 0) << ',';
    if (r.ok)
      out << csv::format_double(r.extreme_rmse_mw) << ',' << csv::format_double(r.all_mape_pct) << ','
          << r.extreme_ramp_violations << ',' << r.all_ramp_violations;
    else
      out << ",,,";
    out << '\n';
  }
  return out.str();
}

inline AblationReport stage_ablate(const RunConfig& c, const StageOptions& o) {
  const PreparedData d = load_prepared(c, "ablate", o.force);
  const PhysicsContext p = physics_from_json(read_json_artifact(c, "ablate", "physics.json", "calibrate", o.force));
  const AblationGrid grid;
  AblationReport rep = run_ablation(d, p, c, grid, o);
  nlohmann::json body = ablation_to_json(rep, grid);
  std::vector<std::uint64_t> seeds = c.ablation_seeds;
  if (seeds.empty()) seeds.push_back(c.seed);
  body["seeds"] = seeds;
  write_json_artifact(c, "ablation.json", body);
  write_artifact(c, "ablation.csv", csv_comment(c) + ablation_csv(rep));
  return rep;
}

}  // namespace pilf
