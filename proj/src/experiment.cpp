#include "superfed/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "superfed/metrics.hpp"
#include "superfed/objective.hpp"

namespace superfed {

using json = nlohmann::json;

namespace {

// Typed field access with "a.b.c" names in errors; rejects unknown keys.
class Section {
 public:
  Section(const json& j, std::string prefix, std::set<std::string> allowed)
      : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(name_or_root(), "must be a JSON object");
    for (const auto& [key, _] : j_.items()) {
      if (!allowed.count(key)) throw ConfigError(field(key), "unknown field");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const json& raw(const std::string& key) const { return j_.at(key); }
  std::string field(const std::string& key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

  template <class T>
  T get(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    return convert<T>(j_.at(key), field(key));
  }

  template <class T>
  T require(const std::string& key) const {
    if (!has(key)) throw ConfigError(field(key), "missing required field");
    return convert<T>(j_.at(key), field(key));
  }

  template <class T>
  static T convert(const json& v, const std::string& name) {
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
          throw ConfigError(name, "must be a non-negative integer");
        }
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(name, "must be a number");
      } else if constexpr (std::is_same_v<T, int>) {
        if (!v.is_number_integer()) throw ConfigError(name, "must be an integer");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(name, "must be a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(name, e.what());
    }
  }

 private:
  std::string name_or_root() const { return prefix_.empty() ? "<root>" : prefix_; }
  const json& j_;
  std::string prefix_;
};

template <class Fn>
auto named(const std::string& field, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(field, e.what());
  }
}

std::string data_kind_name(DataKind k) {
  switch (k) {
    case DataKind::hetero_logistic: return "hetero_logistic";
    case DataKind::gaussian_mixture: return "gaussian_mixture";
    case DataKind::file: return "file";
  }
  return "unknown";
}

DataSource parse_data(const json& j, const std::filesystem::path& base_dir) {
  Section s(j, "data",
            {"source", "seed", "num_devices", "n_min", "n_max", "dim", "num_classes",
             "heterogeneity", "signal", "means", "n_per_device", "path", "test_path",
             "test_fraction"});
  DataSource d;
  const auto source = s.require<std::string>("source");
  d.seed = s.get<std::uint64_t>("seed", 0);
  d.test_fraction = s.get<double>("test_fraction", 0.0);
  if (!(d.test_fraction >= 0.0 && d.test_fraction < 1.0)) {
    throw ConfigError(s.field("test_fraction"), "must lie in [0, 1)");
  }
  if (source == "hetero_logistic") {
    d.kind = DataKind::hetero_logistic;
    auto& h = d.hetero;
    h.num_devices = s.get<std::size_t>("num_devices", h.num_devices);
    h.n_min = s.get<std::size_t>("n_min", h.n_min);
    h.n_max = s.get<std::size_t>("n_max", h.n_max);
    h.dim = s.get<std::size_t>("dim", h.dim);
    h.num_classes = s.get<int>("num_classes", h.num_classes);
    h.heterogeneity = s.get<double>("heterogeneity", h.heterogeneity);
    h.signal = s.get<double>("signal", h.signal);
    if (h.num_devices < 1) throw ConfigError(s.field("num_devices"), "must be >= 1");
    if (h.n_min < 1 || h.n_min > h.n_max) throw ConfigError(s.field("n_min"), "must be in [1, n_max]");
    if (h.dim < 1) throw ConfigError(s.field("dim"), "must be >= 1");
    if (h.num_classes < 2) throw ConfigError(s.field("num_classes"), "must be >= 2");
    if (!(h.heterogeneity >= 0.0 && h.heterogeneity <= 1.0)) {
      throw ConfigError(s.field("heterogeneity"), "must lie in [0, 1]");
    }
  } else if (source == "gaussian_mixture") {
    d.kind = DataKind::gaussian_mixture;
    const auto means = s.require<std::vector<std::vector<double>>>("means");
    if (means.size() < 2) throw ConfigError(s.field("means"), "need at least two means");
    for (std::size_t i = 0; i < means.size(); ++i) {
      if (means[i].size() != 2) {
        throw ConfigError(s.field("means") + "[" + std::to_string(i) + "]", "must have 2 entries");
      }
      d.means.push_back({means[i][0], means[i][1]});
    }
    d.n_per_device = s.get<std::size_t>("n_per_device", d.n_per_device);
    if (d.n_per_device < 1) throw ConfigError(s.field("n_per_device"), "must be >= 1");
  } else if (source == "file") {
    d.kind = DataKind::file;
    d.path = s.require<std::string>("path");
    if (d.path.is_relative() && !base_dir.empty()) d.path = base_dir / d.path;
    if (s.has("test_path")) {
      std::filesystem::path tp = s.require<std::string>("test_path");
      if (tp.is_relative() && !base_dir.empty()) tp = base_dir / tp;
      d.test_path = tp;
    }
  } else {
    throw ConfigError(s.field("source"),
                      "must be one of hetero_logistic, gaussian_mixture, file");
  }
  return d;
}

void parse_federation(const json& j, FederationConfig& f) {
  Section s(j, "federation",
            {"nu", "devices_per_round", "local_mode", "local_steps", "batch_size", "lr",
             "lr_decay", "lr_decay_period", "rounds", "eta_period", "aggregation", "mask_scale",
             "eta_protocol", "filter", "mm_max_iters", "mm_tol", "eval_period"});
  f.nu = s.get<double>("nu", f.nu);
  f.devices_per_round = s.get<std::size_t>("devices_per_round", f.devices_per_round);
  if (s.has("local_mode")) {
    f.local_mode = named(s.field("local_mode"),
                         [&] { return local_mode_from_string(s.require<std::string>("local_mode")); });
  }
  f.local_steps = s.get<std::size_t>("local_steps", f.local_steps);
  f.batch_size = s.get<std::size_t>("batch_size", f.batch_size);
  f.lr = s.get<double>("lr", f.lr);
  f.lr_decay = s.get<double>("lr_decay", f.lr_decay);
  f.lr_decay_period = s.get<std::size_t>("lr_decay_period", f.lr_decay_period);
  f.rounds = s.get<std::size_t>("rounds", f.rounds);
  f.eta_period = s.get<std::size_t>("eta_period", f.eta_period);
  f.eval_period = s.get<std::size_t>("eval_period", f.eval_period);
  if (s.has("aggregation")) {
    f.aggregation = named(s.field("aggregation"), [&] {
      return aggregation_mode_from_string(s.require<std::string>("aggregation"));
    });
  }
  f.mask_scale = s.get<double>("mask_scale", f.mask_scale);
  if (s.has("eta_protocol")) {
    f.eta_protocol = named(s.field("eta_protocol"), [&] {
      return eta_protocol_from_string(s.require<std::string>("eta_protocol"));
    });
  }
  if (s.has("filter")) {
    f.filter = named(s.field("filter"),
                     [&] { return filter_mode_from_string(s.require<std::string>("filter")); });
  }
  f.mm.max_iters = s.get<std::size_t>("mm_max_iters", f.mm.max_iters);
  f.mm.tol = s.get<double>("mm_tol", f.mm.tol);

  auto check = [&](bool ok, const char* key, const char* msg) {
    if (!ok) throw ConfigError(s.field(key), msg);
  };
  check(f.nu > 0.0, "nu", "must be positive");
  check(f.devices_per_round >= 1, "devices_per_round", "must be >= 1");
  check(f.local_steps >= 1, "local_steps", "must be >= 1");
  check(f.batch_size >= 1, "batch_size", "must be >= 1");
  check(f.lr > 0.0, "lr", "must be positive");
  check(f.lr_decay > 0.0 && f.lr_decay <= 1.0, "lr_decay", "must lie in (0, 1]");
  check(f.lr_decay_period >= 1, "lr_decay_period", "must be >= 1");
  check(f.rounds >= 1, "rounds", "must be >= 1");
  check(f.eta_period >= 1, "eta_period", "must be >= 1");
  check(f.mask_scale > 0.0, "mask_scale", "must be positive");
  check(f.mm.max_iters >= 1, "mm_max_iters", "must be >= 1");
  check(f.mm.tol > 0.0, "mm_tol", "must be positive");
}

json data_to_json(const DataSource& d) {
  json j{{"source", data_kind_name(d.kind)}, {"seed", d.seed}, {"test_fraction", d.test_fraction}};
  switch (d.kind) {
    case DataKind::hetero_logistic:
      j["num_devices"] = d.hetero.num_devices;
      j["n_min"] = d.hetero.n_min;
      j["n_max"] = d.hetero.n_max;
      j["dim"] = d.hetero.dim;
      j["num_classes"] = d.hetero.num_classes;
      j["heterogeneity"] = d.hetero.heterogeneity;
      j["signal"] = d.hetero.signal;
      break;
    case DataKind::gaussian_mixture: {
      json means = json::array();
      for (const auto& m : d.means) means.push_back({m[0], m[1]});
      j["means"] = means;
      j["n_per_device"] = d.n_per_device;
      break;
    }
    case DataKind::file:
      j["path"] = d.path.string();
      if (d.test_path) j["test_path"] = d.test_path->string();
      break;
  }
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string metrics_csv(const std::vector<MetricSnapshot>& snapshots) {
  std::string out = "round,split,kind,count,mean";
  for (double tau : kDefaultPercentiles) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), ",p%g", tau);
    out += buf;
  }
  out += '\n';
  auto row = [&](std::size_t round, const char* split, const DeviceMetricTable& table) {
    const auto s = summarize(table);
    out += std::to_string(round) + ',' + split + ',' + to_string(s.kind) + ',' +
           std::to_string(s.count) + ',' + format_double(s.mean);
    for (const auto& [tau, v] : s.percentiles) out += ',' + format_double(v);
    out += '\n';
  };
  for (const auto& snap : snapshots) {
    row(snap.round, "train", snap.train);
    if (snap.test) row(snap.round, "test", *snap.test);
  }
  return out;
}

json am_iterate_json(const AmIterate& it) {
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"t", it.t},
          {"eta", it.eta},
          {"eta_lower", finite_or_null(it.eta_interval.lower)},
          {"eta_upper", it.eta_interval.upper},
          {"value", it.value},
          {"grad_norm", it.grad_norm},
          {"grad_w_norm", it.grad_w_norm},
          {"grad_eta", it.grad_eta},
          {"epsilon", it.epsilon},
          {"wstep_iters", it.wstep_iters},
          {"wstep_bound", it.wstep_bound}};
}

std::string cell_label(Algorithm algorithm, double theta) {
  if (algorithm == Algorithm::fedavg) return "fedavg";
  if (algorithm == Algorithm::am_meta) return "am_meta";
  return theta == 1.0 ? "fedavg-equivalent" : "deltafl";
}

}  // namespace

json ExperimentConfig::to_json() const {
  const auto& f = federation;
  json seeds_j = json::array();
  for (auto s : seeds) seeds_j.push_back(s);
  return {{"schema_version", schema_version},
          {"algorithm", to_string(algorithm)},
          {"thetas", thetas},
          {"seeds", seeds_j},
          {"output_dir", output_dir.string()},
          {"data", data_to_json(data)},
          {"loss", {{"kind", to_string(f.loss.kind)}, {"l2_reg", f.loss.l2_reg}}},
          {"federation",
           {{"nu", f.nu},
            {"devices_per_round", f.devices_per_round},
            {"local_mode", to_string(f.local_mode)},
            {"local_steps", f.local_steps},
            {"batch_size", f.batch_size},
            {"lr", f.lr},
            {"lr_decay", f.lr_decay},
            {"lr_decay_period", f.lr_decay_period},
            {"rounds", f.rounds},
            {"eta_period", f.eta_period},
            {"eval_period", f.eval_period},
            {"aggregation", to_string(f.aggregation)},
            {"mask_scale", f.mask_scale},
            {"eta_protocol", to_string(f.eta_protocol)},
            {"filter", to_string(f.filter)},
            {"mm_max_iters", f.mm.max_iters},
            {"mm_tol", f.mm.tol}}},
          {"am_meta", {{"eps0", am.eps0}, {"power", am.power}, {"rounds", am.rounds}}}};
}

ExperimentConfig parse_experiment_config(const json& j, const std::filesystem::path& base_dir) {
  Section s(j, "", {"schema_version", "algorithm", "thetas", "seeds", "output_dir", "data",
                    "loss", "federation", "am_meta"});
  ExperimentConfig cfg;
  cfg.schema_version = s.get<int>("schema_version", kConfigSchemaVersion);
  if (cfg.schema_version != kConfigSchemaVersion) {
    throw ConfigError("schema_version",
                      "unsupported version " + std::to_string(cfg.schema_version));
  }
  if (s.has("algorithm")) {
    cfg.algorithm =
        named("algorithm", [&] { return algorithm_from_string(s.require<std::string>("algorithm")); });
  }
  if (!s.has("data")) throw ConfigError("data", "missing data source");
  cfg.data = parse_data(s.raw("data"), base_dir);

  if (s.has("thetas")) {
    const auto& arr = s.raw("thetas");
    if (!arr.is_array() || arr.empty()) throw ConfigError("thetas", "must be a non-empty array");
    cfg.thetas.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto name = "thetas[" + std::to_string(i) + "]";
      const double theta = Section::convert<double>(arr[i], name);
      if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError(name, "must lie in (0, 1]");
      cfg.thetas.push_back(theta);
    }
  }
  if (s.has("seeds")) {
    const auto& arr = s.raw("seeds");
    if (!arr.is_array() || arr.empty()) throw ConfigError("seeds", "must be a non-empty array");
    cfg.seeds.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      cfg.seeds.push_back(
          Section::convert<std::uint64_t>(arr[i], "seeds[" + std::to_string(i) + "]"));
    }
  }
  cfg.output_dir = s.get<std::string>("output_dir", cfg.output_dir.string());

  if (s.has("loss")) {
    Section l(s.raw("loss"), "loss", {"kind", "l2_reg"});
    if (l.has("kind")) {
      cfg.federation.loss.kind = named(
          "loss.kind", [&] { return loss_kind_from_string(l.require<std::string>("kind")); });
    }
    cfg.federation.loss.l2_reg = l.get<double>("l2_reg", 0.0);
    if (!(cfg.federation.loss.l2_reg >= 0.0)) throw ConfigError("loss.l2_reg", "must be >= 0");
  }
  cfg.federation.loss.num_classes =
      cfg.data.kind == DataKind::hetero_logistic ? cfg.data.hetero.num_classes : 2;
  if (cfg.data.kind == DataKind::gaussian_mixture &&
      cfg.federation.loss.kind != LossKind::squared_distance) {
    throw ConfigError("loss.kind", "gaussian_mixture data requires squared_distance");
  }
  if (cfg.federation.loss.kind == LossKind::binary_logistic &&
      cfg.federation.loss.num_classes != 2) {
    throw ConfigError("loss.kind", "binary_logistic requires num_classes = 2");
  }

  if (s.has("federation")) parse_federation(s.raw("federation"), cfg.federation);

  if (s.has("am_meta")) {
    Section a(s.raw("am_meta"), "am_meta", {"eps0", "power", "rounds"});
    cfg.am.eps0 = a.get<double>("eps0", cfg.am.eps0);
    cfg.am.power = a.get<double>("power", cfg.am.power);
    cfg.am.rounds = a.get<std::size_t>("rounds", cfg.am.rounds);
    if (!(cfg.am.eps0 > 0.0)) throw ConfigError("am_meta.eps0", "must be positive");
    if (!(cfg.am.power > 1.0)) throw ConfigError("am_meta.power", "must exceed 1 (summable)");
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("malformed JSON: ") + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

Populations build_populations(const DataSource& source) {
  Population all;
  std::optional<Population> test;
  switch (source.kind) {
    case DataKind::hetero_logistic:
      all = gen_hetero_logistic(source.hetero, source.seed);
      break;
    case DataKind::gaussian_mixture:
      all = gen_gaussian_mixture(source.means, source.n_per_device, source.seed);
      break;
    case DataKind::file:
      all = load_devices_jsonl(source.path);
      if (source.test_path) test = load_devices_jsonl(*source.test_path);
      break;
  }
  if (!test && source.test_fraction > 0.0) {
    auto [train, held_out] = split_devices(all, 1.0 - source.test_fraction, source.seed);
    return {std::move(train), std::move(held_out)};
  }
  return {std::move(all), std::move(test)};
}

std::string theta_label(double theta) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", theta);
  return buf;
}

std::vector<CellResult> run_experiment(const ExperimentConfig& cfg) {
  const Populations pops = build_populations(cfg.data);
  const Population* test = pops.test ? &*pops.test : nullptr;
  std::vector<CellResult> cells;
  const auto runs_dir = cfg.output_dir / "runs";

  for (double theta : cfg.thetas) {
    for (auto seed : cfg.seeds) {
      FederationConfig f = cfg.federation;
      f.theta = theta;
      f.seed = seed;
      f.validate();
      const auto dir = runs_dir / theta_label(theta) / std::to_string(seed);
      std::filesystem::create_directories(dir);

      std::string rounds;
      std::vector<MetricSnapshot> snapshots;
      ModelParams w;
      if (cfg.algorithm == Algorithm::am_meta) {
        const EmpiricalObjective objective(pops.train, f.loss);
        const auto result =
            am_meta(objective, ConformityLevel(theta), SmoothingParam(f.nu),
                    InexactnessSchedule::polynomial(cfg.am.eps0, cfg.am.power),
                    ModelParams(objective.dim(), 0.0), cfg.am.rounds);
        for (const auto& it : result.trace) rounds += am_iterate_json(it).dump() + '\n';
        w = result.w;
        MetricSnapshot snap{cfg.am.rounds, train_loss_table(pops.train, f.loss, w), std::nullopt};
        if (test) snap.test = test_metric_table(*test, f.loss, w);
        snapshots.push_back(std::move(snap));
      } else {
        auto result = run_federated(pops.train, f, cfg.algorithm, test);
        for (const auto& log : result.logs) rounds += log.to_json().dump() + '\n';
        w = std::move(result.w);
        snapshots = std::move(result.snapshots);
      }
      write_text(dir / "rounds.jsonl", rounds);
      write_text(dir / "metrics.csv", metrics_csv(snapshots));

      const auto& last = snapshots.back();
      scatter_export(last.train, dir / "train_scatter.csv");
      if (last.test) scatter_export(*last.test, dir / "test_scatter.csv");

      CellResult cell{theta, seed, cell_label(cfg.algorithm, theta), summarize(last.train),
                      std::nullopt};
      if (last.test) cell.test = summarize(*last.test);
      cells.push_back(std::move(cell));
    }
  }

  // Mean and sample standard deviation across seeds, per theta.
  json groups = json::array();
  for (double theta : cfg.thetas) {
    std::map<std::string, std::vector<double>> series;
    json per_seed = json::array();
    for (const auto& c : cells) {
      if (c.theta != theta) continue;
      const json train = c.train.to_json();
      json entry{{"seed", c.seed}, {"train", train}};
      for (const auto& [key, v] : train.items()) {
        if (v.is_number_float()) series["train_" + key].push_back(v.get<double>());
      }
      if (c.test) {
        const json test_j = c.test->to_json();
        entry["test"] = test_j;
        for (const auto& [key, v] : test_j.items()) {
          if (v.is_number_float()) series["test_" + key].push_back(v.get<double>());
        }
      }
      per_seed.push_back(std::move(entry));
    }
    json agg;
    for (const auto& [key, values] : series) {
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(values.size());
      agg[key] = {{"mean", mean}, {"std", sample_stddev(values)}};
    }
    groups.push_back({{"theta", theta},
                      {"label", cell_label(cfg.algorithm, theta)},
                      {"seeds", per_seed},
                      {"across_seeds", agg}});
  }
  json summary{{"schema_version", kConfigSchemaVersion},
               {"algorithm", to_string(cfg.algorithm)},
               {"config", cfg.to_json()},
               {"results", groups}};
  std::filesystem::create_directories(cfg.output_dir);
  write_text(cfg.output_dir / "summary.json", summary.dump(2) + '\n');
  return cells;
}

int cmd_validate(const std::filesystem::path& config_path) {
  try {
    const auto cfg = load_experiment_config(config_path);
    std::cout << cfg.to_json().dump(2) << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  }
}

int cmd_run(const std::filesystem::path& config_path, const RunOverrides& overrides) {
  ExperimentConfig cfg;
  try {
    cfg = load_experiment_config(config_path);
    if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;
    if (overrides.rounds) {
      if (*overrides.rounds < 1) throw ConfigError("federation.rounds", "must be >= 1");
      cfg.federation.rounds = *overrides.rounds;
      cfg.am.rounds = *overrides.rounds;
    }
    if (overrides.thetas) {
      for (double t : *overrides.thetas) {
        if (!(t > 0.0 && t <= 1.0)) throw ConfigError("thetas", "must lie in (0, 1]");
      }
      cfg.thetas = *overrides.thetas;
    }
    if (overrides.seeds) cfg.seeds = *overrides.seeds;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  }
  try {
    const auto cells = run_experiment(cfg);
    for (const auto& c : cells) {
      std::cout << "theta=" << theta_label(c.theta) << " seed=" << c.seed << " [" << c.label
                << "] train mean " << format_double(c.train.mean);
      if (c.test) std::cout << " test mean " << format_double(c.test->mean);
      std::cout << '\n';
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntimeError;
  }
}

namespace {

double dist2(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  return (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]);
}

}  // namespace

json GaussianDemoResult::to_json() const {
  json r = json::array();
  for (const auto& run : runs) {
    json e{{"theta", run.theta}, {"w", {run.w[0], run.w[1]}}, {"target_name", run.target_name}};
    e["target"] = run.target ? json{(*run.target)[0], (*run.target)[1]} : json(nullptr);
    e["distance"] = run.distance ? json(*run.distance) : json(nullptr);
    r.push_back(std::move(e));
  }
  return {{"runs", r}, {"longest_side_tie", longest_side_tie}, {"midpoint_optimal", midpoint_optimal}};
}

GaussianDemoResult run_gaussian_demo(const GaussianDemoOptions& options) {
  const auto& mu = options.means;
  if (mu.size() != 3) throw std::invalid_argument("gaussian demo: exactly three means required");

  std::optional<Population> pop;
  std::unique_ptr<DeviceObjective> objective;
  if (options.samples_per_device > 0) {
    pop = gen_gaussian_mixture(mu, options.samples_per_device, options.seed);
    objective = std::make_unique<EmpiricalObjective>(
        *pop, LossSpec{LossKind::squared_distance, 0.0, 2});
  } else {
    std::vector<Vector> means;
    for (const auto& m : mu) means.push_back({m[0], m[1]});
    objective = std::make_unique<QuadraticObjective>(gaussian_population_objective(means));
  }

  GaussianDemoResult out;
  const std::array<double, 2> centroid{(mu[0][0] + mu[1][0] + mu[2][0]) / 3.0,
                                       (mu[0][1] + mu[1][1] + mu[2][1]) / 3.0};

  // Sides indexed by the opposite vertex.
  std::array<double, 3> side{dist2(mu[1], mu[2]), dist2(mu[0], mu[2]), dist2(mu[0], mu[1])};
  const auto longest = static_cast<std::size_t>(std::max_element(side.begin(), side.end()) - side.begin());
  const double tie_tol = 1e-12 * side[longest];
  int ties = 0;
  for (double s : side) ties += std::abs(s - side[longest]) <= tie_tol ? 1 : 0;
  out.longest_side_tie = ties > 1;
  out.midpoint_optimal =
      !out.longest_side_tie &&
      side[longest] >= side[(longest + 1) % 3] + side[(longest + 2) % 3] - tie_tol;

  for (double theta : {1.0, 2.0 / 3.0}) {
    const auto result =
        am_meta(*objective, ConformityLevel(theta), SmoothingParam(options.nu),
                InexactnessSchedule::polynomial(options.eps0, options.power),
                ModelParams(2, 0.0), options.rounds);
    GaussianDemoRun run;
    run.theta = theta;
    run.w = {result.w[0], result.w[1]};
    if (theta == 1.0) {
      run.target = centroid;
      run.target_name = "centroid";
    } else if (!out.longest_side_tie) {
      const auto& a = mu[(longest + 1) % 3];
      const auto& b = mu[(longest + 2) % 3];
      run.target = std::array<double, 2>{(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0};
      run.target_name = "midpoint_of_longest_side";
    } else {
      run.target_name = "tie: several longest sides";
    }
    if (run.target) run.distance = std::sqrt(dist2(run.w, *run.target));
    out.runs.push_back(run);
  }
  return out;
}

int cmd_gaussian_demo(const std::filesystem::path& out_dir, const GaussianDemoOptions& options) {
  try {
    const auto result = run_gaussian_demo(options);
    std::filesystem::create_directories(out_dir);
    json j = result.to_json();
    json means = json::array();
    for (const auto& m : options.means) means.push_back({m[0], m[1]});
    j["means"] = means;
    j["nu"] = options.nu;
    j["rounds"] = options.rounds;
    j["samples_per_device"] = options.samples_per_device;
    write_text(out_dir / "gaussian_demo.json", j.dump(2) + '\n');
    for (const auto& run : result.runs) {
      std::cout << "theta=" << theta_label(run.theta) << " w=(" << format_double(run.w[0]) << ", "
                << format_double(run.w[1]) << ") target=" << run.target_name;
      if (run.distance) std::cout << " distance=" << format_double(*run.distance);
      std::cout << '\n';
    }
    if (result.longest_side_tie) std::cout << "longest side is not unique; no midpoint target\n";
    if (!result.midpoint_optimal && !result.longest_side_tie) {
      std::cout << "note: triangle is acute, the midpoint target does not minimize theta=2/3\n";
    }
    return kExitOk;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntimeError;
  }
}

}  // namespace superfed
