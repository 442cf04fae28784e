#include "skel/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "skel/certify.hpp"
#include "skel/error.hpp"

namespace skel {

using nlohmann::json;

namespace {

enum class Kind { text, integer, real, flag, int_list, text_list };

struct OptSpec {
  std::string key;
  Kind kind;
  std::string help;
};

const std::vector<OptSpec> kTrainingOpts = {
    {"method", Kind::text, "skel | soc | lkis"},
    {"time_mode", Kind::text, "discrete | continuous"},
    {"epochs", Kind::integer, "number of full-batch steps"},
    {"lr", Kind::real, "learning rate"},
    {"alpha", Kind::real, "reconstruction weight"},
    {"epsilon", Kind::real, "stability margin constant"},
    {"embedding_dim", Kind::integer, "embedding dimension N"},
    {"hidden", Kind::int_list, "hidden layer widths"},
    {"left_inverse", Kind::text, "network | projection"},
    {"ridge", Kind::real, "ridge of the LKIS operator"},
    {"init_bound", Kind::real, "uniform init bound of operator parameters and biases"},
    {"sim_state_space", Kind::flag, "simulation loss on decoded states"},
};

const std::vector<OptSpec> kPreprocessOpts = {
    {"resample_dt", Kind::real, "resample trajectories on a uniform grid with this spacing"},
    {"augment_velocity", Kind::flag, "append finite-difference velocities to the state"},
};

std::string flag_name(const std::string& key) {
  std::string out = "--" + key;
  for (char& c : out) {
    if (c == '_') c = '-';
  }
  return out;
}

// Thrown for bad flags and config fields; maps to the usage exit code.
class UsageError : public Error {
 public:
  using Error::Error;
};

class Settings {
 public:
  Settings(std::string command, std::vector<OptSpec> specs) : command_(std::move(command)), specs_(std::move(specs)) {
    for (const auto& s : specs_) kinds_[s.key] = s.kind;
  }

  const std::vector<OptSpec>& specs() const { return specs_; }

  void load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config " + path);
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw ParseError("config " + path + ": " + e.what());
    }
    if (!doc.is_object()) throw UsageError("config " + path + ": top level must be an object");
    for (const auto& [key, value] : doc.items()) {
      auto it = kinds_.find(key);
      if (it == kinds_.end()) throw UsageError("config " + path + ": unknown field '" + key + "' for " + command_);
      check_type(key, it->second, value, "config " + path);
      values_[key] = value;
    }
  }

  void set_from_flag(const std::string& key, const json& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.contains(key); }

  std::string text(const std::string& key, const std::string& fallback) const {
    return has(key) ? values_.at(key).get<std::string>() : fallback;
  }
  std::string required_text(const std::string& key) const {
    if (!has(key)) throw UsageError(command_ + ": " + flag_name(key) + " is required");
    return values_.at(key).get<std::string>();
  }
  long long integer(const std::string& key, long long fallback) const {
    return has(key) ? values_.at(key).get<long long>() : fallback;
  }
  double real(const std::string& key, double fallback) const {
    return has(key) ? values_.at(key).get<double>() : fallback;
  }
  bool flag(const std::string& key) const { return has(key) && values_.at(key).get<bool>(); }
  std::vector<long long> int_list(const std::string& key, std::vector<long long> fallback) const {
    return has(key) ? values_.at(key).get<std::vector<long long>>() : fallback;
  }
  std::vector<std::string> text_list(const std::string& key, std::vector<std::string> fallback) const {
    return has(key) ? values_.at(key).get<std::vector<std::string>>() : fallback;
  }

  std::uint64_t seed() const {
    if (has("seed")) return static_cast<std::uint64_t>(values_.at("seed").get<long long>());
    if (const char* env = std::getenv("SKEL_SEED")) {
      try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(env, &used);
        if (used == std::string(env).size()) return v;
      } catch (const std::exception&) {
      }
      throw UsageError(std::string("SKEL_SEED must be a non-negative integer, got '") + env + "'");
    }
    return 0;
  }

 private:
  static void check_type(const std::string& key, Kind kind, const json& v, const std::string& where) {
    bool ok = false;
    switch (kind) {
      case Kind::text: ok = v.is_string(); break;
      case Kind::integer: ok = v.is_number_integer(); break;
      case Kind::real: ok = v.is_number(); break;
      case Kind::flag: ok = v.is_boolean(); break;
      case Kind::int_list:
        ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_integer(); });
        break;
      case Kind::text_list:
        ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
        break;
    }
    if (!ok) throw UsageError(where + ": field '" + key + "' has the wrong type");
  }

  std::string command_;
  std::vector<OptSpec> specs_;
  std::map<std::string, Kind> kinds_;
  json values_ = json::object();
};

// Raw flag storage; only flags given on the command line reach Settings.
struct FlagStore {
  std::map<std::string, std::string> scalars;
  std::map<std::string, std::vector<std::string>> lists;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::Option*> options;
};

void register_flags(CLI::App& sub, const std::vector<OptSpec>& specs, FlagStore& store) {
  for (const auto& s : specs) {
    const std::string name = flag_name(s.key);
    switch (s.kind) {
      case Kind::flag: store.options[s.key] = sub.add_flag(name, store.flags[s.key], s.help); break;
      case Kind::int_list:
      case Kind::text_list:
        store.options[s.key] = sub.add_option(name, store.lists[s.key], s.help)->delimiter(',');
        break;
      default: store.options[s.key] = sub.add_option(name, store.scalars[s.key], s.help); break;
    }
  }
}

long long parse_integer(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError(flag_name(key) + " expects an integer, got '" + text + "'");
}

double parse_real(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError(flag_name(key) + " expects a number, got '" + text + "'");
}

void apply_flags(const FlagStore& store, Settings& settings) {
  for (const auto& s : settings.specs()) {
    const CLI::Option* opt = store.options.at(s.key);
    if (opt->count() == 0) continue;
    switch (s.kind) {
      case Kind::text: settings.set_from_flag(s.key, store.scalars.at(s.key)); break;
      case Kind::integer: settings.set_from_flag(s.key, parse_integer(s.key, store.scalars.at(s.key))); break;
      case Kind::real: settings.set_from_flag(s.key, parse_real(s.key, store.scalars.at(s.key))); break;
      case Kind::flag: settings.set_from_flag(s.key, store.flags.at(s.key)); break;
      case Kind::int_list: {
        std::vector<long long> v;
        for (const auto& t : store.lists.at(s.key)) v.push_back(parse_integer(s.key, t));
        settings.set_from_flag(s.key, v);
        break;
      }
      case Kind::text_list: settings.set_from_flag(s.key, store.lists.at(s.key)); break;
    }
  }
}

std::vector<OptSpec> concat(std::initializer_list<std::vector<OptSpec>> parts) {
  std::vector<OptSpec> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

TrainConfig train_config(const Settings& s) {
  TrainConfig cfg;
  cfg.method = parse_method(s.text("method", to_string(cfg.method)));
  cfg.time_mode = parse_time_mode(s.text("time_mode", to_string(cfg.time_mode)));
  cfg.epochs = static_cast<int>(s.integer("epochs", cfg.epochs));
  cfg.lr = s.real("lr", cfg.lr);
  cfg.alpha = s.real("alpha", cfg.alpha);
  cfg.epsilon = s.real("epsilon", cfg.epsilon);
  cfg.embedding_dim = static_cast<int>(s.integer("embedding_dim", cfg.embedding_dim));
  std::vector<long long> hidden = s.int_list("hidden", {cfg.hidden.begin(), cfg.hidden.end()});
  cfg.hidden.assign(hidden.begin(), hidden.end());
  cfg.left_inverse = parse_left_inverse(s.text("left_inverse", to_string(cfg.left_inverse)));
  cfg.ridge = s.real("ridge", cfg.ridge);
  cfg.init_bound = s.real("init_bound", cfg.init_bound);
  cfg.sim_in_state_space = s.flag("sim_state_space");
  cfg.seed = s.seed();
  return cfg;
}

Dataset load_data(const Settings& s) {
  Dataset data = load_csv(s.required_text("data"));
  if (data.empty()) throw ParseError(s.required_text("data") + ": no trajectories");
  if (s.has("resample_dt")) {
    const double dt = s.real("resample_dt", 0.0);
    for (auto& t : data) t = resample_uniform(t, dt);
  }
  if (s.flag("augment_velocity")) {
    for (auto& t : data) t = augment_velocity(t);
  }
  return data;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << text;
  if (!out) throw ParseError("write failed for " + path);
}

int cmd_gen_data(const Settings& s) {
  SyntheticSpec spec;
  spec.kind = parse_synthetic_kind(s.text("kind", to_string(spec.kind)));
  spec.n_traj = static_cast<int>(s.integer("n_traj", spec.n_traj));
  spec.steps = static_cast<int>(s.integer("steps", spec.steps));
  spec.dt = s.real("dt", spec.dt);
  spec.noise_std = s.real("noise_std", spec.noise_std);
  spec.dim = static_cast<int>(s.integer("dim", spec.dim));
  spec.seed = s.seed();
  const std::string out = s.text("out", "data.csv");
  const Dataset data = gen_synthetic(spec);
  save_csv(out, data);
  std::cout << "wrote " << data.size() << " trajectories to " << out << "\n";
  return kExitOk;
}

int cmd_train(const Settings& s) {
  const Dataset data = load_data(s);
  const TrainConfig cfg = train_config(s);
  FitResult result = fit(data, cfg);
  const std::string model_path = s.text("out_model", "model.json");
  const std::string log_path = s.text("out_log", "train_log.csv");
  save_model(model_path, result.model);
  save_log_csv(log_path, result.log);
  std::cout << "best epoch " << result.log.best_epoch << ", loss " << format_double(result.log.best_loss)
            << "; model " << model_path << ", log " << log_path << "\n";
  if (result.log.aborted) {
    std::cerr << "skel train: numerical abort: " << result.log.abort_reason << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_simulate(const Settings& s) {
  const KoopmanModel model = load_model(s.required_text("model"));
  const Dataset data = load_data(s);
  Dataset out;
  for (const auto& t : data) {
    if (t.dim() != model.n) {
      throw ParseError("trajectory '" + t.source_id + "' has dimension " + std::to_string(t.dim()) +
                       ", model expects " + std::to_string(model.n));
    }
    Trajectory sim;
    sim.source_id = t.source_id + "_sim";
    if (model.time_mode == TimeMode::continuous && !s.has("horizon")) {
      sim.states = predict(model, t);
      sim.times = t.times;
    } else {
      const int horizon = static_cast<int>(s.integer("horizon", t.length() - 1));
      if (horizon < 0) throw UsageError("--horizon must be >= 0");
      double step = 1.0;
      if (t.timed() && t.length() > 1) step = (t.times.back() - t.times.front()) / static_cast<double>(t.length() - 1);
      step = s.real("dt", step);
      sim.states = simulate(model, t.states.col(0), horizon, step).states;
      const double t0 = t.timed() ? t.times.front() : 0.0;
      for (int k = 0; k <= horizon; ++k) sim.times.push_back(t0 + k * step);
    }
    out.push_back(std::move(sim));
  }
  const std::string path = s.text("out", "simulation.csv");
  save_csv(path, out);
  std::cout << "wrote " << out.size() << " simulated trajectories to " << path << "\n";
  return kExitOk;
}

int cmd_eval(const Settings& s) {
  const KoopmanModel model = load_model(s.required_text("model"));
  const EvalReport report = evaluate_model(model, load_data(s));
  const std::string path = s.text("out", "eval.json");
  write_text(path, to_json(report).dump(2) + "\n");
  std::cout << "nse " << format_double(report.nse) << ", rec_error " << format_double(report.rec_error) << ", rho "
            << format_double(report.rho) << "\n";
  return kExitOk;
}

int cmd_certify(const Settings& s) {
  const KoopmanModel model = load_model(s.required_text("model"));
  CertifyOptions opts;
  opts.max_samples = static_cast<std::size_t>(s.integer("samples", static_cast<long long>(opts.max_samples)));
  opts.seed = s.seed();
  const ContractionCertificate cert = certify(model, load_data(s), opts);
  const std::string path = s.text("out", "certificate.json");
  write_text(path, to_json(cert).dump(2) + "\n");
  std::cout << "verdict " << (cert.pass ? "pass" : "fail");
  for (const auto& r : cert.reasons) std::cout << "; " << r;
  std::cout << "\n";
  return kExitOk;
}

int cmd_compare(const Settings& s) {
  CompareConfig cfg;
  cfg.train = train_config(s);
  cfg.methods.clear();
  for (const auto& m : s.text_list("methods", {"skel", "soc", "lkis"})) cfg.methods.push_back(parse_method(m));
  cfg.seeds.clear();
  for (long long v : s.int_list("seeds", {static_cast<long long>(s.seed())})) {
    if (v < 0) throw UsageError("--seeds must be non-negative");
    cfg.seeds.push_back(static_cast<std::uint64_t>(v));
  }
  cfg.workers = static_cast<int>(s.integer("workers", 0));
  cfg.perturb_width = s.real("perturb_width", cfg.perturb_width);
  cfg.perturb_samples = static_cast<int>(s.integer("perturb_samples", cfg.perturb_samples));
  const ComparisonReport report = compare(load_data(s), cfg);
  const std::string path = s.text("out", "comparison.json");
  const std::string csv_path = s.text("out_csv", "comparison.csv");
  write_text(path, to_json(report).dump(2) + "\n");
  write_text(csv_path, format_comparison_csv(report));
  for (const auto& [name, sum] : report.summary) {
    std::cout << name << ": median nse " << format_double(sum.median_nse) << ", outliers " << sum.outliers_gt_1
              << ", unstable folds " << sum.unstable_folds << "\n";
  }
  return kExitOk;
}

struct Command {
  std::string name;
  std::string help;
  std::vector<OptSpec> specs;
  int (*run)(const Settings&);
};

std::vector<Command> commands() {
  const OptSpec data{"data", Kind::text, "trajectory CSV (traj_id,t,x0,...)"};
  const OptSpec model{"model", Kind::text, "model JSON"};
  const OptSpec seed{"seed", Kind::integer, "random seed (falls back to SKEL_SEED, then 0)"};
  return {
      {"gen-data", "generate synthetic trajectories",
       {{"kind", Kind::text, "linear_sink | spiral_sink | tanh_contraction"},
        {"n_traj", Kind::integer, "number of trajectories"},
        {"steps", Kind::integer, "samples per trajectory"},
        {"dt", Kind::real, "sample spacing"},
        {"noise_std", Kind::real, "observation noise standard deviation"},
        {"dim", Kind::integer, "state dimension (linear_sink, tanh_contraction)"},
        seed,
        {"out", Kind::text, "output CSV"}},
       cmd_gen_data},
      {"train", "fit a model",
       concat({{data, seed, {"out_model", Kind::text, "output model JSON"}, {"out_log", Kind::text, "output log CSV"}},
               kTrainingOpts, kPreprocessOpts}),
       cmd_train},
      {"simulate", "simulate from the first sample of each trajectory",
       concat({{model, data, {"horizon", Kind::integer, "steps to simulate"},
                {"dt", Kind::real, "time per step (continuous-time models)"}, {"out", Kind::text, "output CSV"}},
               kPreprocessOpts}),
       cmd_simulate},
      {"eval", "normalized simulation error, reconstruction error, stability",
       concat({{model, data, {"out", Kind::text, "output JSON"}}, kPreprocessOpts}), cmd_eval},
      {"certify", "stability and contraction certificate",
       concat({{model, data, seed, {"samples", Kind::integer, "maximum Jacobian samples"},
                {"out", Kind::text, "output JSON"}},
               kPreprocessOpts}),
       cmd_certify},
      {"compare", "leave-one-out comparison of methods",
       concat({{data,
                seed,
                {"methods", Kind::text_list, "methods to compare"},
                {"seeds", Kind::int_list, "training seeds"},
                {"workers", Kind::integer, "worker threads (0: all cores)"},
                {"perturb_width", Kind::real, "width of the initial-condition box"},
                {"perturb_samples", Kind::integer, "perturbed rollouts per fold"},
                {"out", Kind::text, "output JSON"},
                {"out_csv", Kind::text, "output long-form CSV"}},
               kTrainingOpts, kPreprocessOpts}),
       cmd_compare},
  };
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Stable Koopman embeddings: data generation, training, evaluation and certification"};
  app.require_subcommand(1);
  const auto cmds = commands();
  std::vector<FlagStore> stores(cmds.size());
  std::vector<std::string> configs(cmds.size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    CLI::App* sub = app.add_subcommand(cmds[i].name, cmds[i].help);
    sub->add_option("--config", configs[i], "JSON file with defaults for any flag (keys use underscores)");
    register_flags(*sub, cmds[i].specs, stores[i]);
    subs.push_back(sub);
  }

  std::vector<std::string> rev(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rev.begin(), rev.end());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      Settings settings(cmds[i].name, cmds[i].specs);
      if (!configs[i].empty()) settings.load_config(configs[i]);
      apply_flags(stores[i], settings);
      return cmds[i].run(settings);
    } catch (const NumericalError& e) {
      std::cerr << "skel " << cmds[i].name << ": numerical error: " << e.what() << "\n";
      return kExitNumerical;
    } catch (const SingularityError& e) {
      std::cerr << "skel " << cmds[i].name << ": numerical error: " << e.what() << "\n";
      return kExitNumerical;
    } catch (const ConvergenceError& e) {
      std::cerr << "skel " << cmds[i].name << ": numerical error: " << e.what() << "\n";
      return kExitNumerical;
    } catch (const std::exception& e) {
      std::cerr << "skel " << cmds[i].name << ": " << e.what() << "\n";
      return kExitUsage;
    }
  }
  return kExitUsage;
}

}  // namespace skel
