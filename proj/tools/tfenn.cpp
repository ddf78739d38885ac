// SPDX-License-Identifier: Apache-2.0
//
// tfenn: dataset generation, training, evaluation, symmetry audits and
// symmetry-basis discovery.
//
// Every subcommand accepts --config <file> with flat "key = value" lines;
// each key may also be given as a flag (--key-name for key_name), and flags
// win. Reports are JSON and carry the hash of the merged configuration.

#include <omp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "tfenn/config.hpp"
#include "tfenn/data.hpp"
#include "tfenn/network.hpp"
#include "tfenn/tensegrity.hpp"
#include "tfenn/training.hpp"

namespace {

using nlohmann::json;
using namespace tfenn;

const std::set<std::string> kGenKeys = {
    "generator", "n", "seed", "out", "dim", "eig_low", "eig_high", "lambda", "mu", "rotate_deg",
    "ell", "k_bar", "k_cable", "alpha", "buckling_strain", "steps", "amplitude", "young", "poisson",
    "yield_stress", "hardening", "report"};

const std::set<std::string> kTrainKeys = {
    "data", "val_data", "n_train", "n_val", "model", "symmetry", "hidden", "activation",
    "rotation_wrapper", "penalty_weight", "initial_angle_deg", "epochs", "batch_size", "lr", "seed",
    "input_scaler", "output_scaler", "out", "history", "report", "timing"};

const std::set<std::string> kEvalKeys = {"model_file", "data", "symmetry", "n_sym", "seed", "steps", "report"};

const std::set<std::string> kSymtestKeys = {"model_file", "symmetry", "n", "seed", "steps", "eig_low",
                                            "eig_high", "data", "report"};

const std::set<std::string> kDiscoverKeys = {
    "data", "val_data", "n_train", "n_val", "symmetry", "hidden", "activation", "penalty_weight", "epochs",
    "batch_size", "lr", "seeds", "true_angle_deg", "initial_angle_deg", "tolerance_deg", "report", "timing"};

std::string flag_name(const std::string& key) {
  std::string s = "--" + key;
  for (char& c : s)
    if (c == '_') c = '-';
  return s;
}

struct Sub {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> flags;
};

void add_keys(Sub& sub, const std::set<std::string>& keys, const std::set<std::string>& positional = {}) {
  sub.app->add_option("--config", sub.config_path, "flat key = value configuration file");
  for (const auto& k : keys) {
    if (positional.count(k))
      sub.app->add_option(k, sub.flags[k], k);
    else
      sub.app->add_option(flag_name(k), sub.flags[k], k);
  }
}

Config merged_config(const Sub& sub, const std::set<std::string>& keys, const std::set<std::string>& positional = {}) {
  Config cfg = sub.config_path.empty() ? Config{} : Config::load(sub.config_path);
  for (const auto& [k, v] : sub.flags) {
    const std::string opt = positional.count(k) ? k : flag_name(k);
    if (sub.app->count(opt) > 0) cfg.set(k, v);
  }
  cfg.check_known(keys);
  return cfg;
}

json report_header(const std::string& command, const Config& cfg) {
  json r;
  r["command"] = command;
  r["config_hash"] = hex64(fnv1a(cfg.canonical()));
  r["provenance"] = provenance();
  json c = json::object();
  for (const auto& [k, v] : cfg.values()) c[k] = v;
  r["config"] = c;
  return r;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw IoError("write failed for '" + path + "'");
}

void emit_report(const json& r, const Config& cfg) {
  const std::string text = r.dump(2) + "\n";
  std::cout << text;
  if (cfg.has("report")) write_text(cfg.get("report", ""), text);
}

std::size_t positive_size(const Config& cfg, const std::string& key, long long fallback) {
  const long long v = cfg.get_int(key, fallback);
  if (v < 1) throw ConfigError("key '" + key + "' must be positive");
  return static_cast<std::size_t>(v);
}

// ---------------------------------------------------------------- gen

int cmd_gen(const Config& cfg) {
  const std::string gen = cfg.require("generator");
  const std::size_t n = positive_size(cfg, "n", 1000);
  const std::uint64_t seed = cfg.get_u64("seed", 0);
  const std::string out = cfg.require("out");
  const double lo = cfg.get_double("eig_low", 0.7), hi = cfg.get_double("eig_high", 1.3);

  json r = report_header("gen", cfg);
  Dataset ds;
  if (gen == "neo-hookean") {
    NeoHookeanParams p;
    p.lambda = cfg.get_double("lambda", p.lambda);
    p.mu = cfg.get_double("mu", p.mu);
    const long long dim = cfg.get_int("dim", 3);
    if (dim != 2 && dim != 3) throw ConfigError("dim must be 2 or 3");
    ds = gen_neo_hookean(p, n, lo, hi, seed, static_cast<int>(dim));
  } else if (gen == "tensegrity") {
    TensegrityParams p;
    p.ell = cfg.get_double("ell", p.ell);
    p.k_bar = cfg.get_double("k_bar", p.k_bar);
    p.k_cable = cfg.get_double("k_cable", p.k_cable);
    p.alpha = cfg.get_double("alpha", p.alpha);
    p.buckling_strain = cfg.get_double("buckling_strain", p.buckling_strain);
    TensegrityGenStats stats;
    ds = gen_tensegrity(p, n, lo, hi, seed, cfg.get_double("rotate_deg", 0.0), &stats);
    r["resampled"] = stats.resampled;
    r["max_asymmetry"] = stats.max_asymmetry;
  } else if (gen == "j2") {
    J2Params p;
    if (cfg.has("young") || cfg.has("poisson"))
      p = J2Params::from_young(cfg.get_double("young", 1.0), cfg.get_double("poisson", 0.3),
                               cfg.get_double("yield_stress", p.yield_stress), cfg.get_double("hardening", p.hardening));
    p.lambda = cfg.get_double("lambda", p.lambda);
    p.mu = cfg.get_double("mu", p.mu);
    p.yield_stress = cfg.get_double("yield_stress", p.yield_stress);
    p.hardening = cfg.get_double("hardening", p.hardening);
    const long long steps = cfg.get_int("steps", 100);
    if (steps < 2) throw ConfigError("steps must be at least 2");
    ds = gen_j2_sequences(p, n, static_cast<int>(steps), cfg.get_double("amplitude", 0.02), seed);
  } else {
    throw ConfigError("unknown generator '" + gen + "' (neo-hookean | tensegrity | j2)");
  }
  write_dataset(out, ds);
  r["dataset"] = {{"path", out}, {"n", ds.n}, {"dim", ds.dim}, {"steps", ds.steps},
                  {"generator", ds.generator}, {"seed", ds.seed}};
  emit_report(r, cfg);
  return 0;
}

// ---------------------------------------------------------------- splits

struct Splits {
  Dataset train, val;
};

Splits load_splits(const Config& cfg) {
  const Dataset data = read_dataset(cfg.require("data"));
  Splits s;
  if (cfg.has("val_data")) {
    const Dataset val = read_dataset(cfg.get("val_data", ""));
    const std::size_t nt = cfg.has("n_train") ? positive_size(cfg, "n_train", 1) : data.n;
    const std::size_t nv = cfg.has("n_val") ? positive_size(cfg, "n_val", 1) : val.n;
    if (nt > data.n || nv > val.n) throw ConfigError("requested split exceeds dataset size");
    s.train = data.slice(0, nt);
    s.val = val.slice(0, nv);
  } else {
    const std::size_t nv = cfg.has("n_val") ? positive_size(cfg, "n_val", 1) : data.n / 5;
    const std::size_t nt = cfg.has("n_train") ? positive_size(cfg, "n_train", 1) : data.n - std::min(nv, data.n);
    if (nv == 0 || nt == 0 || nt + nv > data.n) throw ConfigError("requested split exceeds dataset size");
    s.train = data.slice(0, nt);
    s.val = data.slice(nt, nv);
  }
  return s;
}

ModelSpec spec_from(const Config& cfg, int dim, const std::string& fallback_kind) {
  ModelSpec spec;
  spec.kind = parse_model_kind(cfg.get("model", fallback_kind));
  spec.dim = dim;
  spec.symmetry = parse_symmetry(cfg.get("symmetry", "isotropic"));
  spec.hidden = parse_widths(cfg.get("hidden", "2x16"));
  spec.activation = parse_activation(cfg.get("activation", "tanh"));
  spec.rotation_wrapper = cfg.get_bool("rotation_wrapper", false);
  spec.penalty_weight = cfg.get_double("penalty_weight", spec.penalty_weight);
  return spec;
}

TrainConfig train_config(const Config& cfg, bool sequence = false) {
  TrainConfig tc;
  tc.epochs = static_cast<int>(cfg.get_int("epochs", sequence ? 500 : 2000));
  tc.batch_size = positive_size(cfg, "batch_size", static_cast<long long>(tc.batch_size));
  tc.adam.lr = cfg.get_double("lr", tc.adam.lr);
  tc.seed = cfg.get_u64("seed", 0);
  if (cfg.has("input_scaler")) tc.input_scaler = parse_scaler_kind(cfg.get("input_scaler", ""));
  if (cfg.has("output_scaler")) tc.output_scaler = parse_scaler_kind(cfg.get("output_scaler", ""));
  return tc;
}

double deg(double rad) { return rad * 180.0 / std::numbers::pi; }
double rad(double d) { return d * std::numbers::pi / 180.0; }

double wrap360(double d) {
  d = std::fmod(d, 360.0);
  return d < 0 ? d + 360.0 : d;
}

double error_mod45(double learned_deg, double true_deg) {
  double e = std::fmod(learned_deg - true_deg, 45.0);
  if (e < 0) e += 45.0;
  return std::min(e, 45.0 - e);
}

std::vector<double> rotation_params(const TrainedModel& m) {
  const Network net(m.spec);
  const auto off = static_cast<std::ptrdiff_t>(net.rotation_offset());
  return {m.params.begin() + off, m.params.begin() + off + net.rotation_size()};
}

// ---------------------------------------------------------------- train

int cmd_train(const Config& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const Splits s = load_splits(cfg);
  const ModelSpec spec = spec_from(cfg, s.train.dim, s.train.sequence ? "tfenn-gru" : "tfenn-ff");
  TrainConfig tc = train_config(cfg, s.train.sequence);
  if (cfg.has("initial_angle_deg")) {
    if (spec.dim != 2) throw ConfigError("initial_angle_deg applies to 2D wrappers");
    tc.initial_rotation = std::vector<double>{rad(cfg.get_double("initial_angle_deg", 0.0))};
  }
  const TrainResult res = train(spec, s.train, s.val, tc);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json r = report_header("train", cfg);
  r["seed"] = tc.seed;
  r["model"] = json::parse(spec.to_json());
  r["num_params"] = res.model.params.size();
  r["n_train"] = s.train.n;
  r["n_val"] = s.val.n;
  r["epochs"] = tc.epochs;
  r["final_val_loss"] = res.history.back().val_loss;
  r["min_val_loss"] = res.best_val_loss;
  r["best_epoch"] = res.best_epoch;
  if (spec.rotation_wrapper) r["rotation"] = rotation_params(res.model);
  if (cfg.get_bool("timing", false)) r["wall_time_s"] = wall;

  if (cfg.has("out")) {
    json meta = {{"provenance", provenance()}, {"config_hash", r["config_hash"]}, {"seed", tc.seed}};
    save_model(cfg.get("out", ""), res.model.to_file(meta.dump()));
  }
  if (cfg.has("history")) write_text(cfg.get("history", ""), history_csv(res.history));
  emit_report(r, cfg);
  return 0;
}

// ---------------------------------------------------------------- eval / symtest

SymmetryClass class_for(const Config& cfg, const TrainedModel& m) {
  const std::string name = cfg.get("symmetry", "");
  return {name.empty() ? m.spec.symmetry : parse_symmetry(name), m.spec.dim};
}

int cmd_eval(const Config& cfg) {
  const TrainedModel model = TrainedModel::from_file(load_model(cfg.require("model_file")));
  const Dataset data = read_dataset(cfg.require("data"));
  if (data.dim != model.spec.dim) throw ConfigError("dataset dimension does not match model");
  if (data.sequence != model.spec.is_recurrent()) throw ConfigError("dataset kind does not match model");

  const std::vector<double> pred = model.predict(data.inputs, data.n, data.steps);
  const int m = data.io();
  std::vector<double> sq(m, 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - data.outputs[i];
    sq[i % m] += d * d;
  }
  std::vector<double> rmse(m);
  const double count = static_cast<double>(data.n) * data.steps;
  for (int c = 0; c < m; ++c) rmse[c] = std::sqrt(sq[c] / count);

  json r = report_header("eval", cfg);
  r["n"] = data.n;
  r["loss"] = validation_loss(model, data);
  r["rmse_mandel"] = rmse;
  if (cfg.has("symmetry")) {
    const long long n_sym = cfg.get_int("n_sym", 200);
    if (n_sym < 1) throw ConfigError("n_sym must be positive");
    Rng rng(cfg.get_u64("seed", 0));
    SymmetryErrorOptions opts;
    opts.steps = static_cast<int>(cfg.get_int("steps", 10));
    const SymmetryClass cls = class_for(cfg, model);
    r["symmetry"] = to_string(cls.kind);
    r["eps_sym"] = symmetry_error(model, cls, static_cast<int>(n_sym), rng, opts);
  }
  emit_report(r, cfg);
  return 0;
}

int cmd_symtest(const Config& cfg) {
  const long long n = cfg.get_int("n", 200);
  if (n < 1) throw ConfigError("symtest needs n >= 1");
  const TrainedModel model = TrainedModel::from_file(load_model(cfg.require("model_file")));
  const SymmetryClass cls = class_for(cfg, model);
  const std::uint64_t seed = cfg.get_u64("seed", 0);
  SymmetryErrorOptions opts;
  opts.steps = static_cast<int>(cfg.get_int("steps", 10));
  opts.eig_low = cfg.get_double("eig_low", opts.eig_low);
  opts.eig_high = cfg.get_double("eig_high", opts.eig_high);
  Dataset inputs;
  if (cfg.has("data")) {
    inputs = read_dataset(cfg.get("data", ""));
    opts.inputs = &inputs;
  }
  Rng rng(seed);
  json r = report_header("symtest", cfg);
  r["symmetry"] = to_string(cls.kind);
  r["n"] = n;
  r["seed"] = seed;
  r["eps_sym"] = symmetry_error(model, cls, static_cast<int>(n), rng, opts);
  emit_report(r, cfg);
  return 0;
}

// ---------------------------------------------------------------- discover

int cmd_discover(const Config& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const Splits s = load_splits(cfg);
  if (s.train.sequence) throw ConfigError("discover expects a pair dataset");
  Config base = cfg;
  base.set("model", "tfenn-ff");
  base.set("rotation_wrapper", "true");
  if (!cfg.has("symmetry")) base.set("symmetry", "cubic");
  const ModelSpec spec = spec_from(base, s.train.dim, "tfenn-ff");
  const std::vector<long long> seeds = cfg.get_int_list("seeds", {1, 2, 3, 4, 5});
  if (seeds.empty()) throw ConfigError("seeds list is empty");
  const bool planar = spec.dim == 2;
  const bool have_truth = cfg.has("true_angle_deg");
  const double truth = cfg.get_double("true_angle_deg", 0.0);
  const double tol = cfg.get_double("tolerance_deg", 0.1);
  if (have_truth && !planar) throw ConfigError("true_angle_deg applies to 2D datasets");

  json runs = json::array();
  std::vector<double> ok_losses;
  for (long long seed : seeds) {
    if (seed < 0) throw ConfigError("seeds must be non-negative");
    Config c = base;
    c.set("seed", std::to_string(seed));
    TrainConfig tc = train_config(c);
    if (cfg.has("initial_angle_deg")) {
      if (!planar) throw ConfigError("initial_angle_deg applies to 2D datasets");
      tc.initial_rotation = std::vector<double>{rad(cfg.get_double("initial_angle_deg", 0.0))};
    }
    const TrainResult res = train(spec, s.train, s.val, tc);
    const Network net(spec);
    const auto off = static_cast<std::ptrdiff_t>(net.rotation_offset());
    const std::vector<double> init(res.initial_params.begin() + off,
                                   res.initial_params.begin() + off + net.rotation_size());
    const std::vector<double> learned = rotation_params(res.model);
    json run = {{"seed", seed}, {"final_val_loss", res.best_val_loss}, {"best_epoch", res.best_epoch}};
    if (planar) {
      run["initial_angle_deg"] = wrap360(deg(init[0]));
      run["learned_angle_deg"] = wrap360(deg(learned[0]));
      if (have_truth) {
        const double err = error_mod45(deg(learned[0]), truth);
        run["error_mod45_deg"] = err;
        run["recovered"] = err <= tol;
        if (err <= tol) ok_losses.push_back(res.best_val_loss);
      }
    } else {
      Eigen::Vector4d q(learned[0], learned[1], learned[2], learned[3]);
      q.normalize();
      run["initial_quaternion"] = init;
      run["learned_quaternion"] = std::vector<double>{q[0], q[1], q[2], q[3]};
    }
    runs.push_back(run);
  }

  json r = report_header("discover", cfg);
  r["model"] = json::parse(spec.to_json());
  r["runs"] = runs;
  if (have_truth) {
    r["recovered"] = ok_losses.size();
    if (!ok_losses.empty()) {
      std::vector<double> sorted = ok_losses;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t k = sorted.size();
      const double median = k % 2 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
      r["median_recovered_loss"] = median;
      bool flagged = true;
      for (const auto& run : runs)
        if (!run["recovered"].get<bool>() && run["final_val_loss"].get<double>() < 100.0 * median) flagged = false;
      r["failures_flagged_by_loss"] = flagged;
    }
  }
  if (cfg.get_bool("timing", false))
    r["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  emit_report(r, cfg);
  return 0;
}

void apply_thread_env() {
  if (const char* t = std::getenv("TFENN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(t, &end, 10);
    if (*t == '\0' || *end != '\0' || v < 1) throw ConfigError("TFENN_THREADS must be a positive integer");
    omp_set_num_threads(static_cast<int>(v));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor feature equivariant networks: data, training and symmetry audits"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tfenn::provenance());

  Sub gen{app.add_subcommand("gen", "generate a dataset (neo-hookean | tensegrity | j2)")};
  Sub trn{app.add_subcommand("train", "train a model")};
  Sub evl{app.add_subcommand("eval", "evaluate a model on a dataset")};
  Sub sym{app.add_subcommand("symtest", "measure the symmetry error of a model")};
  Sub dis{app.add_subcommand("discover", "learn the symmetry frame of a rotated dataset")};
  add_keys(gen, kGenKeys, {"generator"});
  add_keys(trn, kTrainKeys);
  add_keys(evl, kEvalKeys);
  add_keys(sym, kSymtestKeys);
  add_keys(dis, kDiscoverKeys);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    apply_thread_env();
    if (*gen.app) return cmd_gen(merged_config(gen, kGenKeys, {"generator"}));
    if (*trn.app) return cmd_train(merged_config(trn, kTrainKeys));
    if (*evl.app) return cmd_eval(merged_config(evl, kEvalKeys));
    if (*sym.app) return cmd_symtest(merged_config(sym, kSymtestKeys));
    if (*dis.app) return cmd_discover(merged_config(dis, kDiscoverKeys));
  } catch (const tfenn::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const tfenn::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::domain_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
