#pragma once

// Command implementations behind the CLI: run summaries, trace CSV, config
// fingerprints and the solve/batch/validate/oracle commands. Every command
// writes to caller-supplied streams and returns its exit code.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradsched/error.hpp"
#include "gradsched/instance.hpp"
#include "gradsched/optimizer.hpp"
#include "gradsched/penalty.hpp"
#include "gradsched/relaxation.hpp"
#include "gradsched/schedule.hpp"

namespace gradsched {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNoFeasible = 2;

struct RunConfig {
  RelaxationConfig relax;
  OptimizerConfig opt;
  PenaltyControllerConfig penalty;
};

// ---------------------------------------------------------------------------
// Config serialization and fingerprint
// ---------------------------------------------------------------------------

// Every setting except the seed, in a fixed key order.
inline nlohmann::ordered_json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  auto& r = j["relaxation"];
  r["beta"] = c.relax.beta;
  r["tau"] = c.relax.tau;
  r["lambda_p"] = c.relax.lambda_p;
  r["lambda_r"] = c.relax.lambda_r;
  r["lambda_h"] = c.relax.lambda_h ? nlohmann::ordered_json(*c.relax.lambda_h) : nlohmann::ordered_json(nullptr);
  r["precedence_only"] = c.relax.precedence_only;
  auto& o = j["optimizer"];
  o["lr0"] = c.opt.lr0;
  o["adam_beta1"] = c.opt.adam_beta1;
  o["adam_beta2"] = c.opt.adam_beta2;
  o["adam_eps"] = c.opt.adam_eps;
  o["max_epochs"] = c.opt.max_epochs;
  o["reheat_period"] = c.opt.reheat_period;
  o["plateau_window"] = c.opt.plateau_window;
  o["perturb_sigma"] = c.opt.perturb_sigma;
  o["stop_violation_eps"] = c.opt.stop_violation_eps;
  o["init_spread"] = c.opt.init_spread;
  o["beta_final"] = c.opt.beta_final;
  o["tau_ramp"] = c.opt.tau_ramp;
  o["tau_start"] = c.opt.tau_start;
  o["tau_end"] = c.opt.tau_end;
  o["clip_norm"] = c.opt.clip_norm;
  o["stable_window"] = c.opt.stable_window;
  o["stable_tol"] = c.opt.stable_tol;
  o["improvement_tol"] = c.opt.improvement_tol;
  o["repair"] = c.opt.repair;
  auto& p = j["penalty"];
  p["lookback"] = c.penalty.lookback;
  p["escalate_factor"] = c.penalty.escalate_factor;
  p["reduce_factor"] = c.penalty.reduce_factor;
  p["recover_factor"] = c.penalty.recover_factor;
  p["small_violation_eps"] = c.penalty.small_violation_eps;
  p["stable_rel_change"] = c.penalty.stable_rel_change;
  p["lambda_min"] = c.penalty.lambda_min;
  p["lambda_max"] = c.penalty.lambda_max;
  p["update_period"] = c.penalty.update_period;
  return j;
}

// Inverse of config_to_json. Missing keys keep their defaults.
inline RunConfig config_from_json(const nlohmann::ordered_json& j) {
  RunConfig c;
  auto read = [](const nlohmann::ordered_json& obj, const char* key, auto& field) {
    if (obj.contains(key) && !obj[key].is_null()) field = obj[key].get<std::decay_t<decltype(field)>>();
  };
  try {
    if (j.contains("relaxation")) {
      const auto& r = j["relaxation"];
      read(r, "beta", c.relax.beta);
      read(r, "tau", c.relax.tau);
      read(r, "lambda_p", c.relax.lambda_p);
      read(r, "lambda_r", c.relax.lambda_r);
      if (r.contains("lambda_h") && !r["lambda_h"].is_null()) c.relax.lambda_h = r["lambda_h"].get<double>();
      read(r, "precedence_only", c.relax.precedence_only);
    }
    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      read(o, "lr0", c.opt.lr0);
      read(o, "adam_beta1", c.opt.adam_beta1);
      read(o, "adam_beta2", c.opt.adam_beta2);
      read(o, "adam_eps", c.opt.adam_eps);
      read(o, "max_epochs", c.opt.max_epochs);
      read(o, "reheat_period", c.opt.reheat_period);
      read(o, "plateau_window", c.opt.plateau_window);
      read(o, "perturb_sigma", c.opt.perturb_sigma);
      read(o, "stop_violation_eps", c.opt.stop_violation_eps);
      read(o, "init_spread", c.opt.init_spread);
      read(o, "beta_final", c.opt.beta_final);
      read(o, "tau_ramp", c.opt.tau_ramp);
      read(o, "tau_start", c.opt.tau_start);
      read(o, "tau_end", c.opt.tau_end);
      read(o, "clip_norm", c.opt.clip_norm);
      read(o, "stable_window", c.opt.stable_window);
      read(o, "stable_tol", c.opt.stable_tol);
      read(o, "improvement_tol", c.opt.improvement_tol);
      read(o, "repair", c.opt.repair);
    }
    if (j.contains("penalty")) {
      const auto& p = j["penalty"];
      read(p, "lookback", c.penalty.lookback);
      read(p, "escalate_factor", c.penalty.escalate_factor);
      read(p, "reduce_factor", c.penalty.reduce_factor);
      read(p, "recover_factor", c.penalty.recover_factor);
      read(p, "small_violation_eps", c.penalty.small_violation_eps);
      read(p, "stable_rel_change", c.penalty.stable_rel_change);
      read(p, "lambda_min", c.penalty.lambda_min);
      read(p, "lambda_max", c.penalty.lambda_max);
      read(p, "update_period", c.penalty.update_period);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed config JSON: ") + ex.what());
  }
  return c;
}

// 64-bit FNV-1a of the canonical config dump, as 16 hex digits.
inline std::string config_fingerprint(const RunConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_to_json(c).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Run summary
// ---------------------------------------------------------------------------

struct RunSummary {
  std::string instance;
  std::uint64_t seed = 0;
  std::string mode;  // "precedence-only" or "full"
  std::optional<int> best_feasible_makespan;
  int critical_path = 0;
  int ssgs_makespan = 0;
  std::optional<int> reference_makespan;
  std::int64_t epochs_run = 0;
  std::optional<std::int64_t> early_stop_epoch;
  double wall_clock_seconds = 0;
  double lambda_p = 0;
  double lambda_r = 0;
  std::string status;
  std::string message;
  int perturbations = 0;
  std::string config_fingerprint;
};

struct RunOutcome {
  RunSummary summary;
  SolveResult result;
};

inline RunOutcome run_instance(const ProjectInstance& inst, const RunConfig& config, std::uint64_t seed) {
  RunConfig c = config;
  c.opt.seed = seed;
  RunOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  out.result = solve(inst, c.relax, c.opt, c.penalty);
  const auto t1 = std::chrono::steady_clock::now();

  RunSummary& s = out.summary;
  s.instance = inst.name;
  s.seed = seed;
  s.mode = c.relax.precedence_only ? "precedence-only" : "full";
  if (out.result.best_feasible) s.best_feasible_makespan = out.result.best_feasible->makespan;
  s.critical_path = critical_path(inst);
  s.ssgs_makespan = ssgs(inst).makespan;
  s.epochs_run = out.result.epochs_run;
  s.early_stop_epoch = out.result.early_stop_epoch;
  s.wall_clock_seconds = std::chrono::duration<double>(t1 - t0).count();
  s.lambda_p = out.result.lambda_p;
  s.lambda_r = out.result.lambda_r;
  s.status = to_string(out.result.status);
  s.message = out.result.message;
  s.perturbations = out.result.perturbations;
  s.config_fingerprint = config_fingerprint(c);
  return out;
}

template <typename T>
nlohmann::ordered_json optional_json(const std::optional<T>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

// Summary document. Only "wall_clock_seconds" differs between identical runs.
inline nlohmann::ordered_json summary_to_json(const RunOutcome& run, const ProjectInstance& inst, const RunConfig& config) {
  const RunSummary& s = run.summary;
  nlohmann::ordered_json j;
  j["instance"] = s.instance;
  j["seed"] = s.seed;
  j["mode"] = s.mode;
  j["status"] = s.status;
  j["best_feasible_makespan"] = optional_json(s.best_feasible_makespan);
  j["critical_path"] = s.critical_path;
  j["ssgs_makespan"] = s.ssgs_makespan;
  j["reference_makespan"] = optional_json(s.reference_makespan);
  j["epochs_run"] = s.epochs_run;
  j["early_stop_epoch"] = optional_json(s.early_stop_epoch);
  j["wall_clock_seconds"] = s.wall_clock_seconds;
  j["lambda_p"] = s.lambda_p;
  j["lambda_r"] = s.lambda_r;
  j["perturbations"] = s.perturbations;
  if (!s.message.empty()) j["message"] = s.message;
  j["config_fingerprint"] = s.config_fingerprint;
  j["config"] = config_to_json(config);
  j["schedule"] = run.result.best_feasible ? schedule_to_json(*run.result.best_feasible, inst)
                                           : nlohmann::ordered_json(nullptr);
  auto events = nlohmann::ordered_json::array();
  for (const auto& e : run.result.penalty_events)
    events.push_back({{"epoch", e.epoch},
                      {"precedence", to_string(e.precedence)},
                      {"resource", to_string(e.resource)},
                      {"lambda_p", e.lambda_p},
                      {"lambda_r", e.lambda_r}});
  j["penalty_events"] = std::move(events);
  return j;
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

inline constexpr const char* kTraceColumns =
    "epoch,loss,makespan_soft,prec_viol_max,res_viol_max,lambda_p,lambda_r,lr,beta,best_feasible_makespan";

// Shortest round-trip representation.
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trace_csv(std::ostream& os, const ConvergenceTrace& trace) {
  os << kTraceColumns << '\n';
  for (const auto& r : trace) {
    os << r.epoch << ',' << format_real(r.loss) << ',' << format_real(r.makespan_soft) << ','
       << format_real(r.prec_viol_max) << ',' << format_real(r.res_viol_max) << ',' << format_real(r.lambda_p) << ','
       << format_real(r.lambda_r) << ',' << format_real(r.lr) << ',' << format_real(r.beta) << ',';
    if (r.best_feasible_makespan) os << *r.best_feasible_makespan;
    os << '\n';
  }
}

inline std::string trace_csv(const ConvergenceTrace& trace) {
  std::ostringstream os;
  write_trace_csv(os, trace);
  return os.str();
}

inline constexpr const char* kBatchColumns =
    "instance,seed,mode,status,best_feasible_makespan,critical_path,ssgs_makespan,epochs_run,early_stop_epoch,"
    "wall_clock_seconds,lambda_p,lambda_r,config_fingerprint";

inline void write_batch_row(std::ostream& os, const RunSummary& s) {
  os << s.instance << ',' << s.seed << ',' << s.mode << ',' << s.status << ',';
  if (s.best_feasible_makespan) os << *s.best_feasible_makespan;
  os << ',' << s.critical_path << ',' << s.ssgs_makespan << ',' << s.epochs_run << ',';
  if (s.early_stop_epoch) os << *s.early_stop_epoch;
  os << ',' << format_real(s.wall_clock_seconds) << ',' << format_real(s.lambda_p) << ',' << format_real(s.lambda_r)
     << ',' << s.config_fingerprint << '\n';
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << text;
  if (!f) throw Error("cannot write " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

struct SolveOptions {
  std::string path;
  std::uint64_t seed = 1;
  RunConfig config;
  std::optional<std::string> trace_path;
  std::optional<std::string> out_path;
};

// 0: feasible schedule found, 2: none found, 1: error.
inline int cmd_solve(const SolveOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const ProjectInstance inst = load_instance(opts.path);
    const RunOutcome run = run_instance(inst, opts.config, opts.seed);
    if (opts.trace_path) write_text_file(*opts.trace_path, trace_csv(run.result.trace));
    const std::string doc = summary_to_json(run, inst, opts.config).dump(2) + "\n";
    if (opts.out_path)
      write_text_file(*opts.out_path, doc);
    else
      out << doc;
    if (!run.summary.message.empty()) err << "solve: " << run.summary.message << '\n';
    return run.result.best_feasible ? kExitOk : kExitNoFeasible;
  } catch (const std::exception& ex) {
    err << "solve: " << ex.what() << '\n';
    return kExitError;
  }
}

struct BatchOptions {
  std::string dir;
  std::vector<std::uint64_t> seeds{1};
  std::optional<int> limit;
  int jobs = 1;
  RunConfig config;
  // Directory for runs.csv and aggregate.json; stdout receives the aggregate otherwise.
  std::optional<std::string> out_dir;
  // Directory for one trace CSV per (instance, seed).
  std::optional<std::string> trace_dir;
};

struct BatchResult {
  std::vector<RunSummary> runs;  // ordered by instance file name, then seed list order
  nlohmann::ordered_json aggregate;
};

// Sorted `.sm` files in `dir`, truncated to `limit`.
inline std::vector<std::filesystem::path> list_instances(const std::string& dir, std::optional<int> limit) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".sm") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (limit && *limit >= 0 && files.size() > static_cast<std::size_t>(*limit)) files.resize(static_cast<std::size_t>(*limit));
  return files;
}

inline nlohmann::ordered_json aggregate_runs(const std::vector<RunSummary>& runs, std::size_t instances) {
  int feasible = 0, at_bound = 0;
  double gap_sum = 0, wall_sum = 0;
  for (const auto& r : runs) {
    wall_sum += r.wall_clock_seconds;
    if (!r.best_feasible_makespan) continue;
    ++feasible;
    if (*r.best_feasible_makespan == r.critical_path) ++at_bound;
    if (r.critical_path > 0)
      gap_sum += static_cast<double>(*r.best_feasible_makespan - r.critical_path) / r.critical_path;
  }
  nlohmann::ordered_json j;
  j["instances"] = instances;
  j["runs"] = runs.size();
  j["feasible"] = feasible;
  j["at_critical_path"] = at_bound;
  // Relative gap (makespan - cp) / cp averaged over feasible runs.
  j["mean_gap_to_critical_path"] = feasible ? nlohmann::ordered_json(gap_sum / feasible) : nlohmann::ordered_json(nullptr);
  j["mean_wall_clock_seconds"] = runs.empty() ? 0.0 : wall_sum / static_cast<double>(runs.size());
  return j;
}

// Runs every (instance, seed) pair on up to `jobs` threads. Throws on an
// empty directory or an unparseable file.
inline BatchResult run_batch(const BatchOptions& opts) {
  const auto files = list_instances(opts.dir, opts.limit);
  if (files.empty()) throw Error("no .sm files in " + opts.dir);
  if (opts.seeds.empty()) throw InvalidArgument("batch needs at least one seed");
  std::vector<ProjectInstance> instances;
  instances.reserve(files.size());
  for (const auto& f : files) instances.push_back(load_instance(f.string()));

  const std::size_t total = instances.size() * opts.seeds.size();
  std::vector<RunSummary> runs(total);
  std::vector<std::string> errors(total);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < total; k = next++) {
      const auto& inst = instances[k / opts.seeds.size()];
      const std::uint64_t seed = opts.seeds[k % opts.seeds.size()];
      try {
        const RunOutcome run = run_instance(inst, opts.config, seed);
        runs[k] = run.summary;
        if (opts.trace_dir)
          write_text_file((std::filesystem::path(*opts.trace_dir) / (inst.name + "_s" + std::to_string(seed) + ".csv")).string(),
                          trace_csv(run.result.trace));
      } catch (const std::exception& ex) {
        errors[k] = inst.name + " seed " + std::to_string(seed) + ": " + ex.what();
      }
    }
  };
  const int jobs = std::clamp(opts.jobs, 1, static_cast<int>(std::min<std::size_t>(total, 256)));
  std::vector<std::thread> pool;
  for (int i = 1; i < jobs; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (!e.empty()) throw Error(e);

  BatchResult result;
  result.runs = std::move(runs);
  result.aggregate = aggregate_runs(result.runs, instances.size());
  return result;
}

// 0: every run found a feasible schedule, 2: some did not, 1: error.
inline int cmd_batch(const BatchOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const BatchResult batch = run_batch(opts);
    if (opts.out_dir) {
      std::filesystem::create_directories(*opts.out_dir);
      std::ostringstream csv;
      csv << kBatchColumns << '\n';
      for (const auto& r : batch.runs) write_batch_row(csv, r);
      write_text_file((std::filesystem::path(*opts.out_dir) / "runs.csv").string(), csv.str());
      write_text_file((std::filesystem::path(*opts.out_dir) / "aggregate.json").string(), batch.aggregate.dump(2) + "\n");
    }
    out << batch.aggregate.dump(2) << '\n';
    const bool all_feasible = batch.aggregate["feasible"].get<std::size_t>() == batch.runs.size();
    return all_feasible ? kExitOk : kExitNoFeasible;
  } catch (const std::exception& ex) {
    err << "batch: " << ex.what() << '\n';
    return kExitError;
  }
}

// 0: feasible, 2: infeasible, 1: unreadable input or activity-count mismatch.
inline int cmd_validate(const std::string& instance_path, const std::string& schedule_path, std::ostream& out,
                        std::ostream& err) {
  try {
    const ProjectInstance inst = load_instance(instance_path);
    nlohmann::ordered_json doc;
    try {
      doc = nlohmann::ordered_json::parse(read_text_file(schedule_path));
    } catch (const nlohmann::json::parse_error& ex) {
      throw ParseError(schedule_path + ": " + ex.what());
    }
    const auto starts = schedule_starts_from_json(doc);
    if (starts.size() != static_cast<std::size_t>(inst.n))
      throw InvalidArgument("schedule has " + std::to_string(starts.size()) + " start times, instance has " +
                            std::to_string(inst.n) + " activities");
    if (std::any_of(starts.begin(), starts.end(), [](int s) { return s < 0; }))
      throw InvalidArgument("schedule has a negative start time");
    Schedule sched{starts, compute_makespan(starts, inst)};
    const FeasibilityReport report = check_feasible(sched, inst);
    nlohmann::ordered_json j;
    j["instance"] = inst.name;
    j["makespan"] = sched.makespan;
    const auto details = to_json(report);
    for (const auto& [key, value] : details.items()) j[key] = value;
    out << j.dump(2) << '\n';
    return report.feasible() ? kExitOk : kExitNoFeasible;
  } catch (const std::exception& ex) {
    err << "validate: " << ex.what() << '\n';
    return kExitError;
  }
}

// which: "cp", "ssgs" or "brute".
inline int cmd_oracle(const std::string& instance_path, const std::string& which, std::ostream& out, std::ostream& err,
                      BruteForceLimits limits = {}) {
  try {
    const ProjectInstance inst = load_instance(instance_path);
    nlohmann::ordered_json j;
    if (which == "cp") {
      j["instance"] = inst.name;
      j["makespan"] = critical_path(inst);
      j["start"] = earliest_starts(inst, *topological_order(inst));
    } else if (which == "ssgs") {
      j = schedule_to_json(ssgs(inst), inst);
    } else if (which == "brute") {
      j = schedule_to_json(brute_force_optimal(inst, limits), inst);
    } else {
      throw InvalidArgument("unknown oracle '" + which + "' (expected cp, ssgs or brute)");
    }
    nlohmann::ordered_json tagged;
    tagged["oracle"] = which;
    for (auto& [key, value] : j.items()) tagged[key] = value;
    out << tagged.dump(2) << '\n';
    return kExitOk;
  } catch (const std::exception& ex) {
    err << "oracle: " << ex.what() << '\n';
    return kExitError;
  }
}

}  // namespace gradsched
