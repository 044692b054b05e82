// gradsched: solve, batch, validate and oracle commands.

#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradsched/harness.hpp"

namespace {

using gradsched::RunConfig;

// Config overrides are collected first and applied on top of the base config
// (defaults, or --config) once parsing has finished.
class ConfigFlags {
 public:
  explicit ConfigFlags(CLI::App* app) : app_(app) {
    const RunConfig d;
    app_->add_option("--config", config_path_, "Load settings from a summary or config JSON; flags override it");

    real("--beta", "Initial makespan sharpness", d.relax.beta, [](RunConfig& c) -> double& { return c.relax.beta; });
    real("--tau", "Running-grid sharpness", d.relax.tau, [](RunConfig& c) -> double& { return c.relax.tau; });
    real("--lambda-p", "Initial precedence penalty", d.relax.lambda_p,
         [](RunConfig& c) -> double& { return c.relax.lambda_p; });
    real("--lambda-r", "Initial resource penalty", d.relax.lambda_r,
         [](RunConfig& c) -> double& { return c.relax.lambda_r; });
    auto lambda_h = std::make_shared<double>(0.0);
    auto* h = app_->add_option("--lambda-h", *lambda_h, "Fixed horizon penalty (default: track lambda-r)");
    appliers_.push_back([h, lambda_h](RunConfig& c) {
      if (h->count()) c.relax.lambda_h = *lambda_h;
    });
    flag("--precedence-only", "Drop the resource and horizon terms",
         [](RunConfig& c) -> bool& { return c.relax.precedence_only; });

    real("--lr0", "Initial learning rate", d.opt.lr0, [](RunConfig& c) -> double& { return c.opt.lr0; });
    real("--adam-beta1", "Adam first-moment decay", d.opt.adam_beta1,
         [](RunConfig& c) -> double& { return c.opt.adam_beta1; });
    real("--adam-beta2", "Adam second-moment decay", d.opt.adam_beta2,
         [](RunConfig& c) -> double& { return c.opt.adam_beta2; });
    real("--adam-eps", "Adam denominator epsilon", d.opt.adam_eps,
         [](RunConfig& c) -> double& { return c.opt.adam_eps; });
    integer("--epochs,--max-epochs", "Epoch budget", d.opt.max_epochs,
            [](RunConfig& c) -> int& { return c.opt.max_epochs; });
    integer("--reheat-period", "Epochs per cosine restart", d.opt.reheat_period,
            [](RunConfig& c) -> int& { return c.opt.reheat_period; });
    integer("--plateau-window", "Epochs without improvement before perturbation", d.opt.plateau_window,
            [](RunConfig& c) -> int& { return c.opt.plateau_window; });
    real("--perturb-sigma", "Perturbation standard deviation", d.opt.perturb_sigma,
         [](RunConfig& c) -> double& { return c.opt.perturb_sigma; });
    real("--stop-violation-eps", "Early-stop violation threshold", d.opt.stop_violation_eps,
         [](RunConfig& c) -> double& { return c.opt.stop_violation_eps; });
    real("--init-spread", "Initial starts drawn from U(0.5, init-spread * horizon)", d.opt.init_spread,
         [](RunConfig& c) -> double& { return c.opt.init_spread; });
    real("--beta-final", "Makespan sharpness at the last epoch", d.opt.beta_final,
         [](RunConfig& c) -> double& { return c.opt.beta_final; });
    flag("--tau-ramp", "Ramp tau linearly from tau-start to tau-end",
         [](RunConfig& c) -> bool& { return c.opt.tau_ramp; });
    real("--tau-start", "First tau of the ramp", d.opt.tau_start, [](RunConfig& c) -> double& { return c.opt.tau_start; });
    real("--tau-end", "Last tau of the ramp", d.opt.tau_end, [](RunConfig& c) -> double& { return c.opt.tau_end; });
    real("--clip-norm", "Gradient norm clip", d.opt.clip_norm, [](RunConfig& c) -> double& { return c.opt.clip_norm; });
    integer("--stable-window", "Epochs the makespan must stay put before an early stop", d.opt.stable_window,
            [](RunConfig& c) -> int& { return c.opt.stable_window; });
    real("--stable-tol", "Makespan range allowed inside the stable window", d.opt.stable_tol,
         [](RunConfig& c) -> double& { return c.opt.stable_tol; });
    real("--improvement-tol", "Loss decrease that resets the plateau counter", d.opt.improvement_tol,
         [](RunConfig& c) -> double& { return c.opt.improvement_tol; });
    flag("--repair", "Right-shift repair of rounded candidates", [](RunConfig& c) -> bool& { return c.opt.repair; });

    integer("--lookback", "Penalty controller window", d.penalty.lookback,
            [](RunConfig& c) -> int& { return c.penalty.lookback; });
    real("--escalate-factor", "Penalty escalation factor", d.penalty.escalate_factor,
         [](RunConfig& c) -> double& { return c.penalty.escalate_factor; });
    real("--reduce-factor", "Penalty reduction factor", d.penalty.reduce_factor,
         [](RunConfig& c) -> double& { return c.penalty.reduce_factor; });
    real("--recover-factor", "Penalty recovery factor", d.penalty.recover_factor,
         [](RunConfig& c) -> double& { return c.penalty.recover_factor; });
    real("--small-violation-eps", "Violation treated as satisfied", d.penalty.small_violation_eps,
         [](RunConfig& c) -> double& { return c.penalty.small_violation_eps; });
    real("--stable-rel-change", "Relative change treated as stable", d.penalty.stable_rel_change,
         [](RunConfig& c) -> double& { return c.penalty.stable_rel_change; });
    real("--lambda-min", "Lower penalty clamp", d.penalty.lambda_min,
         [](RunConfig& c) -> double& { return c.penalty.lambda_min; });
    real("--lambda-max", "Upper penalty clamp", d.penalty.lambda_max,
         [](RunConfig& c) -> double& { return c.penalty.lambda_max; });
    integer("--update-period", "Epochs between penalty decisions", d.penalty.update_period,
            [](RunConfig& c) -> int& { return c.penalty.update_period; });
  }

  RunConfig resolve() const {
    RunConfig c;
    if (config_path_) {
      const auto doc = nlohmann::ordered_json::parse(gradsched::read_text_file(*config_path_));
      c = gradsched::config_from_json(doc.contains("config") ? doc["config"] : doc);
    }
    for (const auto& apply : appliers_) apply(c);
    return c;
  }

 private:
  template <typename T>
  void value(const std::string& name, const std::string& help, T fallback, std::function<T&(RunConfig&)> field) {
    auto store = std::make_shared<T>(fallback);
    auto* opt = app_->add_option(name, *store, help)->default_val(fallback);
    appliers_.push_back([opt, store, field](RunConfig& c) {
      if (opt->count()) field(c) = *store;
    });
  }
  void real(const std::string& n, const std::string& h, double d, std::function<double&(RunConfig&)> f) {
    value<double>(n, h, d, std::move(f));
  }
  void integer(const std::string& n, const std::string& h, int d, std::function<int&(RunConfig&)> f) {
    value<int>(n, h, d, std::move(f));
  }
  void flag(const std::string& name, const std::string& help, std::function<bool&(RunConfig&)> field) {
    auto* opt = app_->add_flag(name, help);
    appliers_.push_back([opt, field](RunConfig& c) {
      if (opt->count()) field(c) = true;
    });
  }

  CLI::App* app_;
  std::optional<std::string> config_path_;
  std::vector<std::function<void(RunConfig&)>> appliers_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-based resource-constrained project scheduling"};
  app.require_subcommand(1);

  auto* solve = app.add_subcommand("solve", "Solve one .sm instance");
  gradsched::SolveOptions solve_opts;
  solve->add_option("instance", solve_opts.path, "PSPLIB .sm file")->required();
  solve->add_option("--seed", solve_opts.seed, "Solver seed")->default_val(1);
  solve->add_option("--trace", solve_opts.trace_path, "Write the per-epoch trace CSV here");
  solve->add_option("--out", solve_opts.out_path, "Write the summary JSON here instead of stdout");
  ConfigFlags solve_cfg(solve);

  auto* batch = app.add_subcommand("batch", "Solve every .sm file in a directory");
  gradsched::BatchOptions batch_opts;
  std::optional<std::uint64_t> batch_seed;
  batch->add_option("dir", batch_opts.dir, "Directory of .sm files")->required();
  batch->add_option("--seeds", batch_opts.seeds, "Comma-separated seed list")->delimiter(',');
  batch->add_option("--seed", batch_seed, "Single seed (shorthand for --seeds N)");
  batch->add_option("--limit", batch_opts.limit, "Only the first N files in name order");
  batch->add_option("--jobs", batch_opts.jobs, "Concurrent solves")->default_val(1)->check(CLI::PositiveNumber);
  batch->add_option("--out", batch_opts.out_dir, "Directory for runs.csv and aggregate.json");
  batch->add_option("--trace", batch_opts.trace_dir, "Directory for per-run trace CSVs");
  ConfigFlags batch_cfg(batch);

  auto* validate = app.add_subcommand("validate", "Check a schedule JSON against an instance");
  std::string validate_instance, validate_schedule;
  validate->add_option("instance", validate_instance, "PSPLIB .sm file")->required();
  validate->add_option("schedule", validate_schedule, "Schedule or summary JSON")->required();

  auto* oracle = app.add_subcommand("oracle", "Classical bounds and schedules");
  std::string oracle_instance, oracle_which;
  oracle->add_option("instance", oracle_instance, "PSPLIB .sm file")->required();
  oracle->add_option("which", oracle_which, "cp, ssgs or brute")->required()->check(CLI::IsMember({"cp", "ssgs", "brute"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? gradsched::kExitOk : gradsched::kExitError;
  }

  try {
    if (*solve) {
      solve_opts.config = solve_cfg.resolve();
      return gradsched::cmd_solve(solve_opts, std::cout, std::cerr);
    }
    if (*batch) {
      batch_opts.config = batch_cfg.resolve();
      if (batch_seed) batch_opts.seeds = {*batch_seed};
      return gradsched::cmd_batch(batch_opts, std::cout, std::cerr);
    }
    if (*validate) return gradsched::cmd_validate(validate_instance, validate_schedule, std::cout, std::cerr);
    if (*oracle) return gradsched::cmd_oracle(oracle_instance, oracle_which, std::cout, std::cerr);
  } catch (const std::exception& ex) {
    std::cerr << "gradsched: " << ex.what() << '\n';
    return gradsched::kExitError;
  }
  return gradsched::kExitError;
}
