#pragma once

// Gradient-descent solver: Adam with cosine warm restarts, a geometric beta
// ramp, adaptive penalties, plateau perturbation, per-epoch feasible
// candidate tracking and early stopping.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gradsched/error.hpp"
#include "gradsched/instance.hpp"
#include "gradsched/penalty.hpp"
#include "gradsched/relaxation.hpp"
#include "gradsched/schedule.hpp"

namespace gradsched {

struct OptimizerConfig {
  double lr0 = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_epochs = 5000;
  int reheat_period = 500;
  int plateau_window = 200;
  double perturb_sigma = 0.01;
  double stop_violation_eps = 1e-3;
  std::uint64_t seed = 1;
  // Initial starts are drawn from U(0.5, init_spread * T).
  double init_spread = 0.1;

  // Makespan sharpness ramps geometrically from the relaxation's beta to
  // beta_final over max_epochs.
  double beta_final = 20.0;
  // Optional linear ramp of the running-grid sharpness from tau_start to tau_end.
  bool tau_ramp = false;
  double tau_start = 2.0;
  double tau_end = 8.0;
  double clip_norm = 1e3;
  // Early stop also requires the relaxed makespan to move less than
  // stable_tol over the last stable_window epochs.
  int stable_window = 50;
  double stable_tol = 1e-3;
  double improvement_tol = 1e-6;
  // Right-shift repair of rounded candidates (off: feasibility reflects the relaxation alone).
  bool repair = false;

  void validate() const {
    if (!(lr0 > 0)) throw InvalidArgument("lr0 must be positive");
    if (!(0 < adam_beta1 && adam_beta1 < adam_beta2 && adam_beta2 < 1))
      throw InvalidArgument("need 0 < adam_beta1 < adam_beta2 < 1");
    if (!(adam_eps > 0)) throw InvalidArgument("adam_eps must be positive");
    if (max_epochs < 1 || reheat_period < 1 || plateau_window < 1 || stable_window < 1)
      throw InvalidArgument("epoch counts and periods must be at least 1");
    if (!(perturb_sigma >= 0) || !(stop_violation_eps > 0) || !(clip_norm > 0))
      throw InvalidArgument("perturb_sigma, stop_violation_eps and clip_norm out of range");
    if (!(beta_final > 0) || !(tau_start > 0) || !(tau_end > 0))
      throw InvalidArgument("sharpness schedule endpoints must be positive");
  }
};

struct SolverState {
  std::vector<double> theta;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::int64_t adam_steps = 0;
  std::int64_t epoch = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
  std::optional<Schedule> best_feasible;
  std::mt19937_64 rng;
};

struct TraceRecord {
  std::int64_t epoch = 0;
  double loss = 0;
  double makespan_soft = 0;
  double prec_viol_max = 0;
  double res_viol_max = 0;
  double lambda_p = 0;
  double lambda_r = 0;
  double lr = 0;
  double beta = 0;
  std::optional<int> best_feasible_makespan;
  // Not part of the CSV schema.
  bool rounded_feasible = false;
  std::string decision;
};

using ConvergenceTrace = std::vector<TraceRecord>;

// ---------------------------------------------------------------------------
// Schedules of the hyperparameters
// ---------------------------------------------------------------------------

// Cosine decay from lr0 to lr0/100 inside each reheat period, restarting at lr0.
inline double lr_schedule(std::int64_t epoch, const OptimizerConfig& cfg) {
  const double phase = static_cast<double>(epoch % cfg.reheat_period) / static_cast<double>(cfg.reheat_period);
  return cfg.lr0 * (0.01 + 0.99 * (1.0 + std::cos(std::numbers::pi * phase)) / 2.0);
}

inline double beta_schedule(std::int64_t epoch, double beta_start, const OptimizerConfig& cfg) {
  if (cfg.max_epochs <= 1) return cfg.beta_final;
  const double frac = std::min(1.0, static_cast<double>(epoch) / static_cast<double>(cfg.max_epochs - 1));
  return beta_start * std::pow(cfg.beta_final / beta_start, frac);
}

inline double tau_schedule(std::int64_t epoch, double base_tau, const OptimizerConfig& cfg) {
  if (!cfg.tau_ramp) return base_tau;
  if (cfg.max_epochs <= 1) return cfg.tau_end;
  const double frac = std::min(1.0, static_cast<double>(epoch) / static_cast<double>(cfg.max_epochs - 1));
  return cfg.tau_start + (cfg.tau_end - cfg.tau_start) * frac;
}

// ---------------------------------------------------------------------------
// State operations
// ---------------------------------------------------------------------------

// theta_i = softplus^-1(u_i), u_i ~ U(0.5, init_spread * T).
inline SolverState init_state(const ProjectInstance& inst, const OptimizerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SolverState st;
  st.rng.seed(seed);
  const auto n = static_cast<std::size_t>(inst.n);
  const double hi = std::max(0.5, cfg.init_spread * inst.horizon);
  std::uniform_real_distribution<double> spread(0.5, hi);
  st.theta.resize(n);
  for (double& t : st.theta) t = inverse_softplus(hi > 0.5 ? spread(st.rng) : 0.5);
  st.adam_m.assign(n, 0.0);
  st.adam_v.assign(n, 0.0);
  return st;
}

// Bias-corrected Adam. Does not advance the epoch.
inline void adam_step(SolverState& st, std::span<const double> grad, double lr, const OptimizerConfig& cfg) {
  if (grad.size() != st.theta.size()) throw InvalidArgument("adam_step: gradient size mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw NonFiniteError("adam_step: non-finite gradient");
  ++st.adam_steps;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.adam_steps));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.adam_steps));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    st.adam_m[i] = b1 * st.adam_m[i] + (1.0 - b1) * grad[i];
    st.adam_v[i] = b2 * st.adam_v[i] + (1.0 - b2) * grad[i] * grad[i];
    const double mhat = st.adam_m[i] / c1;
    const double vhat = st.adam_v[i] / c2;
    st.theta[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
}

// Scales the gradient down to `max_norm` when its Euclidean norm exceeds it.
inline void clip_gradient(std::span<double> grad, double max_norm) {
  double sq = 0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm)
    for (double& g : grad) g *= max_norm / norm;
}

// Updates the plateau bookkeeping with this epoch's loss.
inline void note_loss(SolverState& st, double loss, const OptimizerConfig& cfg) {
  if (loss < st.best_loss - cfg.improvement_tol) {
    st.best_loss = loss;
    st.epochs_since_improvement = 0;
  } else {
    st.best_loss = std::min(st.best_loss, loss);
    ++st.epochs_since_improvement;
  }
}

// Adds N(0, sigma^2) to every parameter after plateau_window epochs without
// improvement. Returns whether noise was applied.
inline bool maybe_perturb(SolverState& st, const OptimizerConfig& cfg) {
  if (st.epochs_since_improvement < cfg.plateau_window) return false;
  std::normal_distribution<double> noise(0.0, cfg.perturb_sigma);
  for (double& t : st.theta) t += noise(st.rng);
  st.epochs_since_improvement = 0;
  return true;
}

// Rounds the relaxed starts and keeps the result if it is exactly feasible
// and strictly shorter than the stored candidate. Returns whether the
// rounded schedule (after optional repair) was feasible.
template <typename Real>
bool track_feasible(SolverState& st, const ProjectInstance& inst, std::span<const Real> starts,
                    bool repair = false) {
  Schedule cand = extract_schedule(starts, inst);
  if (repair) cand = repair_schedule(cand, inst);
  if (!is_feasible(cand, inst)) return false;
  if (!st.best_feasible || cand.makespan < st.best_feasible->makespan) st.best_feasible = std::move(cand);
  return true;
}

inline bool track_feasible(SolverState& st, const ProjectInstance& inst, bool repair = false) {
  const auto s = compute_start_times(std::span<const double>(st.theta));
  return track_feasible<double>(st, inst, s, repair);
}

// ---------------------------------------------------------------------------
// Solve
// ---------------------------------------------------------------------------

enum class SolveStatus { kBudgetExhausted, kEarlyStopped, kNonFinite };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kBudgetExhausted: return "budget_exhausted";
    case SolveStatus::kEarlyStopped: return "early_stopped";
    case SolveStatus::kNonFinite: return "non_finite";
  }
  return "unknown";
}

struct PenaltyEvent {
  std::int64_t epoch = 0;
  PenaltyDecision precedence = PenaltyDecision::kHold;
  PenaltyDecision resource = PenaltyDecision::kHold;
  double lambda_p = 0;
  double lambda_r = 0;
};

struct SolveResult {
  std::optional<Schedule> best_feasible;
  // After an early stop: the parameters of the stopping epoch. Otherwise the
  // parameters a further epoch would start from.
  std::vector<double> theta;
  ConvergenceTrace trace;
  SolveStatus status = SolveStatus::kBudgetExhausted;
  std::optional<std::int64_t> early_stop_epoch;
  std::int64_t epochs_run = 0;
  double lambda_p = 0;
  double lambda_r = 0;
  std::vector<PenaltyEvent> penalty_events;
  int perturbations = 0;
  std::string message;
};

// Relaxed (hard) makespan of the current start times.
inline double relaxed_makespan(std::span<const double> s, std::span<const double> d) {
  double m = 0;
  for (std::size_t i = 0; i < s.size(); ++i) m = std::max(m, s[i] + d[i]);
  return m;
}

// Epoch: evaluate loss and gradient -> track the rounded candidate -> record
// the trace row -> early-stop test -> penalty update -> clipped Adam step ->
// plateau perturbation. The stop test sees exactly the parameters whose
// violations and rounding it reports, and `theta` in the result is that state.
inline SolveResult solve(const ProjectInstance& inst, const RelaxationConfig& relax_cfg, const OptimizerConfig& opt_cfg,
                         const PenaltyControllerConfig& pen_cfg = {}) {
  relax_cfg.validate();
  opt_cfg.validate();
  pen_cfg.validate();
  if (const auto v = validate_instance(inst); !v.empty()) throw InvalidArgument("invalid instance: " + v.front().message);

  // Candidates are checked against the constraints actually being relaxed.
  const ProjectInstance checked = relax_cfg.precedence_only ? without_resources(inst) : inst;

  SolveResult result;
  SolverState st = init_state(inst, opt_cfg, opt_cfg.seed);
  RelaxationWorkspace<double> ws(inst);
  PenaltyController controller(pen_cfg, relax_cfg.lambda_p, relax_cfg.lambda_r, !relax_cfg.precedence_only);
  RelaxationConfig cfg = relax_cfg;
  std::vector<double> grad(st.theta.size());
  std::vector<double> starts;
  std::deque<double> recent_makespan;
  const auto durations = ws.durations();

  for (std::int64_t epoch = 0; epoch < opt_cfg.max_epochs; ++epoch) {
    st.epoch = epoch;
    const double lr = lr_schedule(epoch, opt_cfg);
    cfg.beta = beta_schedule(epoch, relax_cfg.beta, opt_cfg);
    cfg.tau = tau_schedule(epoch, relax_cfg.tau, opt_cfg);
    cfg.lambda_p = controller.lambda_p();
    cfg.lambda_r = controller.lambda_r();

    LossBreakdown loss;
    try {
      loss = evaluate<double>(st.theta, cfg, ws, grad);
    } catch (const NonFiniteError& ex) {
      result.status = SolveStatus::kNonFinite;
      result.message = std::string("epoch ") + std::to_string(epoch) + ": " + ex.what();
      break;
    }
    starts = compute_start_times(std::span<const double>(st.theta));
    const bool rounded_ok = track_feasible<double>(st, checked, starts, opt_cfg.repair);

    TraceRecord rec;
    rec.epoch = epoch;
    rec.loss = loss.total;
    rec.makespan_soft = loss.makespan_soft;
    rec.prec_viol_max = loss.max_prec_violation;
    rec.res_viol_max = loss.max_res_overshoot;
    rec.lambda_p = cfg.lambda_p;
    rec.lambda_r = cfg.effective_lambda_r();
    rec.lr = lr;
    rec.beta = cfg.beta;
    if (st.best_feasible) rec.best_feasible_makespan = st.best_feasible->makespan;
    rec.rounded_feasible = rounded_ok;
    result.epochs_run = epoch + 1;

    recent_makespan.push_back(relaxed_makespan(starts, durations));
    if (recent_makespan.size() > static_cast<std::size_t>(opt_cfg.stable_window)) recent_makespan.pop_front();
    const bool stabilized =
        recent_makespan.size() == static_cast<std::size_t>(opt_cfg.stable_window) &&
        *std::max_element(recent_makespan.begin(), recent_makespan.end()) -
                *std::min_element(recent_makespan.begin(), recent_makespan.end()) <
            opt_cfg.stable_tol;
    const bool converged = loss.max_prec_violation < opt_cfg.stop_violation_eps &&
                           loss.max_res_overshoot < opt_cfg.stop_violation_eps && rounded_ok && stabilized;
    if (converged) {
      result.trace.push_back(std::move(rec));
      result.status = SolveStatus::kEarlyStopped;
      result.early_stop_epoch = epoch;
      break;
    }

    if (auto update = controller.observe(epoch, loss.max_prec_violation, loss.max_res_overshoot)) {
      if (update->precedence != PenaltyDecision::kHold || update->resource != PenaltyDecision::kHold) {
        result.penalty_events.push_back({epoch, update->precedence, update->resource, update->lambda_p,
                                         relax_cfg.precedence_only ? 0.0 : update->lambda_r});
        rec.decision = std::string("p:") + to_string(update->precedence) + " r:" + to_string(update->resource);
      }
    }
    result.trace.push_back(std::move(rec));

    note_loss(st, loss.total, opt_cfg);
    clip_gradient(grad, opt_cfg.clip_norm);
    adam_step(st, grad, lr, opt_cfg);
    if (maybe_perturb(st, opt_cfg)) ++result.perturbations;
  }

  result.theta = st.theta;
  result.best_feasible = st.best_feasible;
  result.lambda_p = controller.lambda_p();
  result.lambda_r = relax_cfg.precedence_only ? 0.0 : controller.lambda_r();
  return result;
}

}  // namespace gradsched
