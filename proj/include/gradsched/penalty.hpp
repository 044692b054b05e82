#pragma once

// Adaptive penalty coefficients driven by a window of recent violations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "gradsched/error.hpp"

namespace gradsched {

struct PenaltyControllerConfig {
  int lookback = 100;
  double escalate_factor = 10.0;
  double reduce_factor = 0.5;
  double recover_factor = 100.0;
  double small_violation_eps = 1e-4;
  double stable_rel_change = 0.05;
  double lambda_min = 1.0;
  double lambda_max = 1e9;
  int update_period = 50;

  void validate() const {
    if (!(escalate_factor > 0) || !(reduce_factor > 0) || !(recover_factor > 0))
      throw InvalidArgument("penalty factors must be positive");
    if (!(lambda_min <= lambda_max)) throw InvalidArgument("lambda_min must not exceed lambda_max");
    if (update_period < 1 || lookback < update_period)
      throw InvalidArgument("penalty controller needs lookback >= update_period >= 1");
  }
};

struct ViolationSample {
  std::int64_t epoch = 0;
  double precedence = 0;  // max raw precedence violation
  double resource = 0;    // max normalized overshoot
};

// Ring buffer of the most recent `capacity` samples, ordered by epoch.
class ViolationHistory {
 public:
  explicit ViolationHistory(int capacity) : capacity_(static_cast<std::size_t>(std::max(capacity, 1))) {}

  void record(std::int64_t epoch, double precedence, double resource) {
    if (!samples_.empty() && epoch <= samples_.back().epoch)
      throw InvalidArgument("violation history: epoch " + std::to_string(epoch) +
                            " is not after " + std::to_string(samples_.back().epoch));
    if (samples_.size() == capacity_) samples_.pop_front();
    samples_.push_back({epoch, precedence, resource});
  }

  std::size_t size() const { return samples_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return samples_.empty(); }
  const ViolationSample& operator[](std::size_t i) const { return samples_[i]; }
  const ViolationSample& oldest() const { return samples_.front(); }
  const ViolationSample& latest() const { return samples_.back(); }

 private:
  std::size_t capacity_;
  std::deque<ViolationSample> samples_;
};

enum class PenaltyDecision { kHold, kEscalate, kReduce, kRecover };

inline const char* to_string(PenaltyDecision d) {
  switch (d) {
    case PenaltyDecision::kHold: return "hold";
    case PenaltyDecision::kEscalate: return "escalate";
    case PenaltyDecision::kReduce: return "reduce";
    case PenaltyDecision::kRecover: return "recover";
  }
  return "unknown";
}

struct PenaltyUpdate {
  double lambda_p = 0;
  double lambda_r = 0;
  PenaltyDecision precedence = PenaltyDecision::kHold;
  PenaltyDecision resource = PenaltyDecision::kHold;
};

struct WindowStats {
  double mean = 0;
  double first_half_mean = 0;
  double second_half_mean = 0;
  double min = 0;
  double max = 0;
  double last = 0;
  double slope_after_min = 0;  // least squares over [argmin, end], per sample
};

inline double least_squares_slope(const double* v, std::size_t n) {
  if (n < 2) return 0.0;
  double mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += v[i];
  mean /= static_cast<double>(n);
  const double xbar = (static_cast<double>(n) - 1.0) / 2.0;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) - xbar;
    sxy += dx * (v[i] - mean);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

inline WindowStats window_stats(const std::vector<double>& v) {
  WindowStats s;
  if (v.empty()) return s;
  const std::size_t n = v.size();
  const std::size_t half = n / 2;
  double sum = 0, first = 0, second = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += v[i];
    (i < half ? first : second) += v[i];
  }
  s.mean = sum / static_cast<double>(n);
  s.first_half_mean = half ? first / static_cast<double>(half) : s.mean;
  s.second_half_mean = second / static_cast<double>(n - half);
  const auto argmin = static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
  s.min = v[argmin];
  s.max = *std::max_element(v.begin(), v.end());
  s.last = v.back();
  s.slope_after_min = least_squares_slope(v.data() + argmin, n - argmin);
  return s;
}

// One constraint family. Rules, in order of precedence:
//   recover:  the samples after the window minimum trend upward and the
//             minimum is below half the latest (non-small) value, i.e. the
//             violations improved and then regressed
//   escalate: mean above eps, and not improving by more than stable_rel_change
//             between the two halves of the window
//   reduce:   mean at or below eps, and the window is stable (either it never
//             left the small region or the halves agree within stable_rel_change)
inline PenaltyDecision decide_family(const std::vector<double>& window, const PenaltyControllerConfig& cfg) {
  if (window.empty()) return PenaltyDecision::kHold;
  const WindowStats w = window_stats(window);
  const double a = w.first_half_mean, b = w.second_half_mean;
  const bool stable = std::abs(b - a) <= cfg.stable_rel_change * std::max(a, b);
  const bool not_improving = stable || b > a;

  if (w.slope_after_min > 0 && w.last > cfg.small_violation_eps && w.min < 0.5 * w.last) return PenaltyDecision::kRecover;
  if (w.mean > cfg.small_violation_eps && not_improving) return PenaltyDecision::kEscalate;
  if (w.mean <= cfg.small_violation_eps && (w.max <= cfg.small_violation_eps || stable)) return PenaltyDecision::kReduce;
  return PenaltyDecision::kHold;
}

inline double apply_decision(double lambda, PenaltyDecision d, const PenaltyControllerConfig& cfg) {
  switch (d) {
    case PenaltyDecision::kEscalate: lambda *= cfg.escalate_factor; break;
    case PenaltyDecision::kReduce: lambda *= cfg.reduce_factor; break;
    case PenaltyDecision::kRecover: lambda *= cfg.recover_factor; break;
    case PenaltyDecision::kHold: break;
  }
  return std::clamp(lambda, cfg.lambda_min, cfg.lambda_max);
}

// Pure function of (history, lambdas, config). Returns the inputs unchanged
// (clamped) when fewer than lookback/2 samples are available.
inline PenaltyUpdate decide(const ViolationHistory& history, double lambda_p, double lambda_r,
                            const PenaltyControllerConfig& cfg) {
  PenaltyUpdate out{std::clamp(lambda_p, cfg.lambda_min, cfg.lambda_max),
                    std::clamp(lambda_r, cfg.lambda_min, cfg.lambda_max)};
  if (history.size() < static_cast<std::size_t>(cfg.lookback) / 2 || history.empty()) return out;
  std::vector<double> prec, res;
  prec.reserve(history.size());
  res.reserve(history.size());
  for (std::size_t i = 0; i < history.size(); ++i) {
    prec.push_back(history[i].precedence);
    res.push_back(history[i].resource);
  }
  out.precedence = decide_family(prec, cfg);
  out.resource = decide_family(res, cfg);
  out.lambda_p = apply_decision(out.lambda_p, out.precedence, cfg);
  out.lambda_r = apply_decision(out.lambda_r, out.resource, cfg);
  return out;
}

// Owns the history and the current coefficients for one solve.
class PenaltyController {
 public:
  PenaltyController(PenaltyControllerConfig cfg, double lambda_p, double lambda_r, bool control_resource = true)
      : cfg_(cfg), history_(cfg.lookback), control_resource_(control_resource) {
    cfg_.validate();
    lambda_p_ = std::clamp(lambda_p, cfg_.lambda_min, cfg_.lambda_max);
    lambda_r_ = control_resource ? std::clamp(lambda_r, cfg_.lambda_min, cfg_.lambda_max) : lambda_r;
  }

  // Records the epoch and, on update epochs, revises the coefficients.
  // Returns the decision when one was taken.
  std::optional<PenaltyUpdate> observe(std::int64_t epoch, double prec_violation, double res_violation) {
    history_.record(epoch, prec_violation, res_violation);
    if ((epoch + 1) % cfg_.update_period != 0) return std::nullopt;
    if (history_.size() < static_cast<std::size_t>(cfg_.lookback) / 2) return std::nullopt;
    PenaltyUpdate u = decide(history_, lambda_p_, lambda_r_, cfg_);
    lambda_p_ = u.lambda_p;
    if (control_resource_) {
      lambda_r_ = u.lambda_r;
    } else {
      u.lambda_r = lambda_r_;
      u.resource = PenaltyDecision::kHold;
    }
    return u;
  }

  double lambda_p() const { return lambda_p_; }
  double lambda_r() const { return lambda_r_; }
  const ViolationHistory& history() const { return history_; }

 private:
  PenaltyControllerConfig cfg_;
  ViolationHistory history_;
  bool control_resource_;
  double lambda_p_ = 1.0;
  double lambda_r_ = 1.0;
};

}  // namespace gradsched
