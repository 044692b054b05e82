#pragma once

// Differentiable relaxation of RCPSP and its analytic gradient.
//
// The trainable state is one raw parameter per activity. Start times are
//   s_i = softplus(theta_i) - min_j softplus(theta_j)
// and the loss is
//   L = LSE_beta(s + d) + lambda_p * L_prec + lambda_r * L_res + lambda_h * L_hor
// where L_res is evaluated on an n x T soft running-activity grid.
//
// Gradients are hand-derived over this fixed composition; see evaluate().

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradsched/error.hpp"
#include "gradsched/instance.hpp"

namespace gradsched {

// ---------------------------------------------------------------------------
// Scalar helpers
// ---------------------------------------------------------------------------

template <std::floating_point Real>
Real softplus(Real x) {
  return x > Real(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <std::floating_point Real>
Real sigmoid(Real x) {
  if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

// Inverse of softplus on (0, inf).
template <std::floating_point Real>
Real inverse_softplus(Real y) {
  if (!(y > Real(0))) throw InvalidArgument("inverse_softplus requires a positive argument");
  return y + std::log(-std::expm1(-y));
}

// ---------------------------------------------------------------------------
// Configuration and results
// ---------------------------------------------------------------------------

struct RelaxationConfig {
  double beta = 1.0;
  double tau = 8.0;
  double lambda_p = 1.0;
  double lambda_r = 1.0;
  // Unset means "track lambda_r".
  std::optional<double> lambda_h;
  // Skips the running grid, the resource term and (when tracking) the horizon term.
  bool precedence_only = false;

  double effective_lambda_r() const { return precedence_only ? 0.0 : lambda_r; }
  double effective_lambda_h() const { return lambda_h ? *lambda_h : effective_lambda_r(); }

  void validate() const {
    if (!(beta > 0.0) || !(tau > 0.0)) throw InvalidArgument("beta and tau must be positive");
    if (!(lambda_p >= 0.0) || !(lambda_r >= 0.0) || (lambda_h && !(*lambda_h >= 0.0)))
      throw InvalidArgument("penalty coefficients must be non-negative");
  }
};

template <std::floating_point Real>
struct LossBreakdownT {
  Real total = 0;
  Real makespan_soft = 0;
  Real precedence_loss = 0;
  Real resource_loss = 0;
  Real horizon_loss = 0;
  Real max_prec_violation = 0;  // time units
  Real max_res_overshoot = 0;   // fraction of capacity
};

using LossBreakdown = LossBreakdownT<double>;

// Dense row-major matrix.
template <std::floating_point Real>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = Real(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> data() const { return data_; }
  std::size_t bytes() const { return data_.capacity() * sizeof(Real); }

  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, Real(0));
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

template <std::floating_point Real>
Matrix<Real> requirement_matrix(const ProjectInstance& inst) {
  Matrix<Real> R(static_cast<std::size_t>(inst.n), static_cast<std::size_t>(inst.resource_count()));
  for (int i = 0; i < inst.n; ++i)
    for (int k = 0; k < inst.resource_count(); ++k)
      R(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) = static_cast<Real>(inst.requirement(i, k));
  return R;
}

namespace detail {

template <std::floating_point Real>
void require_finite(std::span<const Real> v, const char* what) {
  for (Real x : v)
    if (!std::isfinite(x)) throw NonFiniteError(std::string("non-finite value in ") + what);
}

template <std::floating_point Real>
std::vector<Real> as_real(const std::vector<int>& v) {
  return std::vector<Real>(v.begin(), v.end());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward components
// ---------------------------------------------------------------------------

// Lowest index attaining min softplus(theta); softplus is monotone so this is argmin theta.
template <std::floating_point Real>
std::size_t anchor_index(std::span<const Real> theta) {
  return static_cast<std::size_t>(std::min_element(theta.begin(), theta.end()) - theta.begin());
}

template <std::floating_point Real>
std::vector<Real> compute_start_times(std::span<const Real> theta) {
  detail::require_finite(theta, "theta");
  std::vector<Real> s(theta.size());
  if (theta.empty()) return s;
  const Real anchor = softplus(theta[anchor_index(theta)]);
  for (std::size_t i = 0; i < theta.size(); ++i) s[i] = softplus(theta[i]) - anchor;
  return s;
}

template <std::floating_point Real>
std::vector<Real> compute_start_times(const std::vector<Real>& theta) {
  return compute_start_times(std::span<const Real>(theta));
}

// Max-shifted log-sum-exp of the finish times.
template <std::floating_point Real>
Real soft_makespan(std::span<const Real> s, std::span<const Real> d, Real beta) {
  if (!(beta > Real(0))) throw InvalidArgument("soft_makespan requires beta > 0");
  if (s.size() != d.size() || s.empty()) throw InvalidArgument("soft_makespan: size mismatch");
  Real fmax = -std::numeric_limits<Real>::infinity();
  for (std::size_t i = 0; i < s.size(); ++i) fmax = std::max(fmax, s[i] + d[i]);
  Real sum = 0;
  for (std::size_t i = 0; i < s.size(); ++i) sum += std::exp(beta * (s[i] + d[i] - fmax));
  const Real out = fmax + std::log(sum) / beta;
  if (!std::isfinite(out)) throw NonFiniteError("non-finite soft makespan");
  return out;
}

template <std::floating_point Real>
std::vector<Real> precedence_violations(std::span<const Real> s, std::span<const Real> d,
                                        std::span<const Edge> edges) {
  std::vector<Real> v;
  v.reserve(edges.size());
  for (const Edge& e : edges) {
    const auto i = static_cast<std::size_t>(e.from), j = static_cast<std::size_t>(e.to);
    v.push_back(std::max(Real(0), s[i] + d[i] - s[j]));
  }
  return v;
}

// Quadratic below 1, linear above; C^1 at the join.
template <std::floating_point Real>
Real smooth_penalty(Real v) {
  return v < Real(1) ? Real(0.5) * v * v : v - Real(0.5);
}

template <std::floating_point Real>
Real smooth_penalty_slope(Real v) {
  return v < Real(1) ? v : Real(1);
}

template <std::floating_point Real>
Real precedence_loss(std::span<const Real> s, std::span<const Real> d, std::span<const Edge> edges) {
  if (edges.empty()) return 0;
  Real sum = 0;
  for (Real v : precedence_violations(s, d, edges)) sum += smooth_penalty(v);
  return sum / static_cast<Real>(edges.size());
}

// Soft indicator that activity i runs during cell t, sampled at the cell centre.
template <std::floating_point Real>
struct CellFactors {
  Real after_start;  // sigmoid(tau (t + 1/2 - s))
  Real before_end;   // sigmoid(tau (s + d - t - 1/2))
  Real rho() const { return after_start * before_end; }
};

template <std::floating_point Real>
CellFactors<Real> cell_factors(Real s, Real d, std::size_t t, Real tau) {
  const Real centre = static_cast<Real>(t) + Real(0.5);
  return {sigmoid(tau * (centre - s)), sigmoid(tau * (s + d - centre))};
}

// Fills one row of the running grid; rows are independent of each other.
template <std::floating_point Real>
void fill_running_row(std::span<Real> row, Real s, Real d, Real tau) {
  for (std::size_t t = 0; t < row.size(); ++t) row[t] = cell_factors(s, d, t, tau).rho();
}

template <std::floating_point Real>
Matrix<Real> soft_running_matrix(std::span<const Real> s, std::span<const Real> d, int horizon, Real tau) {
  if (horizon < 1) throw InvalidArgument("horizon must be at least 1");
  if (!(tau > Real(0))) throw InvalidArgument("tau must be positive");
  Matrix<Real> P(s.size(), static_cast<std::size_t>(horizon));
  for (std::size_t i = 0; i < s.size(); ++i) fill_running_row(P.row(i), s[i], d[i], tau);
  return P;
}

// U = P^T R, one row per time cell, one column per resource.
template <std::floating_point Real>
Matrix<Real> resource_usage(const Matrix<Real>& P, const Matrix<Real>& R) {
  if (P.rows() != R.rows())
    throw InvalidArgument("resource_usage: running matrix has " + std::to_string(P.rows()) +
                          " rows but requirement matrix has " + std::to_string(R.rows()));
  Matrix<Real> U(P.cols(), R.cols());
  for (std::size_t i = 0; i < P.rows(); ++i)
    for (std::size_t k = 0; k < R.cols(); ++k) {
      const Real r = R(i, k);
      if (r == Real(0)) continue;
      for (std::size_t t = 0; t < P.cols(); ++t) U(t, k) += P(i, t) * r;
    }
  return U;
}

namespace detail {

template <std::floating_point Real>
void check_capacities(std::span<const Real> capacity) {
  for (Real c : capacity)
    if (!(c > Real(0))) throw InvalidArgument("resource capacities must be positive");
}

}  // namespace detail

template <std::floating_point Real>
Real normalized_overshoot(Real usage, Real capacity) {
  return std::max(Real(0), (usage - capacity) / capacity);
}

// Mean squared normalized overshoot over all (t, k) cells.
template <std::floating_point Real>
Real resource_loss(const Matrix<Real>& U, std::span<const Real> capacity) {
  if (U.cols() != capacity.size()) throw InvalidArgument("resource_loss: capacity count mismatch");
  detail::check_capacities(capacity);
  if (U.rows() == 0 || U.cols() == 0) return 0;
  Real sum = 0;
  for (std::size_t t = 0; t < U.rows(); ++t)
    for (std::size_t k = 0; k < U.cols(); ++k) {
      const Real o = normalized_overshoot(U(t, k), capacity[k]);
      sum += o * o;
    }
  return sum / static_cast<Real>(U.rows() * U.cols());
}

// Mean squared overflow of finish times past the grid end.
template <std::floating_point Real>
Real horizon_loss(std::span<const Real> s, std::span<const Real> d, int horizon) {
  if (horizon < 1) throw InvalidArgument("horizon must be at least 1");
  if (s.empty()) return 0;
  Real sum = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Real over = std::max(Real(0), s[i] + d[i] - static_cast<Real>(horizon));
    sum += over * over;
  }
  return sum / static_cast<Real>(s.size());
}

// ---------------------------------------------------------------------------
// Workspace
// ---------------------------------------------------------------------------

template <std::floating_point Real>
class RelaxationWorkspace;

template <std::floating_point Real>
LossBreakdownT<Real> evaluate(std::span<const Real> theta, const RelaxationConfig& cfg,
                              RelaxationWorkspace<Real>& ws, std::span<Real> grad = {});

// Buffers reused across evaluations of one instance: the running grid, its
// gradient, and the usage matrix. Holding them here keeps the per-epoch loop
// allocation-free.
template <std::floating_point Real>
class RelaxationWorkspace {
 public:
  RelaxationWorkspace() = default;
  explicit RelaxationWorkspace(const ProjectInstance& inst) { bind(inst); }

  void bind(const ProjectInstance& inst) {
    durations_ = detail::as_real<Real>(inst.durations);
    capacities_ = detail::as_real<Real>(inst.capacities);
    requirements_ = requirement_matrix<Real>(inst);
    edges_ = inst.edges;
    horizon_ = inst.horizon;
    grid_.resize(0, 0);
    grid_grad_.resize(0, 0);
  }

  // Allocates the n x T grid and its gradient buffer on first use.
  void ensure_grid() {
    const auto n = durations_.size(), T = static_cast<std::size_t>(horizon_);
    if (grid_.rows() != n || grid_.cols() != T) {
      grid_.resize(n, T);
      grid_grad_.resize(n, T);
      usage_.resize(T, capacities_.size());
      usage_grad_.resize(T, capacities_.size());
    }
  }

  std::size_t grid_bytes() const { return grid_.bytes(); }
  std::size_t grid_gradient_bytes() const { return grid_grad_.bytes(); }

  std::span<const Real> durations() const { return durations_; }
  std::span<const Real> capacities() const { return capacities_; }
  std::span<const Edge> edges() const { return edges_; }
  const Matrix<Real>& requirements() const { return requirements_; }
  int horizon() const { return horizon_; }
  const Matrix<Real>& grid() const { return grid_; }
  const Matrix<Real>& usage() const { return usage_; }

 private:
  template <std::floating_point R>
  friend LossBreakdownT<R> evaluate(std::span<const R>, const RelaxationConfig&, RelaxationWorkspace<R>&,
                                    std::span<R>);

  std::vector<Real> durations_;
  std::vector<Real> capacities_;
  Matrix<Real> requirements_;
  std::vector<Edge> edges_;
  int horizon_ = 1;
  Matrix<Real> grid_;
  Matrix<Real> grid_grad_;
  Matrix<Real> usage_;
  Matrix<Real> usage_grad_;
  std::vector<Real> start_;
  std::vector<Real> start_grad_;
};

// Bytes needed for an n x T grid with or without its gradient buffer.
template <std::floating_point Real>
constexpr std::size_t grid_memory_bytes(std::size_t n, std::size_t horizon, bool with_gradient) {
  return n * horizon * sizeof(Real) * (with_gradient ? 2 : 1);
}

// ---------------------------------------------------------------------------
// Loss and gradient
// ---------------------------------------------------------------------------

// Evaluates the loss breakdown. When `grad` is non-empty it receives dL/dtheta.
//
// Backward pass, with g = dL/ds:
//   makespan:   g_i += softmax_beta(s + d)_i
//   precedence: g_i += lp * pen'(v_ij) / |E|,  g_j -= lp * pen'(v_ij) / |E|
//   resource:   dL/du_tk = 2 o_tk / (C_k T K),  dL/drho_it = sum_k r_ik dL/du_tk,
//               drho_it/ds_i = tau * rho_it * (a_it - b_it)
//   horizon:    g_i += lh * 2 max(0, s_i + d_i - T) / n
//   anchor:     dL/dtheta_j = sigmoid(theta_j) * (g_j - [j == m] * sum_i g_i)
template <std::floating_point Real>
LossBreakdownT<Real> evaluate(std::span<const Real> theta, const RelaxationConfig& cfg,
                              RelaxationWorkspace<Real>& ws, std::span<Real> grad) {
  cfg.validate();
  const std::size_t n = ws.durations_.size();
  if (theta.size() != n)
    throw InvalidArgument("theta has " + std::to_string(theta.size()) + " entries, instance has " +
                          std::to_string(n) + " activities");
  if (!grad.empty() && grad.size() != n) throw InvalidArgument("gradient buffer has the wrong size");
  detail::require_finite(theta, "theta");

  const bool want_grad = !grad.empty();
  const Real beta = static_cast<Real>(cfg.beta);
  const Real tau = static_cast<Real>(cfg.tau);
  const Real lp = static_cast<Real>(cfg.lambda_p);
  const Real lr = static_cast<Real>(cfg.effective_lambda_r());
  const Real lh = static_cast<Real>(cfg.effective_lambda_h());
  const auto& d = ws.durations_;

  ws.start_.assign(n, Real(0));
  ws.start_grad_.assign(n, Real(0));
  auto& s = ws.start_;
  auto& g = ws.start_grad_;
  const std::size_t m = anchor_index(theta);
  const Real anchor = softplus(theta[m]);
  for (std::size_t i = 0; i < n; ++i) s[i] = softplus(theta[i]) - anchor;

  LossBreakdownT<Real> out;

  // Makespan.
  {
    Real fmax = -std::numeric_limits<Real>::infinity();
    for (std::size_t i = 0; i < n; ++i) fmax = std::max(fmax, s[i] + d[i]);
    Real sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = std::exp(beta * (s[i] + d[i] - fmax));
      sum += g[i];
    }
    out.makespan_soft = fmax + std::log(sum) / beta;
    for (std::size_t i = 0; i < n; ++i) g[i] /= sum;
  }

  // Precedence.
  if (!ws.edges_.empty()) {
    const Real inv_e = Real(1) / static_cast<Real>(ws.edges_.size());
    Real sum = 0;
    for (const Edge& e : ws.edges_) {
      const auto i = static_cast<std::size_t>(e.from), j = static_cast<std::size_t>(e.to);
      const Real v = std::max(Real(0), s[i] + d[i] - s[j]);
      out.max_prec_violation = std::max(out.max_prec_violation, v);
      sum += smooth_penalty(v);
      if (want_grad && v > Real(0)) {
        const Real w = lp * inv_e * smooth_penalty_slope(v);
        g[i] += w;
        g[j] -= w;
      }
    }
    out.precedence_loss = sum * inv_e;
  }

  // Resources on the dense grid.
  const std::size_t K = ws.capacities_.size();
  if (!cfg.precedence_only && K > 0) {
    detail::check_capacities<Real>(ws.capacities_);
    ws.ensure_grid();
    const std::size_t T = ws.grid_.cols();
    for (std::size_t i = 0; i < n; ++i) fill_running_row(ws.grid_.row(i), s[i], d[i], tau);

    auto& U = ws.usage_;
    auto& dU = ws.usage_grad_;
    std::fill_n(&U(0, 0), T * K, Real(0));
    const auto& R = ws.requirements_;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < K; ++k) {
        const Real r = R(i, k);
        if (r == Real(0)) continue;
        const auto row = ws.grid_.row(i);
        for (std::size_t t = 0; t < T; ++t) U(t, k) += row[t] * r;
      }

    const Real inv_cells = Real(1) / static_cast<Real>(T * K);
    Real sum = 0;
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < K; ++k) {
        const Real c = ws.capacities_[k];
        const Real o = normalized_overshoot(U(t, k), c);
        out.max_res_overshoot = std::max(out.max_res_overshoot, o);
        sum += o * o;
        dU(t, k) = Real(2) * o / c * inv_cells;
      }
    out.resource_loss = sum * inv_cells;

    if (want_grad && lr > Real(0)) {
      for (std::size_t i = 0; i < n; ++i) {
        auto grow = ws.grid_grad_.row(i);
        Real acc = 0;
        for (std::size_t t = 0; t < T; ++t) {
          Real drho = 0;
          for (std::size_t k = 0; k < K; ++k) drho += R(i, k) * dU(t, k);
          grow[t] = drho;
          if (drho == Real(0)) continue;
          const auto f = cell_factors(s[i], d[i], t, tau);
          acc += drho * tau * f.rho() * (f.after_start - f.before_end);
        }
        g[i] += lr * acc;
      }
    }
  }

  // Horizon overflow.
  {
    const Real T = static_cast<Real>(ws.horizon_);
    const Real inv_n = Real(1) / static_cast<Real>(n);
    Real sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Real over = std::max(Real(0), s[i] + d[i] - T);
      sum += over * over;
      if (want_grad && over > Real(0)) g[i] += lh * Real(2) * over * inv_n;
    }
    out.horizon_loss = sum * inv_n;
  }

  out.total = out.makespan_soft + lp * out.precedence_loss + lr * out.resource_loss + lh * out.horizon_loss;
  if (!std::isfinite(out.makespan_soft)) throw NonFiniteError("non-finite makespan term");
  if (!std::isfinite(out.precedence_loss)) throw NonFiniteError("non-finite precedence term");
  if (!std::isfinite(out.resource_loss)) throw NonFiniteError("non-finite resource term");
  if (!std::isfinite(out.horizon_loss)) throw NonFiniteError("non-finite horizon term");
  if (!std::isfinite(out.total)) throw NonFiniteError("non-finite total loss");

  if (want_grad) {
    Real total_g = 0;
    for (std::size_t i = 0; i < n; ++i) total_g += g[i];
    for (std::size_t j = 0; j < n; ++j) {
      Real gj = g[j];
      if (j == m) gj -= total_g;
      grad[j] = sigmoid(theta[j]) * gj;
      if (!std::isfinite(grad[j]))
        throw NonFiniteError("non-finite gradient for activity " + std::to_string(j));
    }
  }
  return out;
}

template <std::floating_point Real>
LossBreakdownT<Real> total_loss(std::span<const Real> theta, const ProjectInstance& inst,
                                const RelaxationConfig& cfg) {
  RelaxationWorkspace<Real> ws(inst);
  return evaluate<Real>(theta, cfg, ws);
}

template <std::floating_point Real>
std::vector<Real> grad_total_loss(std::span<const Real> theta, const ProjectInstance& inst,
                                  const RelaxationConfig& cfg) {
  RelaxationWorkspace<Real> ws(inst);
  std::vector<Real> grad(theta.size());
  evaluate<Real>(theta, cfg, ws, grad);
  return grad;
}

// Parameters whose start times reproduce `starts` exactly up to rounding,
// anchored at the smallest start. Offsets every start by `base` before
// inverting softplus so the anchor stays away from zero.
template <std::floating_point Real>
std::vector<Real> theta_for_starts(std::span<const Real> starts, Real base = Real(1)) {
  std::vector<Real> theta(starts.size());
  const Real lo = starts.empty() ? Real(0) : *std::min_element(starts.begin(), starts.end());
  for (std::size_t i = 0; i < starts.size(); ++i) theta[i] = inverse_softplus(starts[i] - lo + base);
  return theta;
}

}  // namespace gradsched
