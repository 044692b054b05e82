#pragma once

// Independent oracles and generators shared by the unit and acceptance tests.
// Nothing here calls the code under test for the quantity it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gradsched/instance.hpp"
#include "gradsched/relaxation.hpp"
#include "gradsched/schedule.hpp"

namespace gstest {

using gradsched::ProjectInstance;

inline std::string data_path(const std::string& file) { return std::string(GRADSCHED_TEST_DATA) + "/" + file; }

inline ProjectInstance j301_1() { return gradsched::load_instance(data_path("j301_1.sm")); }

// Full per-time-unit check: every edge, then every (t, k) for t in [0, makespan).
inline bool naive_feasible(const std::vector<int>& start, const ProjectInstance& inst) {
  for (const auto& e : inst.edges)
    if (start[e.from] + inst.durations[e.from] > start[e.to]) return false;
  int makespan = 0;
  for (int i = 0; i < inst.n; ++i) makespan = std::max(makespan, start[i] + inst.durations[i]);
  for (int t = 0; t < makespan; ++t)
    for (int k = 0; k < inst.resource_count(); ++k) {
      int used = 0;
      for (int i = 0; i < inst.n; ++i)
        if (start[i] <= t && t < start[i] + inst.durations[i]) used += inst.requirement(i, k);
      if (used > inst.capacities[k]) return false;
    }
  return true;
}

// Longest path by Bellman-Ford style relaxation, n rounds over all edges.
inline int naive_critical_path(const ProjectInstance& inst) {
  std::vector<int> es(inst.n, 0);
  for (int round = 0; round < inst.n; ++round)
    for (const auto& e : inst.edges) es[e.to] = std::max(es[e.to], es[e.from] + inst.durations[e.from]);
  int cp = 0;
  for (int i = 0; i < inst.n; ++i) cp = std::max(cp, es[i] + inst.durations[i]);
  return cp;
}

// Double loop u_tk = sum_i P(i,t) R(i,k).
inline std::vector<std::vector<double>> naive_usage(const std::vector<std::vector<double>>& P,
                                                    const std::vector<std::vector<double>>& R) {
  const std::size_t n = P.size(), T = P.empty() ? 0 : P[0].size(), K = R.empty() ? 0 : R[0].size();
  std::vector<std::vector<double>> U(T, std::vector<double>(K, 0.0));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t i = 0; i < n; ++i) U[t][k] += P[i][t] * R[i][k];
  return U;
}

// Loss assembled term by term from the textbook definitions, with its own
// softplus, grid and usage loops.
inline double reference_loss(const std::vector<double>& theta, const ProjectInstance& inst,
                             const gradsched::RelaxationConfig& cfg) {
  const std::size_t n = theta.size();
  auto sp = [](double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); };
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  double lo = sp(theta[0]);
  for (double t : theta) lo = std::min(lo, sp(t));
  std::vector<double> s(n), f(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = sp(theta[i]) - lo;
    f[i] = s[i] + inst.durations[i];
  }
  const double fmax = *std::max_element(f.begin(), f.end());
  double acc = 0;
  for (double fi : f) acc += std::exp(cfg.beta * (fi - fmax));
  double total = fmax + std::log(acc) / cfg.beta;

  double prec = 0;
  for (const auto& e : inst.edges) {
    const double v = std::max(0.0, s[e.from] + inst.durations[e.from] - s[e.to]);
    prec += v < 1 ? v * v / 2 : v - 0.5;
  }
  if (!inst.edges.empty()) total += cfg.lambda_p * prec / static_cast<double>(inst.edges.size());

  const int T = inst.horizon, K = cfg.precedence_only ? 0 : inst.resource_count();
  double res = 0;
  for (int t = 0; t < T && K > 0; ++t)
    for (int k = 0; k < K; ++k) {
      double u = 0;
      for (std::size_t i = 0; i < n; ++i)
        u += sig(cfg.tau * (t + 0.5 - s[i])) * sig(cfg.tau * (s[i] + inst.durations[i] - t - 0.5)) *
             inst.requirement(static_cast<int>(i), k);
      const double o = std::max(0.0, (u - inst.capacities[k]) / inst.capacities[k]);
      res += o * o;
    }
  if (K > 0) total += cfg.lambda_r * res / (static_cast<double>(T) * K);
  double hor = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double over = std::max(0.0, f[i] - T);
    hor += over * over;
  }
  // An unset horizon coefficient follows lambda_r, which precedence-only mode zeroes.
  const double lh = cfg.lambda_h ? *cfg.lambda_h : (cfg.precedence_only ? 0.0 : cfg.lambda_r);
  total += lh * hor / static_cast<double>(n);
  return total;
}

inline std::vector<double> central_differences(const std::function<double(const std::vector<double>&)>& f,
                                               std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// max_i |a_i - b_i| / max(||b||_inf, 1e-8)
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, scale = 1e-8;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / scale;
}

// True when theta is at least `margin` (in start-time units) away from every
// kink: precedence differences at 0 and 1, and ties for the softplus argmin.
inline bool away_from_kinks(const std::vector<double>& theta, const ProjectInstance& inst, double margin) {
  const auto s = gradsched::compute_start_times(theta);
  for (const auto& e : inst.edges) {
    const double x = s[e.from] + inst.durations[e.from] - s[e.to];
    if (std::abs(x) < margin || std::abs(x - 1.0) < margin) return false;
  }
  std::vector<double> sorted = theta;
  std::sort(sorted.begin(), sorted.end());
  return sorted.size() < 2 || sorted[1] - sorted[0] > margin;
}

// Draws theta whose start times fall in [0, spread]; redraws on kinks.
inline std::vector<double> kink_free_theta(std::mt19937_64& rng, const ProjectInstance& inst, double spread,
                                           double margin = 1e-3) {
  std::uniform_real_distribution<double> u(0.2, spread);
  for (;;) {
    std::vector<double> theta(static_cast<std::size_t>(inst.n));
    for (double& t : theta) t = gradsched::inverse_softplus(u(rng));
    if (away_from_kinks(theta, inst, margin)) return theta;
  }
}

// Random integer starts in [0, span).
inline std::vector<int> random_starts(std::mt19937_64& rng, int n, int span) {
  std::uniform_int_distribution<int> u(0, std::max(span - 1, 0));
  std::vector<int> s(static_cast<std::size_t>(n));
  for (int& x : s) x = u(rng);
  return s;
}

// Two unit activities that each need the whole single resource.
inline ProjectInstance clash_instance() {
  ProjectInstance inst;
  inst.name = "clash";
  inst.n = 2;
  inst.durations = {1, 1};
  inst.capacities = {1};
  inst.requirements = {1, 1};
  inst.horizon = 2;
  return inst;
}

inline gradsched::GeneratorSpec small_spec(int resources = 2) {
  gradsched::GeneratorSpec g;
  g.activities = 8;
  g.resources = resources;
  return g;
}

}  // namespace gstest
