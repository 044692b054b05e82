#pragma once

// Discrete schedules: rounding from relaxed start times, exact feasibility
// checking, and the classical reference algorithms (CPM, serial SGS and an
// exhaustive search for tiny instances).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradsched/error.hpp"
#include "gradsched/instance.hpp"

namespace gradsched {

struct Schedule {
  std::vector<int> start;
  int makespan = 0;
  friend bool operator==(const Schedule&, const Schedule&) = default;
};

inline int compute_makespan(std::span<const int> start, const ProjectInstance& inst) {
  int ms = 0;
  for (std::size_t i = 0; i < start.size(); ++i) ms = std::max(ms, start[i] + inst.durations[i]);
  return ms;
}

// Shifts so the earliest start is zero and recomputes the makespan.
inline Schedule make_schedule(std::vector<int> start, const ProjectInstance& inst) {
  if (static_cast<int>(start.size()) != inst.n)
    throw InvalidArgument("schedule has " + std::to_string(start.size()) + " entries, instance has " +
                          std::to_string(inst.n) + " activities");
  if (!start.empty()) {
    const int lo = *std::min_element(start.begin(), start.end());
    for (int& s : start) s -= lo;
  }
  Schedule out{std::move(start), 0};
  out.makespan = compute_makespan(out.start, inst);
  return out;
}

// Round half up, then re-anchor at zero.
template <typename Real>
Schedule extract_schedule(std::span<const Real> s, const ProjectInstance& inst) {
  std::vector<int> start(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!std::isfinite(static_cast<double>(s[i]))) throw NonFiniteError("non-finite start time");
    start[i] = static_cast<int>(std::floor(static_cast<double>(s[i]) + 0.5));
  }
  return make_schedule(std::move(start), inst);
}

// ---------------------------------------------------------------------------
// Feasibility
// ---------------------------------------------------------------------------

struct PrecedenceViolation {
  int from = 0;
  int to = 0;
  int amount = 0;  // start_from + d_from - start_to
  friend bool operator==(const PrecedenceViolation&, const PrecedenceViolation&) = default;
};

struct ResourceOverload {
  int time = 0;
  int resource = 0;
  int excess = 0;  // usage - capacity
  friend bool operator==(const ResourceOverload&, const ResourceOverload&) = default;
};

struct FeasibilityReport {
  std::vector<PrecedenceViolation> precedence;
  std::vector<ResourceOverload> resources;  // sorted by (time, resource)
  bool feasible() const { return precedence.empty() && resources.empty(); }
};

// Exact integer check. Resource usage is piecewise constant between
// consecutive start/finish events, so the profile is evaluated once per
// segment and overloads are expanded to every integer time in the segment.
inline FeasibilityReport check_feasible(const Schedule& sched, const ProjectInstance& inst) {
  if (static_cast<int>(sched.start.size()) != inst.n)
    throw InvalidArgument("schedule/instance activity count mismatch");
  FeasibilityReport report;
  for (const Edge& e : inst.edges) {
    const int gap = sched.start[static_cast<std::size_t>(e.from)] +
                    inst.durations[static_cast<std::size_t>(e.from)] - sched.start[static_cast<std::size_t>(e.to)];
    if (gap > 0) report.precedence.push_back({e.from, e.to, gap});
  }

  const int K = inst.resource_count();
  if (K == 0) return report;
  std::vector<int> events;
  for (int i = 0; i < inst.n; ++i) {
    if (inst.durations[static_cast<std::size_t>(i)] == 0) continue;
    events.push_back(sched.start[static_cast<std::size_t>(i)]);
    events.push_back(sched.start[static_cast<std::size_t>(i)] + inst.durations[static_cast<std::size_t>(i)]);
  }
  std::sort(events.begin(), events.end());
  events.erase(std::unique(events.begin(), events.end()), events.end());
  const int makespan = compute_makespan(sched.start, inst);
  std::vector<int> usage(static_cast<std::size_t>(K));
  for (std::size_t e = 0; e + 1 < events.size(); ++e) {
    const int lo = std::max(events[e], 0), hi = std::min(events[e + 1], makespan);
    if (lo >= hi) continue;
    std::fill(usage.begin(), usage.end(), 0);
    for (int i = 0; i < inst.n; ++i) {
      const int s = sched.start[static_cast<std::size_t>(i)];
      if (s <= lo && lo < s + inst.durations[static_cast<std::size_t>(i)])
        for (int k = 0; k < K; ++k) usage[static_cast<std::size_t>(k)] += inst.requirement(i, k);
    }
    for (int t = lo; t < hi; ++t)
      for (int k = 0; k < K; ++k) {
        const int excess = usage[static_cast<std::size_t>(k)] - inst.capacities[static_cast<std::size_t>(k)];
        if (excess > 0) report.resources.push_back({t, k, excess});
      }
  }
  return report;
}

inline bool is_feasible(const Schedule& sched, const ProjectInstance& inst) {
  return check_feasible(sched, inst).feasible();
}

// ---------------------------------------------------------------------------
// Critical path
// ---------------------------------------------------------------------------

inline int critical_path(const ProjectInstance& inst) {
  const auto topo = topological_order(inst);
  if (!topo) throw InvalidArgument("critical_path: precedence graph contains a cycle");
  return longest_path_length(inst, *topo);
}

// Latest finish times from a backward pass anchored at the horizon.
inline std::vector<int> latest_finish_times(const ProjectInstance& inst) {
  const auto topo = topological_order(inst);
  if (!topo) throw InvalidArgument("latest_finish_times: precedence graph contains a cycle");
  const auto succ = successor_lists(inst);
  std::vector<int> lft(static_cast<std::size_t>(inst.n), inst.horizon);
  for (auto it = topo->rbegin(); it != topo->rend(); ++it) {
    const auto v = static_cast<std::size_t>(*it);
    for (int w : succ[v])
      lft[v] = std::min(lft[v], lft[static_cast<std::size_t>(w)] - inst.durations[static_cast<std::size_t>(w)]);
  }
  return lft;
}

// ---------------------------------------------------------------------------
// Serial schedule generation
// ---------------------------------------------------------------------------

// Per-time resource profile that grows on demand.
class ResourceProfile {
 public:
  explicit ResourceProfile(const ProjectInstance& inst) : inst_(inst), K_(inst.resource_count()) {}

  bool fits(int activity, int start) const {
    const int d = inst_.durations[static_cast<std::size_t>(activity)];
    for (int t = start; t < start + d; ++t)
      for (int k = 0; k < K_; ++k)
        if (used(t, k) + inst_.requirement(activity, k) > inst_.capacities[static_cast<std::size_t>(k)]) return false;
    return true;
  }

  void place(int activity, int start) {
    const int d = inst_.durations[static_cast<std::size_t>(activity)];
    grow(start + d);
    for (int t = start; t < start + d; ++t)
      for (int k = 0; k < K_; ++k) usage_[static_cast<std::size_t>(t * K_ + k)] += inst_.requirement(activity, k);
  }

  void remove(int activity, int start) {
    const int d = inst_.durations[static_cast<std::size_t>(activity)];
    for (int t = start; t < start + d; ++t)
      for (int k = 0; k < K_; ++k) usage_[static_cast<std::size_t>(t * K_ + k)] -= inst_.requirement(activity, k);
  }

  int earliest_fit(int activity, int from) const {
    int t = from;
    while (!fits(activity, t)) ++t;
    return t;
  }

 private:
  int used(int t, int k) const {
    const auto idx = static_cast<std::size_t>(t * K_ + k);
    return idx < usage_.size() ? usage_[idx] : 0;
  }
  void grow(int horizon) {
    const auto need = static_cast<std::size_t>(horizon * K_);
    if (usage_.size() < need) usage_.resize(need, 0);
  }

  const ProjectInstance& inst_;
  int K_;
  std::vector<int> usage_;
};

// Smaller key = scheduled earlier among eligible activities.
using PriorityKey = std::function<double(int activity)>;

inline Schedule ssgs(const ProjectInstance& inst, const PriorityKey& priority) {
  const auto pred = predecessor_lists(inst);
  std::vector<int> start(static_cast<std::size_t>(inst.n), -1);
  std::vector<int> remaining_preds(static_cast<std::size_t>(inst.n));
  for (int i = 0; i < inst.n; ++i) remaining_preds[static_cast<std::size_t>(i)] = static_cast<int>(pred[static_cast<std::size_t>(i)].size());
  const auto succ = successor_lists(inst);
  ResourceProfile profile(inst);

  for (int step = 0; step < inst.n; ++step) {
    int pick = -1;
    for (int i = 0; i < inst.n; ++i) {
      if (start[static_cast<std::size_t>(i)] >= 0 || remaining_preds[static_cast<std::size_t>(i)] != 0) continue;
      if (pick < 0 || priority(i) < priority(pick)) pick = i;
    }
    if (pick < 0) throw InvalidArgument("ssgs: precedence graph contains a cycle");
    int ready = 0;
    for (int p : pred[static_cast<std::size_t>(pick)])
      ready = std::max(ready, start[static_cast<std::size_t>(p)] + inst.durations[static_cast<std::size_t>(p)]);
    const int t = profile.earliest_fit(pick, ready);
    profile.place(pick, t);
    start[static_cast<std::size_t>(pick)] = t;
    for (int w : succ[static_cast<std::size_t>(pick)]) --remaining_preds[static_cast<std::size_t>(w)];
  }
  return make_schedule(std::move(start), inst);
}

// Default rule: minimum latest finish time, ties to the lower index.
inline Schedule ssgs(const ProjectInstance& inst) {
  const auto lft = latest_finish_times(inst);
  return ssgs(inst, [&lft](int i) { return static_cast<double>(lft[static_cast<std::size_t>(i)]); });
}

// Right-shift repair of a rounded schedule: activities are re-placed in
// order of their rounded starts, never earlier than that start.
inline Schedule repair_schedule(const Schedule& rounded, const ProjectInstance& inst) {
  const auto pred = predecessor_lists(inst);
  const auto succ = successor_lists(inst);
  std::vector<int> start(static_cast<std::size_t>(inst.n), -1);
  std::vector<int> remaining(static_cast<std::size_t>(inst.n));
  for (int i = 0; i < inst.n; ++i) remaining[static_cast<std::size_t>(i)] = static_cast<int>(pred[static_cast<std::size_t>(i)].size());
  ResourceProfile profile(inst);
  for (int step = 0; step < inst.n; ++step) {
    int pick = -1;
    for (int i = 0; i < inst.n; ++i) {
      if (start[static_cast<std::size_t>(i)] >= 0 || remaining[static_cast<std::size_t>(i)] != 0) continue;
      if (pick < 0 || rounded.start[static_cast<std::size_t>(i)] < rounded.start[static_cast<std::size_t>(pick)]) pick = i;
    }
    if (pick < 0) throw InvalidArgument("repair_schedule: precedence graph contains a cycle");
    int ready = rounded.start[static_cast<std::size_t>(pick)];
    for (int p : pred[static_cast<std::size_t>(pick)])
      ready = std::max(ready, start[static_cast<std::size_t>(p)] + inst.durations[static_cast<std::size_t>(p)]);
    const int t = profile.earliest_fit(pick, ready);
    profile.place(pick, t);
    start[static_cast<std::size_t>(pick)] = t;
    for (int w : succ[static_cast<std::size_t>(pick)]) --remaining[static_cast<std::size_t>(w)];
  }
  return make_schedule(std::move(start), inst);
}

// ---------------------------------------------------------------------------
// Exhaustive search
// ---------------------------------------------------------------------------

struct BruteForceLimits {
  int max_activities = 9;  // non-dummy (positive-duration) activities
  int max_horizon = 64;
};

// Depth-first search over integer start times in topological order. Every
// activity tries each start in [earliest precedence start, bound - tail]
// where tail is its longest path to the end; partial assignments are pruned
// on resources. Zero-duration activities only take their earliest start,
// which loses nothing since they use no resources.
inline Schedule brute_force_optimal(const ProjectInstance& inst, BruteForceLimits limits = {}) {
  const int real = static_cast<int>(std::count_if(inst.durations.begin(), inst.durations.end(), [](int d) { return d > 0; }));
  if (real > limits.max_activities)
    throw InvalidArgument("brute force limited to " + std::to_string(limits.max_activities) +
                          " activities, instance has " + std::to_string(real));
  if (inst.horizon > limits.max_horizon)
    throw InvalidArgument("brute force limited to horizon " + std::to_string(limits.max_horizon) +
                          ", instance has " + std::to_string(inst.horizon));
  const auto topo = topological_order(inst);
  if (!topo) throw InvalidArgument("brute_force_optimal: precedence graph contains a cycle");
  const auto pred = predecessor_lists(inst);
  const auto succ = successor_lists(inst);

  // tail[i] = d_i + longest path after i
  std::vector<int> tail(static_cast<std::size_t>(inst.n), 0);
  for (auto it = topo->rbegin(); it != topo->rend(); ++it) {
    const auto v = static_cast<std::size_t>(*it);
    int after = 0;
    for (int w : succ[v]) after = std::max(after, tail[static_cast<std::size_t>(w)]);
    tail[v] = inst.durations[v] + after;
  }

  // Any schedule finishing within the horizon is admissible; the serial SGS
  // result seeds the bound so the search only looks for strict improvements.
  Schedule best = ssgs(inst);
  int bound = best.makespan;
  std::vector<int> start(static_cast<std::size_t>(inst.n), 0);
  ResourceProfile profile(inst);

  std::function<void(std::size_t, int)> dfs = [&](std::size_t depth, int current_ms) {
    if (depth == topo->size()) {
      if (current_ms < bound) {
        bound = current_ms;
        best = make_schedule(start, inst);
      }
      return;
    }
    const int v = (*topo)[depth];
    const auto vi = static_cast<std::size_t>(v);
    int es = 0;
    for (int p : pred[vi]) es = std::max(es, start[static_cast<std::size_t>(p)] + inst.durations[static_cast<std::size_t>(p)]);
    const int d = inst.durations[vi];
    const int last = d == 0 ? es : bound - 1 - tail[vi];
    for (int t = es; t <= last; ++t) {
      if (t + tail[vi] >= bound) break;
      if (d > 0 && !profile.fits(v, t)) continue;
      start[vi] = t;
      profile.place(v, t);
      dfs(depth + 1, std::max(current_ms, t + d));
      profile.remove(v, t);
    }
  };
  dfs(0, 0);
  return best;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const FeasibilityReport& report) {
  nlohmann::ordered_json j;
  j["feasible"] = report.feasible();
  auto prec = nlohmann::ordered_json::array();
  for (const auto& v : report.precedence)
    prec.push_back({{"from", v.from}, {"to", v.to}, {"amount", v.amount}});
  j["precedence_violations"] = std::move(prec);
  auto res = nlohmann::ordered_json::array();
  for (const auto& o : report.resources)
    res.push_back({{"time", o.time}, {"resource", o.resource}, {"excess", o.excess}});
  j["resource_overloads"] = std::move(res);
  return j;
}

// Schedule document: {instance, start, makespan, feasible, precedence_violations, resource_overloads}
inline nlohmann::ordered_json schedule_to_json(const Schedule& sched, const ProjectInstance& inst) {
  nlohmann::ordered_json j;
  j["instance"] = inst.name;
  j["start"] = sched.start;
  j["makespan"] = sched.makespan;
  const auto report = to_json(check_feasible(sched, inst));
  for (const auto& [key, value] : report.items()) j[key] = value;
  return j;
}

// Reads the "start" array from a schedule document or from a run summary
// that embeds one under "schedule".
inline std::vector<int> schedule_starts_from_json(const nlohmann::ordered_json& j) {
  const nlohmann::ordered_json* doc = &j;
  if (!j.contains("start") && j.contains("schedule") && j["schedule"].is_object()) doc = &j["schedule"];
  if (!doc->contains("start") || !(*doc)["start"].is_array())
    throw ParseError("schedule JSON has no \"start\" array");
  try {
    return (*doc)["start"].get<std::vector<int>>();
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed schedule JSON: ") + ex.what());
  }
}

}  // namespace gradsched
