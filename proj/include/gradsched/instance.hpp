#pragma once

// Project instances: PSPLIB single-mode parsing, validation, canonical
// writers and a seeded synthetic generator.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradsched/error.hpp"

namespace gradsched {

struct Edge {
  int from = 0;
  int to = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

// Activities are 0-based and include the PSPLIB dummy source/sink jobs.
// Requirements are stored row-major, one row of K entries per activity.
struct ProjectInstance {
  std::string name;
  int n = 0;
  std::vector<int> durations;
  std::vector<Edge> edges;
  std::vector<int> requirements;
  std::vector<int> capacities;
  int horizon = 0;

  int resource_count() const { return static_cast<int>(capacities.size()); }
  int requirement(int activity, int k) const {
    return requirements[static_cast<std::size_t>(activity) * capacities.size() +
                        static_cast<std::size_t>(k)];
  }
  int& requirement(int activity, int k) {
    return requirements[static_cast<std::size_t>(activity) * capacities.size() +
                        static_cast<std::size_t>(k)];
  }

  friend bool operator==(const ProjectInstance&, const ProjectInstance&) = default;
};

// ---------------------------------------------------------------------------
// Graph helpers
// ---------------------------------------------------------------------------

inline std::vector<std::vector<int>> successor_lists(const ProjectInstance& inst) {
  std::vector<std::vector<int>> succ(static_cast<std::size_t>(inst.n));
  for (const Edge& e : inst.edges) succ[static_cast<std::size_t>(e.from)].push_back(e.to);
  return succ;
}

inline std::vector<std::vector<int>> predecessor_lists(const ProjectInstance& inst) {
  std::vector<std::vector<int>> pred(static_cast<std::size_t>(inst.n));
  for (const Edge& e : inst.edges) pred[static_cast<std::size_t>(e.to)].push_back(e.from);
  return pred;
}

// Kahn's algorithm with a min-index queue so the order is deterministic.
// Returns nullopt when the precedence graph has a cycle.
inline std::optional<std::vector<int>> topological_order(const ProjectInstance& inst) {
  const auto succ = successor_lists(inst);
  std::vector<int> indegree(static_cast<std::size_t>(inst.n), 0);
  for (const Edge& e : inst.edges) ++indegree[static_cast<std::size_t>(e.to)];
  std::vector<int> ready;
  for (int i = 0; i < inst.n; ++i)
    if (indegree[static_cast<std::size_t>(i)] == 0) ready.push_back(i);
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(inst.n));
  while (!ready.empty()) {
    auto it = std::min_element(ready.begin(), ready.end());
    const int v = *it;
    ready.erase(it);
    order.push_back(v);
    for (int w : succ[static_cast<std::size_t>(v)])
      if (--indegree[static_cast<std::size_t>(w)] == 0) ready.push_back(w);
  }
  if (static_cast<int>(order.size()) != inst.n) return std::nullopt;
  return order;
}

// Earliest precedence-feasible start of every activity (forward CPM pass).
inline std::vector<int> earliest_starts(const ProjectInstance& inst,
                                        const std::vector<int>& topo) {
  const auto pred = predecessor_lists(inst);
  std::vector<int> es(static_cast<std::size_t>(inst.n), 0);
  for (int v : topo)
    for (int p : pred[static_cast<std::size_t>(v)])
      es[static_cast<std::size_t>(v)] =
          std::max(es[static_cast<std::size_t>(v)],
                   es[static_cast<std::size_t>(p)] + inst.durations[static_cast<std::size_t>(p)]);
  return es;
}

inline int longest_path_length(const ProjectInstance& inst, const std::vector<int>& topo) {
  const auto es = earliest_starts(inst, topo);
  int best = 0;
  for (int i = 0; i < inst.n; ++i)
    best = std::max(best, es[static_cast<std::size_t>(i)] + inst.durations[static_cast<std::size_t>(i)]);
  return best;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class ViolationKind { kShape, kBadEdge, kCycle, kCapacityExceeded, kNonPositiveCapacity, kHorizon };

struct InstanceViolation {
  ViolationKind kind;
  std::string message;
};

inline std::string to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kShape: return "shape";
    case ViolationKind::kBadEdge: return "bad edge";
    case ViolationKind::kCycle: return "cycle";
    case ViolationKind::kCapacityExceeded: return "capacity exceeded";
    case ViolationKind::kNonPositiveCapacity: return "non-positive capacity";
    case ViolationKind::kHorizon: return "horizon below critical path";
  }
  return "unknown";
}

inline std::vector<InstanceViolation> validate_instance(const ProjectInstance& inst) {
  std::vector<InstanceViolation> out;
  const auto n = static_cast<std::size_t>(inst.n);
  const auto K = inst.capacities.size();
  if (inst.n < 1 || inst.durations.size() != n || inst.requirements.size() != n * K) {
    out.push_back({ViolationKind::kShape, "array sizes do not match activity/resource counts"});
    return out;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (inst.durations[i] < 0)
      out.push_back({ViolationKind::kShape, "negative duration for activity " + std::to_string(i)});
  bool edges_ok = true;
  for (const Edge& e : inst.edges) {
    if (e.from < 0 || e.to < 0 || e.from >= inst.n || e.to >= inst.n || e.from == e.to) {
      out.push_back({ViolationKind::kBadEdge, "invalid edge (" + std::to_string(e.from) + "," +
                                                  std::to_string(e.to) + ")"});
      edges_ok = false;
    }
  }
  for (std::size_t k = 0; k < K; ++k)
    if (inst.capacities[k] <= 0)
      out.push_back({ViolationKind::kNonPositiveCapacity, "resource " + std::to_string(k) +
                                                              " has capacity " +
                                                              std::to_string(inst.capacities[k])});
  for (int i = 0; i < inst.n; ++i) {
    for (int k = 0; k < static_cast<int>(K); ++k) {
      const int r = inst.requirement(i, k);
      if (r < 0) {
        out.push_back({ViolationKind::kShape, "negative requirement for activity " + std::to_string(i)});
      } else if (inst.durations[static_cast<std::size_t>(i)] > 0 && r > inst.capacities[static_cast<std::size_t>(k)]) {
        out.push_back({ViolationKind::kCapacityExceeded,
                       "activity " + std::to_string(i) + " requires " + std::to_string(r) +
                           " of resource " + std::to_string(k) + " (capacity " +
                           std::to_string(inst.capacities[static_cast<std::size_t>(k)]) + ")"});
      }
    }
  }
  if (!edges_ok) return out;
  const auto topo = topological_order(inst);
  if (!topo) {
    out.push_back({ViolationKind::kCycle, "precedence graph contains a cycle"});
    return out;
  }
  const int cp = longest_path_length(inst, *topo);
  if (inst.horizon < cp)
    out.push_back({ViolationKind::kHorizon, "horizon " + std::to_string(inst.horizon) +
                                                " is below critical path length " + std::to_string(cp)});
  return out;
}

// ---------------------------------------------------------------------------
// PSPLIB .sm parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(pos, end - pos));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    pos = end + 1;
  }
  return lines;
}

inline std::vector<std::string> tokens(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

inline int to_int(const std::string& tok, const std::string& context) {
  int value = 0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last)
    throw ParseError("non-integer field '" + tok + "' in " + context);
  return value;
}

inline bool is_separator(const std::string& line) {
  const auto t = line.find_first_not_of(" \t");
  return t == std::string::npos || line[t] == '*' || line[t] == '-';
}

// Whitespace-insensitive prefix match: every keyword token but the last must
// equal the line's token, the last only has to prefix it.
inline bool starts_with_word(const std::string& line, std::string_view word) {
  const auto have = tokens(line);
  const auto want = tokens(std::string(word));
  if (want.empty() || have.size() < want.size()) return false;
  for (std::size_t i = 0; i + 1 < want.size(); ++i)
    if (have[i] != want[i]) return false;
  return have[want.size() - 1].starts_with(want.back());
}

inline std::size_t find_line(const std::vector<std::string>& lines, std::string_view keyword,
                             std::size_t from = 0) {
  for (std::size_t i = from; i < lines.size(); ++i)
    if (starts_with_word(lines[i], keyword)) return i;
  throw ParseError("missing section '" + std::string(keyword) + "'");
}

// Integer after the ':' of a "key : value" header line.
inline int header_value(const std::vector<std::string>& lines, std::string_view keyword) {
  const std::string& line = lines[find_line(lines, keyword)];
  const auto colon = line.find(':');
  if (colon == std::string::npos)
    throw ParseError("malformed header line for '" + std::string(keyword) + "'");
  const auto toks = tokens(line.substr(colon + 1));
  if (toks.empty()) throw ParseError("missing value for '" + std::string(keyword) + "'");
  return to_int(toks.front(), std::string(keyword));
}

// Data rows following a section header: skips the column-title line and
// separators, stops at the next separator after data has started.
inline std::vector<std::vector<std::string>> section_rows(const std::vector<std::string>& lines,
                                                         std::string_view keyword) {
  std::size_t i = find_line(lines, keyword) + 1;
  std::vector<std::vector<std::string>> rows;
  bool started = false;
  for (; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (is_separator(line)) {
      if (started) break;
      continue;
    }
    auto toks = tokens(line);
    if (toks.empty()) continue;
    if (!started && !std::isdigit(static_cast<unsigned char>(toks.front().front()))) continue;
    started = true;
    rows.push_back(std::move(toks));
  }
  return rows;
}

}  // namespace detail

// Parses a single-mode PSPLIB document. The instance is validated before it
// is returned; any structural violation is reported as a ParseError.
inline ProjectInstance parse_instance(std::string_view text, std::string name = "") {
  using namespace detail;
  const auto lines = split_lines(text);
  ProjectInstance inst;
  inst.name = std::move(name);

  inst.n = header_value(lines, "jobs");
  inst.horizon = header_value(lines, "horizon");
  const int renewable = header_value(lines, "- renewable");
  const int nonrenewable = header_value(lines, "- nonrenewable");
  const int doubly = header_value(lines, "- doubly constrained");
  if (nonrenewable != 0 || doubly != 0)
    throw UnsupportedFormat("only renewable resources are supported (found " +
                            std::to_string(nonrenewable) + " nonrenewable, " +
                            std::to_string(doubly) + " doubly constrained)");
  if (inst.n < 1 || renewable < 0) throw ParseError("invalid job or resource count");
  const auto n = static_cast<std::size_t>(inst.n);
  const auto K = static_cast<std::size_t>(renewable);

  // PRECEDENCE RELATIONS: jobnr #modes #successors successors...
  const auto prec = section_rows(lines, "PRECEDENCE RELATIONS");
  if (prec.size() != n)
    throw ParseError("job count mismatch: header declares " + std::to_string(n) +
                     " jobs, precedence section lists " + std::to_string(prec.size()));
  for (std::size_t row = 0; row < n; ++row) {
    const auto& t = prec[row];
    if (t.size() < 3) throw ParseError("malformed precedence row " + std::to_string(row + 1));
    const int job = to_int(t[0], "precedence job number");
    const int modes = to_int(t[1], "precedence mode count");
    const int nsucc = to_int(t[2], "precedence successor count");
    if (job != static_cast<int>(row) + 1)
      throw ParseError("precedence rows out of order at job " + t[0]);
    if (modes != 1)
      throw UnsupportedFormat("multi-mode instance (job " + t[0] + " has " + t[1] +
                              " modes); only single-mode files are supported");
    if (nsucc < 0 || t.size() != static_cast<std::size_t>(3 + nsucc))
      throw ParseError("successor count mismatch for job " + t[0]);
    for (int s = 0; s < nsucc; ++s) {
      const int succ = to_int(t[static_cast<std::size_t>(3 + s)], "successor");
      if (succ < 1 || succ > inst.n) throw ParseError("successor " + std::to_string(succ) + " out of range");
      inst.edges.push_back({job - 1, succ - 1});
    }
  }

  // REQUESTS/DURATIONS: jobnr mode duration r_1..r_K
  const auto req = section_rows(lines, "REQUESTS/DURATIONS");
  if (req.size() != n)
    throw ParseError("job count mismatch: header declares " + std::to_string(n) +
                     " jobs, requests section lists " + std::to_string(req.size()));
  inst.durations.assign(n, 0);
  inst.capacities.assign(K, 0);
  inst.requirements.assign(n * K, 0);
  for (std::size_t row = 0; row < n; ++row) {
    const auto& t = req[row];
    if (t.size() != 3 + K) throw ParseError("malformed request row for job " + std::to_string(row + 1));
    if (to_int(t[0], "request job number") != static_cast<int>(row) + 1)
      throw ParseError("request rows out of order at job " + t[0]);
    if (to_int(t[1], "mode") != 1) throw UnsupportedFormat("multi-mode request row for job " + t[0]);
    inst.durations[row] = to_int(t[2], "duration");
    for (std::size_t k = 0; k < K; ++k) inst.requirements[row * K + k] = to_int(t[3 + k], "request");
  }

  // RESOURCEAVAILABILITIES: a title line (R 1 R 2 ...) then K integers.
  const std::size_t avail = find_line(lines, "RESOURCEAVAILABILITIES");
  std::optional<std::vector<std::string>> values;
  for (std::size_t i = avail + 1; i < lines.size() && !values; ++i) {
    if (is_separator(lines[i])) continue;
    auto toks = tokens(lines[i]);
    if (!toks.empty() && std::isdigit(static_cast<unsigned char>(toks.front().front()))) values = std::move(toks);
  }
  if (K > 0 && (!values || values->size() != K))
    throw ParseError("resource availability count does not match " + std::to_string(K) + " resources");
  for (std::size_t k = 0; k < K; ++k) inst.capacities[k] = to_int((*values)[k], "availability");

  if (const auto v = validate_instance(inst); !v.empty())
    throw ParseError("invalid instance: " + v.front().message);
  return inst;
}

inline std::string stem_of(const std::string& path) {
  const auto slash = path.find_last_of("/\\");
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  const auto dot = base.find_last_of('.');
  return dot == std::string::npos ? base : base.substr(0, dot);
}

inline ProjectInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read instance file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_instance(buf.str(), stem_of(path));
}

// ---------------------------------------------------------------------------
// Canonical writers
// ---------------------------------------------------------------------------

// Writes the instance in PSPLIB single-mode layout; parse_instance reads it back.
inline std::string write_sm(const ProjectInstance& inst) {
  const auto succ = successor_lists(inst);
  const int K = inst.resource_count();
  std::ostringstream os;
  const std::string stars(72, '*');
  os << stars << "\n";
  os << "file with basedata            : " << inst.name << "\n";
  os << stars << "\n";
  os << "projects                      :  1\n";
  os << "jobs (incl. supersource/sink ):  " << inst.n << "\n";
  os << "horizon                       :  " << inst.horizon << "\n";
  os << "RESOURCES\n";
  os << "  - renewable                 :  " << K << "   R\n";
  os << "  - nonrenewable              :  0   N\n";
  os << "  - doubly constrained        :  0   D\n";
  os << stars << "\n";
  os << "PRECEDENCE RELATIONS:\n";
  os << "jobnr.    #modes  #successors   successors\n";
  for (int i = 0; i < inst.n; ++i) {
    const auto& s = succ[static_cast<std::size_t>(i)];
    os << "  " << (i + 1) << "        1          " << s.size();
    for (int j : s) os << "   " << (j + 1);
    os << "\n";
  }
  os << stars << "\n";
  os << "REQUESTS/DURATIONS:\n";
  os << "jobnr. mode duration";
  for (int k = 0; k < K; ++k) os << "  R " << (k + 1);
  os << "\n" << std::string(72, '-') << "\n";
  for (int i = 0; i < inst.n; ++i) {
    os << "  " << (i + 1) << "      1     " << inst.durations[static_cast<std::size_t>(i)];
    for (int k = 0; k < K; ++k) os << "    " << inst.requirement(i, k);
    os << "\n";
  }
  os << stars << "\n";
  os << "RESOURCEAVAILABILITIES:\n";
  for (int k = 0; k < K; ++k) os << "  R " << (k + 1);
  os << "\n";
  for (int k = 0; k < K; ++k) os << "   " << inst.capacities[static_cast<std::size_t>(k)];
  os << "\n" << stars << "\n";
  return os.str();
}

// Canonical JSON form. Key order is fixed:
//   name, n, horizon, durations, capacities, requirements (n rows of K), edges ([from,to] pairs)
inline nlohmann::ordered_json to_json(const ProjectInstance& inst) {
  nlohmann::ordered_json j;
  j["name"] = inst.name;
  j["n"] = inst.n;
  j["horizon"] = inst.horizon;
  j["durations"] = inst.durations;
  j["capacities"] = inst.capacities;
  auto rows = nlohmann::ordered_json::array();
  for (int i = 0; i < inst.n; ++i) {
    auto row = nlohmann::ordered_json::array();
    for (int k = 0; k < inst.resource_count(); ++k) row.push_back(inst.requirement(i, k));
    rows.push_back(std::move(row));
  }
  j["requirements"] = std::move(rows);
  auto edges = nlohmann::ordered_json::array();
  for (const Edge& e : inst.edges) edges.push_back({e.from, e.to});
  j["edges"] = std::move(edges);
  return j;
}

inline ProjectInstance instance_from_json(const nlohmann::ordered_json& j) {
  ProjectInstance inst;
  try {
    inst.name = j.at("name").get<std::string>();
    inst.n = j.at("n").get<int>();
    inst.horizon = j.at("horizon").get<int>();
    inst.durations = j.at("durations").get<std::vector<int>>();
    inst.capacities = j.at("capacities").get<std::vector<int>>();
    for (const auto& row : j.at("requirements"))
      for (const auto& r : row) inst.requirements.push_back(r.get<int>());
    for (const auto& e : j.at("edges")) inst.edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed instance JSON: ") + ex.what());
  }
  return inst;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

// `activities` counts the dummy source and sink, matching ProjectInstance::n.
struct GeneratorSpec {
  int activities = 8;
  int min_duration = 1;
  int max_duration = 5;
  double edge_density = 0.3;
  int resources = 1;
  int min_capacity = 2;
  int max_capacity = 6;
  double request_density = 0.7;
};

inline ProjectInstance synth_instance(const GeneratorSpec& spec, std::uint64_t seed) {
  if (spec.activities < 2 || spec.resources < 0 || spec.min_duration < 0 ||
      spec.max_duration < spec.min_duration || spec.min_capacity < 1 ||
      spec.max_capacity < spec.min_capacity || spec.edge_density < 0.0 || spec.edge_density > 1.0 ||
      spec.request_density < 0.0 || spec.request_density > 1.0)
    throw InvalidArgument("inconsistent generator spec");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform_int = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  ProjectInstance inst;
  inst.name = "synth_n" + std::to_string(spec.activities) + "_k" + std::to_string(spec.resources) +
              "_s" + std::to_string(seed);
  inst.n = spec.activities;
  const int n = inst.n;
  const int K = spec.resources;
  const int sink = n - 1;
  inst.durations.assign(static_cast<std::size_t>(n), 0);
  for (int i = 1; i < sink; ++i) inst.durations[static_cast<std::size_t>(i)] = uniform_int(spec.min_duration, spec.max_duration);

  inst.capacities.resize(static_cast<std::size_t>(K));
  for (auto& c : inst.capacities) c = uniform_int(spec.min_capacity, spec.max_capacity);
  inst.requirements.assign(static_cast<std::size_t>(n * K), 0);
  for (int i = 1; i < sink; ++i)
    for (int k = 0; k < K; ++k)
      if (unit(rng) < spec.request_density)
        inst.requirement(i, k) = uniform_int(1, inst.capacities[static_cast<std::size_t>(k)]);

  // Forward edges between real activities keep the graph acyclic.
  std::vector<bool> has_pred(static_cast<std::size_t>(n), false), has_succ(static_cast<std::size_t>(n), false);
  for (int i = 1; i < sink; ++i)
    for (int j = i + 1; j < sink; ++j)
      if (unit(rng) < spec.edge_density) {
        inst.edges.push_back({i, j});
        has_succ[static_cast<std::size_t>(i)] = has_pred[static_cast<std::size_t>(j)] = true;
      }
  for (int i = 1; i < sink; ++i)
    if (!has_pred[static_cast<std::size_t>(i)]) inst.edges.push_back({0, i});
  for (int i = 1; i < sink; ++i)
    if (!has_succ[static_cast<std::size_t>(i)]) inst.edges.push_back({i, sink});
  if (n == 2) inst.edges.push_back({0, 1});
  std::sort(inst.edges.begin(), inst.edges.end(),
            [](const Edge& a, const Edge& b) { return std::pair(a.from, a.to) < std::pair(b.from, b.to); });

  inst.horizon = std::max(1, std::accumulate(inst.durations.begin(), inst.durations.end(), 0));
  return inst;
}

// Same precedence network with every resource removed.
inline ProjectInstance without_resources(const ProjectInstance& inst) {
  ProjectInstance out = inst;
  out.capacities.clear();
  out.requirements.clear();
  return out;
}

// Source -> activities with the given durations in sequence -> sink, no resources.
inline ProjectInstance make_chain(const std::vector<int>& durations, std::string name = "chain") {
  ProjectInstance inst;
  inst.name = std::move(name);
  inst.n = static_cast<int>(durations.size()) + 2;
  inst.durations.push_back(0);
  inst.durations.insert(inst.durations.end(), durations.begin(), durations.end());
  inst.durations.push_back(0);
  for (int i = 0; i + 1 < inst.n; ++i) inst.edges.push_back({i, i + 1});
  inst.horizon = std::max(1, std::accumulate(durations.begin(), durations.end(), 0));
  return inst;
}

}  // namespace gradsched
