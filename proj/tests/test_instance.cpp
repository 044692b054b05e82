#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>

#include "gradsched/instance.hpp"
#include "support.hpp"

namespace gs = gradsched;
using gs::Edge;

namespace {

const char* kThreeActivities = R"(************************************************************************
jobs (incl. supersource/sink ):  3
horizon                       :  5
RESOURCES
  - renewable                 :  1   R
  - nonrenewable              :  0   N
  - doubly constrained        :  0   D
************************************************************************
PRECEDENCE RELATIONS:
jobnr.    #modes  #successors   successors
   1        1          1           2
   2        1          1           3
   3        1          0
************************************************************************
REQUESTS/DURATIONS:
jobnr. mode duration  R 1
------------------------------------------------------------------------
  1      1     0       0
  2      1     5       1
  3      1     0       0
************************************************************************
RESOURCEAVAILABILITIES:
  R 1
    1
************************************************************************
)";

std::string replace(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  if (pos != std::string::npos) text.replace(pos, from.size(), to);
  return text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Counts declared successors with a plain line scan of the precedence block.
int declared_successor_count(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  bool inside = false;
  int total = 0;
  while (std::getline(in, line)) {
    if (line.rfind("PRECEDENCE RELATIONS", 0) == 0) {
      inside = true;
      std::getline(in, line);  // column titles
      continue;
    }
    if (!inside) continue;
    if (line.rfind("****", 0) == 0) break;
    std::istringstream row(line);
    int job, modes, succ;
    if (row >> job >> modes >> succ) total += succ;
  }
  return total;
}

}  // namespace

TEST(ParseInstance, J301HasPaperDimensions) {
  const auto inst = gstest::j301_1();
  EXPECT_EQ(inst.name, "j301_1");
  EXPECT_EQ(inst.n, 32);
  EXPECT_EQ(inst.resource_count(), 4);
  EXPECT_EQ(inst.horizon, 158);
  EXPECT_EQ(inst.capacities, (std::vector<int>{12, 13, 4, 12}));
  EXPECT_EQ(inst.durations.front(), 0);
  EXPECT_EQ(inst.durations.back(), 0);
}

TEST(ParseInstance, J301EdgeCountMatchesDeclaredSuccessors) {
  const std::string text = read_file(gstest::data_path("j301_1.sm"));
  const auto inst = gs::parse_instance(text);
  EXPECT_EQ(static_cast<int>(inst.edges.size()), declared_successor_count(text));
  for (const auto& e : inst.edges) {
    EXPECT_NE(e.from, e.to);
    EXPECT_GE(e.from, 0);
    EXPECT_LT(e.to, inst.n);
  }
}

TEST(ParseInstance, ThreeActivityFixture) {
  const auto inst = gs::parse_instance(kThreeActivities, "tiny");
  EXPECT_EQ(inst.n, 3);
  EXPECT_EQ(inst.durations, (std::vector<int>{0, 5, 0}));
  EXPECT_EQ(inst.edges, (std::vector<Edge>{{0, 1}, {1, 2}}));
  EXPECT_EQ(inst.capacities, (std::vector<int>{1}));
  EXPECT_EQ(inst.requirement(1, 0), 1);
  EXPECT_EQ(inst.horizon, 5);
}

TEST(ParseInstance, ToleratesExtraWhitespace) {
  std::string text = kThreeActivities;
  std::string spaced;
  for (char c : text) {
    spaced += c;
    if (c == ' ') spaced += "  ";
    if (c == '\n') spaced += "\t";
  }
  const auto a = gs::parse_instance(text, "x");
  const auto b = gs::parse_instance(spaced, "x");
  EXPECT_EQ(a, b);
}

TEST(ParseInstance, RejectsJobCountMismatch) {
  const auto text = replace(kThreeActivities, "jobs (incl. supersource/sink ):  3", "jobs (incl. supersource/sink ):  4");
  EXPECT_THROW(gs::parse_instance(text), gs::ParseError);
}

TEST(ParseInstance, RejectsNonIntegerField) {
  const auto text = replace(kThreeActivities, "  2      1     5       1", "  2      1     5.5     1");
  EXPECT_THROW(gs::parse_instance(text), gs::ParseError);
}

TEST(ParseInstance, RejectsMissingSection) {
  const auto text = replace(kThreeActivities, "REQUESTS/DURATIONS:", "REQUESTS:");
  EXPECT_THROW(gs::parse_instance(text), gs::ParseError);
}

TEST(ParseInstance, RejectsMultiMode) {
  const auto text = replace(kThreeActivities, "   2        1          1           3", "   2        2          1           3");
  EXPECT_THROW(gs::parse_instance(text), gs::UnsupportedFormat);
}

TEST(ParseInstance, RejectsNonrenewableResources) {
  EXPECT_THROW(gs::load_instance(gstest::data_path("m11_1.mm")), gs::UnsupportedFormat);
}

TEST(ParseInstance, RejectsHorizonBelowCriticalPath) {
  const auto text = replace(kThreeActivities, "horizon                       :  5", "horizon                       :  4");
  EXPECT_THROW(gs::parse_instance(text), gs::ParseError);
}

TEST(ParseInstance, UnreadableFile) { EXPECT_THROW(gs::load_instance("/nonexistent/x.sm"), gs::Error); }

TEST(ParseInstance, RoundTripThroughCanonicalWriter) {
  const auto inst = gstest::j301_1();
  const auto again = gs::parse_instance(gs::write_sm(inst), inst.name);
  EXPECT_EQ(inst, again);
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    gs::GeneratorSpec spec = gstest::small_spec(1 + static_cast<int>(seed % 3));
    spec.activities = 3 + static_cast<int>(seed % 10);
    const auto synth = gs::synth_instance(spec, seed);
    const auto parsed = gs::parse_instance(gs::write_sm(synth), synth.name);
    EXPECT_EQ(synth, gs::parse_instance(gs::write_sm(parsed), synth.name)) << synth.name;
    EXPECT_EQ(synth, parsed) << synth.name;
  }
}

TEST(InstanceJson, RoundTripAndKeyOrder) {
  const auto inst = gstest::j301_1();
  const auto j = gs::to_json(inst);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"name", "n", "horizon", "durations", "capacities", "requirements", "edges"}));
  EXPECT_EQ(gs::instance_from_json(j), inst);
  EXPECT_EQ(gs::instance_from_json(nlohmann::ordered_json::parse(j.dump())), inst);
  EXPECT_THROW(gs::instance_from_json(nlohmann::ordered_json{{"name", "x"}}), gs::ParseError);
}

TEST(ValidateInstance, J301IsValid) { EXPECT_TRUE(gs::validate_instance(gstest::j301_1()).empty()); }

TEST(ValidateInstance, ReportsTwoCycle) {
  auto inst = gs::make_chain({1, 1});
  inst.edges = {{1, 2}, {2, 1}};
  const auto v = gs::validate_instance(inst);
  ASSERT_FALSE(v.empty());
  EXPECT_TRUE(std::any_of(v.begin(), v.end(), [](const auto& x) { return gs::to_string(x.kind) == "cycle"; }));
}

TEST(ValidateInstance, ReportsCapacityExceeded) {
  auto inst = gstest::clash_instance();
  inst.requirement(0, 0) = inst.capacities[0] + 1;
  const auto v = gs::validate_instance(inst);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(gs::to_string(v[0].kind), "capacity exceeded");
}

TEST(ValidateInstance, ReportsShapeAndEdgeProblems) {
  auto inst = gs::make_chain({2, 3});
  inst.durations.pop_back();
  EXPECT_EQ(gs::validate_instance(inst).front().kind, gs::ViolationKind::kShape);
  inst = gs::make_chain({2, 3});
  inst.edges.push_back({0, 9});
  EXPECT_EQ(gs::validate_instance(inst).front().kind, gs::ViolationKind::kBadEdge);
  inst = gs::make_chain({2, 3});
  inst.horizon = 4;
  EXPECT_EQ(gs::validate_instance(inst).front().kind, gs::ViolationKind::kHorizon);
  inst = gstest::clash_instance();
  inst.capacities[0] = 0;
  const auto v = gs::validate_instance(inst);
  EXPECT_TRUE(std::any_of(v.begin(), v.end(),
                          [](const auto& x) { return x.kind == gs::ViolationKind::kNonPositiveCapacity; }));
}

TEST(SynthInstance, DeterministicPerSeed) {
  gs::GeneratorSpec spec;
  spec.activities = 5;
  EXPECT_EQ(gs::synth_instance(spec, 7), gs::synth_instance(spec, 7));
  EXPECT_NE(gs::synth_instance(spec, 7), gs::synth_instance(spec, 8));
}

TEST(SynthInstance, EightActivitiesTwoResourcesIsValid) {
  EXPECT_TRUE(gs::validate_instance(gs::synth_instance(gstest::small_spec(2), 1)).empty());
}

TEST(SynthInstance, AlwaysValidWithDummyEnds) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    gs::GeneratorSpec spec;
    spec.activities = 2 + static_cast<int>(seed % 15);
    spec.resources = static_cast<int>(seed % 4);
    spec.edge_density = static_cast<double>(seed % 5) / 4.0;
    const auto inst = gs::synth_instance(spec, seed);
    ASSERT_TRUE(gs::validate_instance(inst).empty()) << inst.name;
    EXPECT_EQ(inst.durations.front(), 0);
    EXPECT_EQ(inst.durations.back(), 0);
    for (int k = 0; k < inst.resource_count(); ++k) {
      EXPECT_EQ(inst.requirement(0, k), 0);
      EXPECT_EQ(inst.requirement(inst.n - 1, k), 0);
    }
    int sum = 0;
    for (int d : inst.durations) sum += d;
    EXPECT_EQ(inst.horizon, std::max(1, sum));
  }
}

TEST(SynthInstance, RejectsInconsistentSpec) {
  gs::GeneratorSpec spec;
  spec.activities = -1;
  EXPECT_THROW(gs::synth_instance(spec, 1), gs::InvalidArgument);
  spec = {};
  spec.max_duration = 0;
  EXPECT_THROW(gs::synth_instance(spec, 1), gs::InvalidArgument);
}

TEST(SynthInstance, ChainCriticalPathIsDurationSum) {
  const auto chain = gs::make_chain({2, 3, 4});
  const auto topo = gs::topological_order(chain);
  ASSERT_TRUE(topo.has_value());
  EXPECT_EQ(gs::longest_path_length(chain, *topo), 9);
  EXPECT_EQ(gstest::naive_critical_path(chain), 9);
}

TEST(Graph, TopologicalOrderRespectsEdges) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = gs::synth_instance(gstest::small_spec(), seed);
    const auto topo = gs::topological_order(inst);
    ASSERT_TRUE(topo.has_value());
    std::vector<int> pos(inst.n);
    for (int i = 0; i < inst.n; ++i) pos[(*topo)[i]] = i;
    for (const auto& e : inst.edges) EXPECT_LT(pos[e.from], pos[e.to]);
    EXPECT_EQ(gs::longest_path_length(inst, *topo), gstest::naive_critical_path(inst));
  }
}
