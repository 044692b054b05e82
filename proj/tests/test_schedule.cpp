#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "gradsched/relaxation.hpp"
#include "gradsched/schedule.hpp"
#include "support.hpp"

namespace gs = gradsched;

namespace {

// Source, two parallel branches (5) and (2, 2), sink.
gs::ProjectInstance parallel_branches() {
  gs::ProjectInstance inst;
  inst.name = "branches";
  inst.n = 5;
  inst.durations = {0, 5, 2, 2, 0};
  inst.edges = {{0, 1}, {0, 2}, {2, 3}, {1, 4}, {3, 4}};
  inst.horizon = 9;
  return inst;
}

}  // namespace

TEST(ExtractSchedule, RoundsHalfUpAndAnchors) {
  gs::ProjectInstance inst;
  inst.n = 3;
  inst.durations = {1, 1, 1};
  inst.horizon = 8;
  const std::vector<double> s{0.0, 2.49, 5.51};
  EXPECT_EQ(gs::extract_schedule<double>(s, inst).start, (std::vector<int>{0, 2, 6}));
  const std::vector<double> halves{0.5, 1.5, 2.5};
  EXPECT_EQ(gs::extract_schedule<double>(halves, inst).start, (std::vector<int>{0, 1, 2}));

  gs::ProjectInstance two;
  two.n = 2;
  two.durations = {1, 1};
  two.horizon = 4;
  const std::vector<double> shifted{1.2, 3.2};
  const auto sched = gs::extract_schedule<double>(shifted, two);
  EXPECT_EQ(sched.start, (std::vector<int>{0, 2}));
  EXPECT_EQ(sched.makespan, 3);
}

TEST(ExtractSchedule, IntegralInputIsUnchanged) {
  const auto inst = gstest::j301_1();
  const auto ref = gs::ssgs(inst);
  const std::vector<double> s(ref.start.begin(), ref.start.end());
  EXPECT_EQ(gs::extract_schedule<double>(s, inst), ref);
  // Through the softplus embedding and back.
  const auto theta = gs::theta_for_starts<double>(s);
  EXPECT_EQ(gs::extract_schedule<double>(gs::compute_start_times(theta), inst), ref);
}

TEST(ExtractSchedule, RejectsNonFinite) {
  const auto inst = gs::make_chain({1});
  const std::vector<double> s{0.0, std::nan(""), 1.0};
  EXPECT_THROW(gs::extract_schedule<double>(s, inst), gs::NonFiniteError);
}

TEST(CheckFeasible, SsgsOnJ301IsFeasible) {
  const auto inst = gstest::j301_1();
  const auto report = gs::check_feasible(gs::ssgs(inst), inst);
  EXPECT_TRUE(report.feasible());
}

TEST(CheckFeasible, ReversedChainReportsBothEdges) {
  gs::ProjectInstance chain;
  chain.n = 3;
  chain.durations = {2, 3, 4};
  chain.edges = {{0, 1}, {1, 2}};
  chain.horizon = 9;
  const auto sched = gs::make_schedule({7, 4, 0}, chain);
  const auto report = gs::check_feasible(sched, chain);
  EXPECT_EQ(report.precedence, (std::vector<gs::PrecedenceViolation>{{0, 1, 5}, {1, 2, 7}}));
  EXPECT_TRUE(report.resources.empty());
}

TEST(CheckFeasible, ForcedClash) {
  const auto inst = gstest::clash_instance();
  const auto report = gs::check_feasible(gs::make_schedule({0, 0}, inst), inst);
  ASSERT_EQ(report.resources.size(), 1u);
  EXPECT_EQ(report.resources[0], (gs::ResourceOverload{0, 0, 1}));
  EXPECT_TRUE(gs::check_feasible(gs::make_schedule({0, 1}, inst), inst).feasible());
}

TEST(CheckFeasible, OverloadsExpandedPerTimeUnit) {
  auto inst = gstest::clash_instance();
  inst.durations = {3, 2};
  inst.horizon = 5;
  const auto report = gs::check_feasible(gs::make_schedule({0, 1}, inst), inst);
  EXPECT_EQ(report.resources, (std::vector<gs::ResourceOverload>{{1, 0, 1}, {2, 0, 1}}));
}

TEST(CheckFeasible, AgreesWithNaiveOracle) {
  std::mt19937_64 rng(31);
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto inst = gs::synth_instance(gstest::small_spec(1 + seed % 3), 300 + seed);
    for (int trial = 0; trial < 400; ++trial) {
      const auto start = gstest::random_starts(rng, inst.n, 1 + trial % inst.horizon);
      const gs::Schedule sched{start, gs::compute_makespan(start, inst)};
      ASSERT_EQ(gs::is_feasible(sched, inst), gstest::naive_feasible(start, inst)) << inst.name << " trial " << trial;
    }
  }
  const auto j30 = gstest::j301_1();
  for (int trial = 0; trial < 200; ++trial) {
    const auto start = gstest::random_starts(rng, j30.n, 60);
    const gs::Schedule sched{start, gs::compute_makespan(start, j30)};
    ASSERT_EQ(gs::is_feasible(sched, j30), gstest::naive_feasible(start, j30));
  }
}

TEST(CheckFeasible, SizeMismatchThrows) {
  const auto inst = gstest::clash_instance();
  EXPECT_THROW(gs::check_feasible(gs::Schedule{{0}, 1}, inst), gs::InvalidArgument);
  EXPECT_THROW(gs::make_schedule({0, 1, 2}, inst), gs::InvalidArgument);
}

TEST(CriticalPath, Examples) {
  EXPECT_EQ(gs::critical_path(gs::make_chain({2, 3, 4})), 9);
  EXPECT_EQ(gs::critical_path(parallel_branches()), 5);
  EXPECT_EQ(gs::critical_path(gstest::j301_1()), 38);
  EXPECT_EQ(gstest::naive_critical_path(gstest::j301_1()), 38);
}

TEST(CriticalPath, CycleThrows) {
  auto inst = gs::make_chain({1, 1});
  inst.edges.push_back({2, 1});
  EXPECT_THROW(gs::critical_path(inst), gs::InvalidArgument);
}

TEST(Ssgs, ResourceFreeMatchesCriticalPath) {
  EXPECT_EQ(gs::ssgs(parallel_branches()).makespan, 5);
  EXPECT_EQ(gs::ssgs(gs::without_resources(gstest::j301_1())).makespan, 38);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = gs::without_resources(gs::synth_instance(gstest::small_spec(), seed));
    EXPECT_EQ(gs::ssgs(inst).makespan, gs::critical_path(inst));
  }
}

TEST(Ssgs, SerializesClash) { EXPECT_EQ(gs::ssgs(gstest::clash_instance()).makespan, 2); }

TEST(Ssgs, J301FullConstraints) {
  const auto inst = gstest::j301_1();
  const auto sched = gs::ssgs(inst);
  EXPECT_GE(sched.makespan, 43);
  EXPECT_EQ(sched.makespan, 49);  // regression fixture
  EXPECT_TRUE(gstest::naive_feasible(sched.start, inst));
}

TEST(Ssgs, AlwaysFeasible) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    gs::GeneratorSpec spec = gstest::small_spec(static_cast<int>(seed % 4));
    spec.activities = 2 + static_cast<int>(seed % 20);
    spec.edge_density = static_cast<double>(seed % 7) / 6.0;
    const auto inst = gs::synth_instance(spec, seed);
    const auto sched = gs::ssgs(inst);
    ASSERT_TRUE(gstest::naive_feasible(sched.start, inst)) << inst.name;
    EXPECT_EQ(*std::min_element(sched.start.begin(), sched.start.end()), 0);
  }
}

TEST(Ssgs, CustomPriority) {
  const auto inst = gstest::clash_instance();
  const auto second_first = gs::ssgs(inst, [](int i) { return -static_cast<double>(i); });
  EXPECT_EQ(second_first.start, (std::vector<int>{1, 0}));
}

TEST(BruteForce, Examples) {
  EXPECT_EQ(gs::brute_force_optimal(gs::make_chain({2, 3, 4})).makespan, 9);
  EXPECT_EQ(gs::brute_force_optimal(gstest::clash_instance()).makespan, 2);
}

TEST(BruteForce, SizeGuard) {
  EXPECT_THROW(gs::brute_force_optimal(gstest::j301_1()), gs::InvalidArgument);
  EXPECT_THROW(gs::brute_force_optimal(gs::make_chain({1, 1, 1, 1, 1, 1, 1, 1, 1, 1})), gs::InvalidArgument);
  EXPECT_NO_THROW(gs::brute_force_optimal(gs::make_chain({1, 1, 1, 1, 1, 1, 1, 1, 1})));
  gs::BruteForceLimits tight;
  tight.max_horizon = 5;
  EXPECT_THROW(gs::brute_force_optimal(gs::make_chain({2, 3, 4}), tight), gs::InvalidArgument);
}

// Independent enumeration: every start vector in [0, bound)^n checked by the naive oracle.
TEST(BruteForce, MatchesFullEnumerationOnTinyInstances) {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    gs::GeneratorSpec spec = gstest::small_spec(1 + seed % 2);
    spec.activities = 5;
    spec.max_duration = 3;
    const auto inst = gs::synth_instance(spec, 700 + seed);
    const int bound = gs::ssgs(inst).makespan;
    int best = bound;
    std::vector<int> start(inst.n, 0);
    std::function<void(int)> rec = [&](int i) {
      if (i == inst.n) {
        if (gstest::naive_feasible(start, inst)) best = std::min(best, gs::compute_makespan(start, inst));
        return;
      }
      for (int t = 0; t < bound; ++t) {
        start[i] = t;
        rec(i + 1);
      }
    };
    rec(0);
    const auto opt = gs::brute_force_optimal(inst);
    EXPECT_EQ(opt.makespan, best) << inst.name;
    EXPECT_TRUE(gstest::naive_feasible(opt.start, inst));
  }
}

TEST(BruteForce, OracleChain) {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    const auto inst = gs::synth_instance(gstest::small_spec(2), seed);
    const int cp = gs::critical_path(inst);
    const auto opt = gs::brute_force_optimal(inst);
    const int heuristic = gs::ssgs(inst).makespan;
    EXPECT_LE(cp, opt.makespan);
    EXPECT_LE(opt.makespan, heuristic);
    EXPECT_TRUE(gstest::naive_feasible(opt.start, inst));
  }
}

TEST(Repair, ProducesFeasibleScheduleNoEarlierThanRounding) {
  std::mt19937_64 rng(12);
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto inst = gs::synth_instance(gstest::small_spec(2), seed);
    const auto rounded = gs::make_schedule(gstest::random_starts(rng, inst.n, inst.horizon), inst);
    const auto fixed = gs::repair_schedule(rounded, inst);
    EXPECT_TRUE(gstest::naive_feasible(fixed.start, inst));
  }
  const auto inst = gstest::clash_instance();
  const auto fixed = gs::repair_schedule(gs::make_schedule({0, 0}, inst), inst);
  EXPECT_EQ(fixed.makespan, 2);
}

TEST(ScheduleJson, DocumentAndReadBack) {
  const auto inst = gstest::clash_instance();
  const auto j = gs::schedule_to_json(gs::make_schedule({0, 0}, inst), inst);
  EXPECT_EQ(j["instance"], "clash");
  EXPECT_EQ(j["makespan"], 1);
  EXPECT_EQ(j["feasible"], false);
  EXPECT_EQ(j["resource_overloads"].size(), 1u);
  EXPECT_EQ(gs::schedule_starts_from_json(j), (std::vector<int>{0, 0}));
  nlohmann::ordered_json summary;
  summary["schedule"] = j;
  EXPECT_EQ(gs::schedule_starts_from_json(summary), (std::vector<int>{0, 0}));
  EXPECT_THROW(gs::schedule_starts_from_json(nlohmann::ordered_json{{"x", 1}}), gs::ParseError);
  EXPECT_THROW(gs::schedule_starts_from_json(nlohmann::ordered_json{{"start", {"a"}}}), gs::ParseError);
}
