#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lmsc/markov.hpp"

using namespace lmsc;

namespace {

MarkovChain paper_chain() {
  return MarkovChain{Table::from_rows({{0.950, 0.050}, {0.025, 0.975}}), {1.0 / 3.0, 2.0 / 3.0}};
}

const std::vector<EmissionDistribution> two_gaussians{Gaussian{0.4, 0.2}, Gaussian{1.0, 0.2}};

}  // namespace

TEST(Stationary, PaperChain) {
  const auto pi = stationary_distribution(paper_chain());
  EXPECT_NEAR(pi[0], 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(pi[1], 2.0 / 3.0, 1e-12);
}

TEST(Stationary, Symmetric) {
  const auto pi = stationary_distribution(uniform_chain(2, 0.5));
  EXPECT_NEAR(pi[0], 0.5, 1e-15);
  EXPECT_NEAR(pi[1], 0.5, 1e-15);
}

TEST(Stationary, IdentityIsAmbiguous) {
  const MarkovChain chain{Table::from_rows({{1.0, 0.0}, {0.0, 1.0}}), {0.5, 0.5}};
  try {
    stationary_distribution(chain);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ambiguous_stationary);
  }
}

TEST(Stationary, InvariantUnderP) {
  const MarkovChain chain{Table::from_rows({{0.96, 0.025, 0.015}, {0.11, 0.73, 0.16}, {0.012, 0.028, 0.96}}),
                          {1.0 / 3, 1.0 / 3, 1.0 / 3}};
  const auto pi = stationary_distribution(chain);
  double total = 0;
  for (std::size_t j = 0; j < 3; ++j) {
    double next = 0;
    for (std::size_t i = 0; i < 3; ++i) next += pi[i] * chain.transition(i, j);
    EXPECT_NEAR(next, pi[j], 1e-12);
    total += pi[j];
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Durations, ClosedForm) {
  const auto d = mean_state_durations(paper_chain());
  EXPECT_NEAR(d[0], 20.0, 1e-9);
  EXPECT_NEAR(d[1], 40.0, 1e-9);
  const MarkovChain leave{Table::from_rows({{0.0, 1.0}, {1.0, 0.0}}), {0.5, 0.5}};
  EXPECT_EQ(mean_state_durations(leave)[0], 1.0);
}

TEST(Durations, AbsorbingStateThrows) {
  const MarkovChain chain{Table::from_rows({{1.0, 0.0}, {0.5, 0.5}}), {0.5, 0.5}};
  try {
    mean_state_durations(chain);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::infinite_duration);
  }
}

TEST(Chain, ValidateRejectsNonStochasticRows) {
  const MarkovChain chain{Table::from_rows({{0.9, 0.2}, {0.5, 0.5}}), {0.5, 0.5}};
  EXPECT_THROW(chain.validate(), Error);
  const MarkovChain bad_initial{Table::from_rows({{0.9, 0.1}, {0.5, 0.5}}), {0.7, 0.7}};
  EXPECT_THROW(bad_initial.validate(), Error);
}

TEST(UniformChain, Layout) {
  const auto c = uniform_chain(3, 0.8);
  EXPECT_DOUBLE_EQ(c.transition(0, 0), 0.8);
  EXPECT_DOUBLE_EQ(c.transition(0, 2), 0.1);
  EXPECT_DOUBLE_EQ(c.initial[1], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(uniform_chain(1, 0.3).transition(0, 0), 1.0);
}

TEST(Simulate, StateFrequency) {
  // Runs are long (mean 20 and 40 steps), so one path of 1e5 steps has a
  // standard error near 0.0075 on the state share. Average five paths.
  double total = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const auto sim = simulate(paper_chain(), two_gaussians, 100000, rng);
    double ones = 0;
    for (auto s : sim.states) ones += s == 0 ? 1.0 : 0.0;
    EXPECT_NEAR(ones / 100000.0, 1.0 / 3.0, 0.0225) << "seed " << seed;
    total += ones / 100000.0;
  }
  EXPECT_NEAR(total / 5.0, 1.0 / 3.0, 0.01);
}

TEST(Simulate, SingleState) {
  Rng rng(1);
  const auto sim = simulate(uniform_chain(1, 1.0), std::vector<EmissionDistribution>{Rayleigh{1.0}}, 50, rng);
  for (auto s : sim.states) EXPECT_EQ(s, 0u);
}

TEST(Simulate, DeterministicAlternation) {
  Rng rng(3);
  const MarkovChain chain{Table::from_rows({{0.0, 1.0}, {1.0, 0.0}}), {1.0, 0.0}};
  const auto sim = simulate(chain, two_gaussians, 9, rng);
  for (std::size_t t = 0; t < 9; ++t) EXPECT_EQ(sim.states[t], t % 2);
}

TEST(Simulate, TransitionCountsWithinThreeStandardErrors) {
  Rng rng(99);
  const auto chain = paper_chain();
  const auto sim = simulate(chain, two_gaussians, 100000, rng);
  double counts[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t t = 0; t + 1 < sim.states.size(); ++t) counts[sim.states[t]][sim.states[t + 1]] += 1;
  for (std::size_t i = 0; i < 2; ++i) {
    const double row = counts[i][0] + counts[i][1];
    for (std::size_t j = 0; j < 2; ++j) {
      const double p = chain.transition(i, j);
      const double se = std::sqrt(p * (1 - p) / row);
      EXPECT_LT(std::abs(counts[i][j] / row - p), 3 * se);
    }
  }
}

TEST(Simulate, Reproducible) {
  Rng a(5), b(5);
  const auto x = simulate(paper_chain(), two_gaussians, 1000, a);
  const auto y = simulate(paper_chain(), two_gaussians, 1000, b);
  EXPECT_EQ(x.states, y.states);
  EXPECT_EQ(x.observations.values, y.observations.values);
}

TEST(Simulate, Errors) {
  Rng rng(1);
  EXPECT_THROW(simulate(paper_chain(), std::vector<EmissionDistribution>{Gaussian{0, 1}}, 10, rng), Error);
  EXPECT_THROW(simulate(paper_chain(), two_gaussians, 0, rng), Error);
}

TEST(MergeShortRuns, AbsorbsIntoPrecedingRun) {
  const StatePath path{0, 0, 0, 1, 0, 0, 2, 2, 2};
  EXPECT_EQ(merge_short_runs(path, 2), (StatePath{0, 0, 0, 0, 0, 0, 2, 2, 2}));
  EXPECT_EQ(merge_short_runs(path, 1), path);
}

TEST(MergeShortRuns, LeadingShortRunTakesFollowingState) {
  const StatePath path{1, 0, 0, 0};
  EXPECT_EQ(merge_short_runs(path, 2), (StatePath{0, 0, 0, 0}));
}

TEST(MeanRunLengths, Counts) {
  const auto d = mean_run_lengths(StatePath{0, 0, 1, 0, 0, 0, 1, 1}, 3);
  EXPECT_DOUBLE_EQ(d[0], 2.5);
  EXPECT_DOUBLE_EQ(d[1], 1.5);
  EXPECT_DOUBLE_EQ(d[2], 0.0);
}
