#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <map>
#include <numeric>

#include "bcsync/rules.hpp"

using namespace bcsync;

namespace {

// |freq - p| within z standard errors of a binomial proportion.
void expect_proportion(std::size_t hits, std::size_t trials, double p, double z = 3.0) {
  const double freq = static_cast<double>(hits) / static_cast<double>(trials);
  const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
  EXPECT_LE(std::abs(freq - p), z * se) << "freq " << freq << " vs " << p;
}

// 2x2 Pearson statistic; 10.828 is the 0.001 critical value at one degree of freedom.
double chi_square_2x2(const std::array<std::array<double, 2>, 2>& t) {
  const double total = t[0][0] + t[0][1] + t[1][0] + t[1][1];
  double chi = 0.0;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      const double expected = (t[r][0] + t[r][1]) * (t[0][c] + t[1][c]) / total;
      chi += (t[r][c] - expected) * (t[r][c] - expected) / expected;
    }
  }
  return chi;
}

}  // namespace

TEST(RngStream, SameKeySameSequence) {
  RngStream a(42, 3, StreamPurpose::noise);
  RngStream b(42, 3, StreamPurpose::noise);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next(), b.next());
}

TEST(RngStream, DistinctKeysDiffer) {
  RngStream a(42, 3, StreamPurpose::noise);
  RngStream b(42, 3, StreamPurpose::comm);
  RngStream c(42, 4, StreamPurpose::noise);
  RngStream d(43, 3, StreamPurpose::noise);
  const auto x = a.next();
  EXPECT_NE(x, b.next());
  EXPECT_NE(x, c.next());
  EXPECT_NE(x, d.next());
}

TEST(RngStream, BelowAndUniformRanges) {
  RngStream r(1, 0, StreamPurpose::aux);
  std::array<std::size_t, 7> counts{};
  for (int i = 0; i < 70000; ++i) {
    const auto v = r.below(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
    const double u = r.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  for (auto c : counts) expect_proportion(c, 70000, 1.0 / 7.0);
  EXPECT_THROW(r.below(0), ModelError);
}

TEST(CommunicationRule, Invariants) {
  EXPECT_THROW(CommunicationRule({0.5, 0.5, 0.0}), ModelError);
  EXPECT_THROW(CommunicationRule({0.2, 0.2, 0.2}), ModelError);
  EXPECT_THROW(CommunicationRule({-0.1, 0.1, 1.0}), ModelError);
  EXPECT_THROW(CommunicationRule({1.0}), ModelError);
  EXPECT_NO_THROW(CommunicationRule({0.0, 0.0, 1.0}));
  EXPECT_NO_THROW(CommunicationRule({0.25, 0.25, 0.25, 0.25}));
  const auto u = CommunicationRule::uniform(40);
  EXPECT_EQ(u.n(), 40u);
  EXPECT_DOUBLE_EQ(u.p(17), 1.0 / 41.0);
  EXPECT_EQ(CommunicationRule::fixed(5, 5).p(5), 1.0);
  EXPECT_THROW(CommunicationRule::fixed(5, 1), ModelError);
  EXPECT_THROW(CommunicationRule::fixed(5, 6), ModelError);
}

TEST(SampleCommSet, DegenerateLaws) {
  RngStream r(5, 0, StreamPurpose::comm);
  const auto empty = CommunicationRule::unchecked({1.0, 0.0, 0.0, 0.0});
  const auto full = CommunicationRule::fixed(3, 3);
  for (int i = 0; i < 100; ++i) {
    EXPECT_TRUE(sample_comm_set(r, empty, 3).empty());
    EXPECT_EQ(sample_comm_set(r, full, 3), AgentSet::full(3));
  }
}

TEST(SampleCommSet, SizeLawAndParticipation) {
  RngStream r(7, 0, StreamPurpose::comm);
  const auto rule = CommunicationRule::uniform(3);
  EXPECT_DOUBLE_EQ(rule.participation(), 0.5);
  constexpr std::size_t trials = 100000;
  std::array<std::size_t, 3> member{};
  std::array<std::size_t, 4> size{};
  for (std::size_t t = 0; t < trials; ++t) {
    const AgentSet u = sample_comm_set(r, rule, 3);
    ++size[u.size()];
    for (auto i : u.members()) ++member[i];
  }
  for (auto m : member) expect_proportion(m, trials, 0.5);
  for (auto s : size) expect_proportion(s, trials, 0.25);
}

TEST(SampleCommSet, UniformPairsGivenSize) {
  RngStream r(11, 0, StreamPurpose::comm);
  const auto rule = CommunicationRule::fixed(4, 2);
  constexpr std::size_t trials = 60000;
  std::map<std::pair<AgentIndex, AgentIndex>, std::size_t> pairs;
  for (std::size_t t = 0; t < trials; ++t) {
    const AgentSet u = sample_comm_set(r, rule, 4);
    ASSERT_EQ(u.size(), 2u);
    ++pairs[{u.members()[0], u.members()[1]}];
  }
  ASSERT_EQ(pairs.size(), 6u);
  for (const auto& [_, c] : pairs) expect_proportion(c, trials, 1.0 / 6.0);
}

TEST(SampleCommSet, IndependentOfNoiseAndAcrossSteps) {
  RngStream comm(13, 0, StreamPurpose::comm);
  RngStream noise(13, 0, StreamPurpose::noise);
  const auto rule = CommunicationRule::uniform(3);
  const auto model = NoiseModel::two_point(0.1);
  std::array<std::array<double, 2>, 2> joint{};
  std::array<std::array<double, 2>, 2> lagged{};
  bool prev = false;
  for (int t = 0; t < 50000; ++t) {
    const bool in = sample_comm_set(comm, rule, 3).contains(0);
    const bool up = model.draw(noise) > 0.0;
    joint[in][up] += 1.0;
    if (t > 0) lagged[prev][in] += 1.0;
    prev = in;
  }
  EXPECT_LT(chi_square_2x2(joint), 10.828);
  EXPECT_LT(chi_square_2x2(lagged), 10.828);
}

TEST(SampleIndex, InverseCdf) {
  RngStream r(17, 0, StreamPurpose::aux);
  const std::vector<double> w{0.1, 0.0, 0.6, 0.3};
  std::array<std::size_t, 4> c{};
  for (int i = 0; i < 50000; ++i) ++c[sample_index(r, w)];
  EXPECT_EQ(c[1], 0u);
  expect_proportion(c[0], 50000, 0.1);
  expect_proportion(c[2], 50000, 0.6);
  expect_proportion(c[3], 50000, 0.3);
}

TEST(NoiseModel, UniformSupportAndVariance) {
  const auto m = NoiseModel::uniform(0.01);
  EXPECT_EQ(m.mean(), 0.0);
  EXPECT_DOUBLE_EQ(m.variance(), 0.01 * 0.01 / 3.0);
  RngStream r(19, 0, StreamPurpose::noise);
  constexpr std::size_t N = 1000000;
  const auto xs = sample_noise(r, m, N);
  double sum = 0.0;
  double sq = 0.0;
  double quart = 0.0;
  for (double x : xs) {
    ASSERT_LE(std::abs(x), 0.01);
    sum += x;
    sq += x * x;
    quart += x * x * x * x;
  }
  const double mean = sum / N;
  const double var = sq / N - mean * mean;
  // se of the second moment uses E x^4 = delta^4 / 5.
  const double var_se = std::sqrt((std::pow(0.01, 4) / 5.0 - std::pow(m.variance(), 2)) / N);
  EXPECT_LE(std::abs(var - 3.333333333333333e-5), 3.0 * var_se);
  EXPECT_LE(std::abs(mean), 3.0 * std::sqrt(m.variance() / N));
  (void)quart;
}

TEST(NoiseModel, TwoPointAtoms) {
  const auto m = NoiseModel::two_point(0.8);
  EXPECT_DOUBLE_EQ(m.variance(), 0.64);
  EXPECT_DOUBLE_EQ(m.mass_at_least(0.8), 0.5);
  RngStream r(23, 0, StreamPurpose::noise);
  std::size_t plus = 0;
  for (int i = 0; i < 40000; ++i) {
    const double x = m.draw(r);
    ASSERT_TRUE(x == 0.8 || x == -0.8);
    plus += x > 0.0;
  }
  expect_proportion(plus, 40000, 0.5);
}

TEST(NoiseModel, DiscreteValidation) {
  EXPECT_THROW(NoiseModel::discrete({0.1, 0.2}, {0.5, 0.5}), ModelError);
  EXPECT_THROW(NoiseModel::discrete({0.0}, {1.0}), ModelError);
  EXPECT_THROW(NoiseModel::discrete({-0.1, 0.1}, {0.4, 0.4}), ModelError);
  EXPECT_THROW(NoiseModel::uniform(0.0), ModelError);
  const auto m = NoiseModel::discrete({-0.2, 0.1}, {1.0 / 3.0, 2.0 / 3.0});
  EXPECT_DOUBLE_EQ(m.delta(), 0.2);
  EXPECT_NEAR(m.variance(), 0.04 / 3.0 + 0.02 / 3.0, 1e-15);
  EXPECT_NEAR(m.mass_at_least(0.1), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(m.mass_at_least(0.15), 0.0);
}

TEST(NoiseModel, UniformTailMass) {
  const auto m = NoiseModel::uniform(0.1);
  EXPECT_DOUBLE_EQ(m.mass_at_least(0.05), 0.25);
  EXPECT_DOUBLE_EQ(m.mass_at_least(0.1), 0.0);
}

TEST(Inertia, HkRuleConstantAndUniform) {
  RngStream r(29, 0, StreamPurpose::inertia);
  const OpinionState x{0.1, 0.12, 0.14, 0.16, 0.9};
  const AgentSet u(5, {0, 1, 2, 3});
  const auto hk = inertia_coefficients(r, InertiaPolicy::hk_rule(), x, u, 0.1);
  EXPECT_DOUBLE_EQ(hk[0], 0.25);
  EXPECT_DOUBLE_EQ(hk[4], 1.0);
  const auto c = inertia_coefficients(r, InertiaPolicy::constant(0.5), x, u, 0.1);
  for (double v : c) EXPECT_EQ(v, 0.5);

  const auto pol = InertiaPolicy::uniform_interval(0.1);
  double sum = 0.0;
  std::size_t count = 0;
  for (int t = 0; t < 20000; ++t) {
    for (double v : inertia_coefficients(r, pol, x, u, 0.1)) {
      ASSERT_GE(v, 0.1);
      ASSERT_LE(v, 0.9);
      sum += v;
      ++count;
    }
  }
  const double se = 0.8 / std::sqrt(12.0 * static_cast<double>(count));
  EXPECT_LE(std::abs(sum / static_cast<double>(count) - 0.5), 3.0 * se);
}
