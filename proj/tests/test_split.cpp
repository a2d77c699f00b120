#include <algorithm>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "pidistill/error.hpp"
#include "pidistill/split.hpp"

using namespace pidistill;

namespace {

std::vector<std::string> grouped_ids(std::size_t n, std::size_t per_group) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("p" + std::to_string(i / per_group));
  return ids;
}

std::set<std::size_t> as_set(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(Split, FiveOfFortyTwoTwenty) {
  EXPECT_EQ(fraction_count(0.05, 4220), 211u);
  // One sample per group, share chosen so the pool holds exactly 4220 samples.
  const auto ids = grouped_ids(4689, 1);
  const SplitPlan plan = make_split(ids, 3, 0.05, SplitOptions{469.0 / 4689.0, true});
  EXPECT_EQ(plan.pool_size, 4220u);
  EXPECT_EQ(plan.train.size(), 211u);
}

TEST(Split, FractionCountIsRobustToRepresentation) {
  EXPECT_EQ(fraction_count(0.1, 30), 3u);
  EXPECT_EQ(fraction_count(0.3, 10), 3u);
  EXPECT_EQ(fraction_count(1.0, 17), 17u);
  EXPECT_EQ(fraction_count(0.025, 1000), 25u);
}

TEST(Split, FullFractionIsWholePool) {
  const auto ids = grouped_ids(100, 2);
  const SplitPlan plan = make_split(ids, 1, 1.0);
  EXPECT_EQ(plan.train.size(), plan.pool_size);
  EXPECT_EQ(plan.train.size() + plan.validation.size(), 100u);
}

TEST(Split, HygieneAcrossRandomDraws) {
  Rng rng(77);
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t per_group = 1 + rng.below(4);
    const auto ids = grouped_ids(200 + rng.below(300), per_group);
    const std::uint64_t seed = rng.next_u64();
    const double f = 0.01 + 0.99 * rng.uniform();
    const SplitPlan plan = make_split(ids, seed, f);
    std::set<std::string> train_groups, val_groups;
    for (auto i : plan.train) train_groups.insert(ids[i]);
    for (auto i : plan.validation) val_groups.insert(ids[i]);
    for (const auto& g : train_groups) ASSERT_FALSE(val_groups.count(g)) << g;

    const SplitPlan smaller = make_split(ids, seed, f / 2.0 + 1e-3);
    ASSERT_TRUE(std::equal(smaller.train.begin(), smaller.train.end(), plan.train.begin()));
    ASSERT_EQ(smaller.validation, plan.validation);
  }
}

TEST(Split, NestedFractions) {
  const auto ids = grouped_ids(1000, 3);
  const auto small = as_set(make_split(ids, 5, 0.05).train);
  const auto big = as_set(make_split(ids, 5, 0.5).train);
  EXPECT_TRUE(std::includes(big.begin(), big.end(), small.begin(), small.end()));
}

TEST(Split, DeterministicAndSeedSensitive) {
  const auto ids = grouped_ids(300, 2);
  EXPECT_EQ(make_split(ids, 9, 0.3).hash(), make_split(ids, 9, 0.3).hash());
  EXPECT_NE(make_split(ids, 9, 0.3).hash(), make_split(ids, 10, 0.3).hash());
  EXPECT_NE(make_split(ids, 9, 0.3).hash(), make_split(ids, 9, 0.4).hash());
}

TEST(Split, PerImageMode) {
  const auto ids = grouped_ids(100, 10);
  const SplitPlan plan = make_split(ids, 2, 1.0, SplitOptions{0.1, false});
  EXPECT_EQ(plan.validation.size(), 10u);
  std::set<std::string> val_groups;
  for (auto i : plan.validation) val_groups.insert(ids[i]);
  EXPECT_GT(val_groups.size(), 1u);
}

TEST(Split, ConfigurationErrors) {
  const auto ids = grouped_ids(50, 1);
  EXPECT_THROW(make_split(ids, 1, 0.0), ConfigError);
  EXPECT_THROW(make_split(ids, 1, 1.5), ConfigError);
  EXPECT_THROW(make_split(ids, 1, 0.001), ConfigError);
  EXPECT_THROW(make_split(ids, 1, 0.5, SplitOptions{1.0, true}), ConfigError);
  EXPECT_THROW(make_split(grouped_ids(10, 10), 1, 0.5), ConfigError);
}

TEST(Split, FisherYatesIsPermutation) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> v(37);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
    fisher_yates(v, rng);
    std::vector<std::size_t> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < v.size(); ++i) ASSERT_EQ(sorted[i], i);
  }
}

TEST(Balance, CountsAndHistogram) {
  std::vector<std::size_t> labels(100), idx(100);
  for (std::size_t i = 0; i < 100; ++i) {
    idx[i] = i;
    labels[i] = i < 80 ? 0 : 1;
  }
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto out = balance_by_label(idx, labels, seed);
    ASSERT_EQ(out.size(), 40u);
    std::size_t pos = 0;
    for (auto i : out) pos += labels[i];
    ASSERT_EQ(pos, 20u);
    ASSERT_EQ(as_set(out).size(), 40u);
  }
}

TEST(Balance, AlreadyBalancedIsIdentityUpToOrder) {
  std::vector<std::size_t> labels{0, 1, 0, 1, 1, 0}, idx{0, 1, 2, 3, 4, 5};
  const auto out = balance_by_label(idx, labels, 3);
  EXPECT_EQ(as_set(out), as_set(idx));
}

TEST(Balance, Errors) {
  std::vector<std::size_t> idx{0, 1, 2};
  EXPECT_THROW(balance_by_label(idx, std::vector<std::size_t>{0, 0, 0}, 1), DataError);
  EXPECT_THROW(balance_by_label(idx, std::vector<std::size_t>{0, 1, 2}, 1), ConfigError);
}
