#include "pidistill/split.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "pidistill/error.hpp"
#include "pidistill/hash.hpp"

namespace pidistill {

std::uint64_t SplitPlan::hash() const {
  Fnv1a h;
  h.update_u64(train.size());
  for (std::size_t i : train) h.update_u64(i);
  h.update_u64(validation.size());
  for (std::size_t i : validation) h.update_u64(i);
  return h.digest();
}

void fisher_yates(std::span<std::size_t> values, Rng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(values[i - 1], values[j]);
  }
}

std::size_t fraction_count(double fraction, std::size_t pool_size) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(pool_size) + 1e-9));
}

SplitPlan make_split(std::span<const std::string> group_ids, std::uint64_t seed, double fraction,
                     const SplitOptions& options) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("train fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  if (!(options.validation_share > 0.0 && options.validation_share < 1.0)) {
    throw ConfigError("validation share must lie in (0, 1)");
  }
  // Group members in ascending sample order, keyed by sorted group id.
  std::vector<std::vector<std::size_t>> groups;
  if (options.grouped) {
    std::map<std::string, std::vector<std::size_t>> by_id;
    for (std::size_t i = 0; i < group_ids.size(); ++i) by_id[group_ids[i]].push_back(i);
    for (auto& [id, members] : by_id) groups.push_back(std::move(members));
  } else {
    for (std::size_t i = 0; i < group_ids.size(); ++i) groups.push_back({i});
  }
  if (groups.size() < 2) throw ConfigError("splitting needs at least two groups");

  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::stream(seed, "split");
  fisher_yates(order, rng);

  const double want = options.validation_share * static_cast<double>(groups.size());
  const std::size_t n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(want)), 1,
                                                    groups.size() - 1);
  SplitPlan plan;
  plan.seed = seed;
  plan.fraction = fraction;
  std::vector<std::size_t> pool;
  for (std::size_t g = 0; g < order.size(); ++g) {
    const auto& members = groups[order[g]];
    auto& dest = g < n_val ? plan.validation : pool;
    dest.insert(dest.end(), members.begin(), members.end());
  }
  std::sort(plan.validation.begin(), plan.validation.end());
  plan.pool_size = pool.size();
  const std::size_t n_train = fraction_count(fraction, pool.size());
  if (n_train == 0) {
    throw ConfigError("train fraction " + std::to_string(fraction) + " of a pool of " +
                      std::to_string(pool.size()) + " yields no training samples");
  }
  plan.train.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_train));
  return plan;
}

SplitPlan make_split(const EmbeddingDataset& dataset, std::uint64_t seed, double fraction,
                     const SplitOptions& options) {
  const auto ids = dataset.group_ids();
  return make_split(ids, seed, fraction, options);
}

std::vector<std::size_t> balance_by_label(std::span<const std::size_t> indices,
                                          std::span<const std::size_t> labels, std::uint64_t seed) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i : indices) {
    if (i >= labels.size()) throw DataError("balance: index " + std::to_string(i) + " out of range");
    if (labels[i] > 1) throw ConfigError("class balancing is defined for binary tasks only");
    by_class[labels[i]].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) {
    throw DataError("balance: one class has no samples");
  }
  Rng rng = Rng::stream(seed, "balance");
  const std::size_t major = by_class[0].size() >= by_class[1].size() ? 0 : 1;
  auto& majority = by_class[major];
  const std::size_t keep = by_class[1 - major].size();
  fisher_yates(majority, rng);
  majority.resize(keep);
  std::vector<std::size_t> out = by_class[0];
  out.insert(out.end(), by_class[1].begin(), by_class[1].end());
  fisher_yates(out, rng);
  return out;
}

EmbeddingDataset subset(const EmbeddingDataset& dataset, std::span<const std::size_t> indices) {
  EmbeddingDataset out;
  out.info = dataset.info;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) out.samples.push_back(dataset.samples.at(i));
  return out;
}

}  // namespace pidistill
