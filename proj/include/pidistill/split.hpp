#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pidistill/dataset.hpp"
#include "pidistill/rng.hpp"

namespace pidistill {

struct SplitOptions {
  double validation_share = 0.1;
  /// Keep every group_id on one side of the split. When false each sample
  /// is its own group.
  bool grouped = true;
};

/// Train/validation indices for one (seed, fraction). Validation depends only
/// on (dataset, seed, share); training prefixes are nested across fractions.
struct SplitPlan {
  std::uint64_t seed = 0;
  double fraction = 1.0;
  std::size_t pool_size = 0;
  std::vector<std::size_t> train;       // pool order (shuffled), prefix of the pool
  std::vector<std::size_t> validation;  // ascending

  /// FNV-1a over the train and validation indices; equal plans hash equal.
  std::uint64_t hash() const;
};

void fisher_yates(std::span<std::size_t> values, Rng& rng);

/// Number of training samples taken from a pool at fraction f:
/// floor(f * pool), robust to representation error in f.
std::size_t fraction_count(double fraction, std::size_t pool_size);

/// (1) sort distinct group ids and shuffle them with the seed's "split"
/// stream; (2) the first round(share * groups) groups become validation;
/// (3) training is the first fraction_count(f, pool) pool samples, where
/// the pool lists samples by shuffled group order then ascending index.
SplitPlan make_split(std::span<const std::string> group_ids, std::uint64_t seed, double fraction,
                     const SplitOptions& options = {});
SplitPlan make_split(const EmbeddingDataset& dataset, std::uint64_t seed, double fraction,
                     const SplitOptions& options = {});

/// Binary class balancing: subsample the majority class uniformly (seeded)
/// to the minority count, then reshuffle the union.
std::vector<std::size_t> balance_by_label(std::span<const std::size_t> indices,
                                          std::span<const std::size_t> labels, std::uint64_t seed);

/// Dataset restricted to the given sample indices, in that order.
EmbeddingDataset subset(const EmbeddingDataset& dataset, std::span<const std::size_t> indices);

}  // namespace pidistill
