#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pawprint/core.hpp"

namespace pawprint {

struct BatchEntry {
  std::string identity_id;
  std::array<std::string, 2> image_ids;
};

/// One balanced batch: each identity at most once, two distinct images each.
struct BatchPlan {
  std::vector<BatchEntry> entries;

  std::size_t batch_size() const { return 2 * entries.size(); }
};

/// Shuffles the identities into batches of `identities_per_batch` and picks
/// two distinct images per identity uniformly without replacement. Identities
/// left over after the last full batch sit this epoch out. The plan depends
/// only on (population, identities_per_batch, seed, epoch).
///
/// Throws TooFewImages naming the first identity with fewer than two images,
/// TooFewIdentities when a single batch cannot be filled.
std::vector<BatchPlan> plan_epoch(const Population& population, int identities_per_batch,
                                  std::uint64_t seed, std::uint64_t epoch = 0);

/// Returns an empty string when `plan` satisfies the batch invariants against
/// `population`, otherwise a description of the first violation.
std::string check_batch(const BatchPlan& plan, const Population& population);

}  // namespace pawprint
