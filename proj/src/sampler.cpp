#include "pawprint/sampler.hpp"

#include <algorithm>
#include <set>

#include "pawprint/random.hpp"

namespace pawprint {

std::vector<BatchPlan> plan_epoch(const Population& population, int identities_per_batch,
                                  std::uint64_t seed, std::uint64_t epoch) {
  if (identities_per_batch < 1) {
    throw Error(ErrorCode::InvalidArgument, "identities_per_batch must be >= 1");
  }
  for (const auto& [identity, images] : population) {
    if (images.size() < 2) {
      throw Error(ErrorCode::TooFewImages, "identity '" + identity + "' has " +
                                               std::to_string(images.size()) + " image(s), needs 2");
    }
  }
  const auto per_batch = static_cast<std::size_t>(identities_per_batch);
  if (population.size() < per_batch) {
    throw Error(ErrorCode::TooFewIdentities,
                std::to_string(population.size()) + " identities cannot fill a batch of " +
                    std::to_string(per_batch));
  }

  std::vector<const std::pair<const std::string, std::vector<std::string>>*> order;
  order.reserve(population.size());
  for (const auto& kv : population) order.push_back(&kv);

  Rng rng(derive_seed(seed, 0x5a3b1e00ULL + epoch));
  rng.shuffle(order);

  const std::size_t n_batches = order.size() / per_batch;
  std::vector<BatchPlan> plans(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    auto& entries = plans[b].entries;
    entries.reserve(per_batch);
    for (std::size_t i = 0; i < per_batch; ++i) {
      const auto& [identity, images] = *order[b * per_batch + i];
      const auto m = images.size();
      const auto first = rng.uniform_below(m);
      auto second = rng.uniform_below(m - 1);
      if (second >= first) ++second;
      entries.push_back(BatchEntry{identity, {images[first], images[second]}});
    }
  }
  return plans;
}

std::string check_batch(const BatchPlan& plan, const Population& population) {
  std::set<std::string> seen;
  for (const auto& e : plan.entries) {
    if (!seen.insert(e.identity_id).second) return "identity repeated: " + e.identity_id;
    if (e.image_ids[0] == e.image_ids[1]) return "identity " + e.identity_id + " has a repeated image";
    auto it = population.find(e.identity_id);
    if (it == population.end()) return "unknown identity: " + e.identity_id;
    for (const auto& img : e.image_ids) {
      if (std::find(it->second.begin(), it->second.end(), img) == it->second.end()) {
        return "image " + img + " does not belong to " + e.identity_id;
      }
    }
  }
  if (plan.batch_size() != 2 * plan.entries.size()) return "batch size mismatch";
  return {};
}

}  // namespace pawprint
