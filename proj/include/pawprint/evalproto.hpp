#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pawprint/core.hpp"

namespace pawprint {

enum class PairLabel { Same, Different };

struct ScoredPair {
  std::string id_a;
  std::string id_b;
  double score = 0.0;  // cosine similarity
  PairLabel label = PairLabel::Same;
};

struct PairConfig {
  int usage_cap = 5;
  int per_identity_cap = 15;
  std::uint64_t seed = 0;
};

/// Positive pairs first: per identity (bytewise order) every same-identity
/// image pair in seeded random order, accepted while the identity has fewer
/// than per_identity_cap pairs and both images are under usage_cap. Then
/// seeded random cross-identity pairs drawn from images still under the cap,
/// sharing the same usage counts, until there are as many negatives as
/// positives or the draw budget runs out.
///
/// Throws NoPositivePairs when fewer than two identities exist or no identity
/// yields a positive pair.
PairSet generate_pairs(std::span<const EmbeddingRecord> store, const PairConfig& cfg);

/// Cosine-scores every pair of `pairs` against the store's (mean-pooled)
/// vectors.
std::vector<ScoredPair> score_pairs(std::span<const EmbeddingRecord> store, const PairSet& pairs);

/// Mann-Whitney estimate: fraction of (same, different) pairs ranked
/// correctly, ties counting one half. Throws DegenerateLabels.
double roc_auc(std::span<const ScoredPair> pairs);
double roc_auc(std::span<const double> same_scores, std::span<const double> different_scores);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

/// Threshold sweep over -inf, the midpoints between adjacent distinct scores,
/// and +inf. FPR(t) counts Different scores >= t, FNR(t) counts Same scores
/// < t. Picks the threshold minimizing |FPR - FNR|, ties going to the smaller
/// (FPR + FNR) / 2 and then the smaller threshold; returns that mean as the
/// EER. Throws DegenerateLabels.
EerResult eer(std::span<const ScoredPair> pairs);
EerResult eer(std::span<const double> same_scores, std::span<const double> different_scores);

struct QueryOutcome {
  std::string image_id;
  std::string identity_id;
  /// 0-based rank of the first same-identity gallery item.
  std::size_t first_hit_rank = 0;
};

struct TopKResult {
  std::map<int, double> accuracy;
  std::size_t n_queries = 0;
  std::size_t n_skipped = 0;
  /// Eligible queries in store order.
  std::vector<QueryOutcome> per_query;
};

/// Every image whose identity has another image in the store is a query
/// against all other images, ranked by cosine similarity (descending) and
/// then image_id (bytewise ascending). A query hits at k when a
/// same-identity image is among the first k. Images without a same-identity
/// partner are skipped and tallied. Throws EmptyGallery when nothing can be
/// queried.
TopKResult top_k(std::span<const EmbeddingRecord> store, std::span<const int> ks);

/// Deterministic digest of the evaluation configuration.
std::string eval_config_digest(const PairConfig& cfg, std::span<const int> ks);

/// generate_pairs + score_pairs + roc_auc + eer + top_k.
MetricReport evaluate(std::span<const EmbeddingRecord> store, const PairConfig& cfg,
                      std::span<const int> ks);

/// Same as evaluate, also returning the retrieval details.
MetricReport evaluate(std::span<const EmbeddingRecord> store, const PairConfig& cfg,
                      std::span<const int> ks, TopKResult* retrieval, PairSet* pairs);

}  // namespace pawprint
