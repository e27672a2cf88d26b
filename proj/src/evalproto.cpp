#include "pawprint/evalproto.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "pawprint/random.hpp"
#include "pawprint/store.hpp"

namespace pawprint {
namespace {

std::vector<std::vector<double>> unit_vectors(std::span<const EmbeddingRecord> store) {
  std::vector<std::vector<double>> out;
  out.reserve(store.size());
  for (const auto& r : store) {
    auto v = r.pooled();
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    out.push_back(std::move(v));
  }
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void split_scores(std::span<const ScoredPair> pairs, std::vector<double>& same, std::vector<double>& diff) {
  for (const auto& p : pairs) (p.label == PairLabel::Same ? same : diff).push_back(p.score);
}

void require_both_labels(std::size_t n_same, std::size_t n_diff) {
  if (n_same == 0 || n_diff == 0) {
    throw Error(ErrorCode::DegenerateLabels, "need at least one same and one different pair");
  }
}

}  // namespace

PairSet generate_pairs(std::span<const EmbeddingRecord> store, const PairConfig& cfg) {
  if (cfg.usage_cap < 1 || cfg.per_identity_cap < 1) {
    throw Error(ErrorCode::InvalidConfig, "pair caps must be >= 1");
  }
  PairSet out;
  out.usage_cap = cfg.usage_cap;
  out.per_identity_cap = cfg.per_identity_cap;
  out.seed = cfg.seed;

  const Population pop = population_of(store);
  if (pop.size() < 2) {
    throw Error(ErrorCode::NoPositivePairs, "need at least two identities to form pairs");
  }
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < store.size(); ++i) index.emplace(store[i].image_id, i);
  std::vector<int> usage(store.size(), 0);

  Rng pos_rng(derive_seed(cfg.seed, 0x9051));
  for (const auto& [identity, images] : pop) {
    if (images.size() < 2) continue;
    std::vector<std::pair<std::size_t, std::size_t>> candidates;
    for (std::size_t i = 0; i < images.size(); ++i)
      for (std::size_t j = i + 1; j < images.size(); ++j)
        candidates.emplace_back(index.at(images[i]), index.at(images[j]));
    pos_rng.shuffle(candidates);
    int accepted = 0;
    for (const auto& [a, b] : candidates) {
      if (accepted >= cfg.per_identity_cap) break;
      if (usage[a] >= cfg.usage_cap || usage[b] >= cfg.usage_cap) continue;
      ++usage[a];
      ++usage[b];
      ++accepted;
      out.positives.emplace_back(store[a].image_id, store[b].image_id);
    }
  }
  if (out.positives.empty()) {
    throw Error(ErrorCode::NoPositivePairs, "no identity yields a positive pair");
  }

  // Images still below the cap; saturated ones are swap-removed.
  std::vector<std::size_t> open;
  for (std::size_t i = 0; i < store.size(); ++i)
    if (usage[i] < cfg.usage_cap) open.push_back(i);
  std::set<std::pair<std::size_t, std::size_t>> used;
  Rng neg_rng(derive_seed(cfg.seed, 0x4E65));
  const std::size_t target = out.positives.size();
  const std::size_t budget = 64 * target + 1024;
  for (std::size_t attempt = 0; attempt < budget && out.negatives.size() < target && open.size() >= 2;
       ++attempt) {
    const std::size_t ia = neg_rng.uniform_below(open.size());
    std::size_t ib = neg_rng.uniform_below(open.size() - 1);
    if (ib >= ia) ++ib;
    const std::size_t a = open[ia], b = open[ib];
    if (store[a].identity_id == store[b].identity_id) continue;
    if (!used.emplace(std::min(a, b), std::max(a, b)).second) continue;
    out.negatives.emplace_back(store[a].image_id, store[b].image_id);
    ++usage[a];
    ++usage[b];
    // Remove the larger slot first so the smaller index stays valid.
    for (std::size_t slot : {std::max(ia, ib), std::min(ia, ib)}) {
      if (usage[open[slot]] >= cfg.usage_cap) {
        open[slot] = open.back();
        open.pop_back();
      }
    }
  }
  return out;
}

std::vector<ScoredPair> score_pairs(std::span<const EmbeddingRecord> store, const PairSet& pairs) {
  const auto unit = unit_vectors(store);
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < store.size(); ++i) index.emplace(store[i].image_id, i);
  auto lookup = [&](const std::string& id) {
    auto it = index.find(id);
    if (it == index.end()) throw Error(ErrorCode::InvalidArgument, "pair references unknown image '" + id + "'");
    return it->second;
  };
  std::vector<ScoredPair> out;
  out.reserve(pairs.positives.size() + pairs.negatives.size());
  auto add = [&](const ImagePair& p, PairLabel label) {
    out.push_back(ScoredPair{p.first, p.second, dot(unit[lookup(p.first)], unit[lookup(p.second)]), label});
  };
  for (const auto& p : pairs.positives) add(p, PairLabel::Same);
  for (const auto& p : pairs.negatives) add(p, PairLabel::Different);
  return out;
}

double roc_auc(std::span<const double> same, std::span<const double> diff) {
  require_both_labels(same.size(), diff.size());
  struct Item {
    double score;
    bool same;
  };
  std::vector<Item> all;
  all.reserve(same.size() + diff.size());
  for (double s : same) all.push_back({s, true});
  for (double s : diff) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

  // Sum of (1-based, tie-averaged) ranks of the Same scores, doubled to stay
  // integral.
  double rank2_same = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::size_t n_same = 0;
    while (j < all.size() && all[j].score == all[i].score) n_same += all[j++].same;
    rank2_same += static_cast<double>(n_same) * static_cast<double>(i + 1 + j);
    i = j;
  }
  const double np = static_cast<double>(same.size());
  const double nn = static_cast<double>(diff.size());
  const double u = rank2_same / 2.0 - np * (np + 1.0) / 2.0;
  return u / (np * nn);
}

double roc_auc(std::span<const ScoredPair> pairs) {
  std::vector<double> same, diff;
  split_scores(pairs, same, diff);
  return roc_auc(same, diff);
}

EerResult eer(std::span<const double> same, std::span<const double> diff) {
  require_both_labels(same.size(), diff.size());
  std::vector<double> s(same.begin(), same.end()), d(diff.begin(), diff.end());
  std::sort(s.begin(), s.end());
  std::sort(d.begin(), d.end());
  std::vector<double> values;
  values.reserve(s.size() + d.size());
  std::merge(s.begin(), s.end(), d.begin(), d.end(), std::back_inserter(values));
  values.erase(std::unique(values.begin(), values.end()), values.end());

  const auto np = static_cast<std::int64_t>(s.size());
  const auto nn = static_cast<std::int64_t>(d.size());
  constexpr double inf = std::numeric_limits<double>::infinity();

  // Scaled by np * nn: gap = |FP*np - FN*nn|, err2 = FP*np + FN*nn.
  std::int64_t best_gap = std::numeric_limits<std::int64_t>::max();
  std::int64_t best_err2 = 0;
  double best_theta = 0.0;
  auto consider = [&](double theta, std::int64_t fp, std::int64_t fn) {
    const std::int64_t gap = std::abs(fp * np - fn * nn);
    const std::int64_t err2 = fp * np + fn * nn;
    if (gap < best_gap || (gap == best_gap && err2 < best_err2)) {
      best_gap = gap;
      best_err2 = err2;
      best_theta = theta;
    }
  };

  // Threshold above values[0..i): FN = Same scores <= values[i-1],
  // FP = Different scores > values[i-1].
  consider(-inf, nn, 0);
  std::size_t si = 0, di = 0;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    while (si < s.size() && s[si] <= values[i]) ++si;
    while (di < d.size() && d[di] <= values[i]) ++di;
    const double theta = values[i] + (values[i + 1] - values[i]) / 2.0;
    consider(theta, nn - static_cast<std::int64_t>(di), static_cast<std::int64_t>(si));
  }
  consider(inf, 0, np);
  return EerResult{static_cast<double>(best_err2) / (2.0 * static_cast<double>(np * nn)), best_theta};
}

EerResult eer(std::span<const ScoredPair> pairs) {
  std::vector<double> same, diff;
  split_scores(pairs, same, diff);
  return eer(same, diff);
}

TopKResult top_k(std::span<const EmbeddingRecord> store, std::span<const int> ks) {
  for (int k : ks) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  }
  TopKResult out;
  if (store.size() < 2) throw Error(ErrorCode::EmptyGallery, "a gallery needs at least two images");
  const auto unit = unit_vectors(store);
  std::unordered_map<std::string_view, std::size_t> per_identity;
  for (const auto& r : store) ++per_identity[r.identity_id];

  std::vector<double> scores(store.size());
  for (std::size_t q = 0; q < store.size(); ++q) {
    if (per_identity[store[q].identity_id] < 2) {
      ++out.n_skipped;
      continue;
    }
    for (std::size_t g = 0; g < store.size(); ++g) scores[g] = g == q ? 0.0 : dot(unit[q], unit[g]);
    // Ordering key: higher score first, then smaller image_id.
    auto before = [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return store[a].image_id < store[b].image_id;
    };
    std::size_t best = store.size();
    for (std::size_t g = 0; g < store.size(); ++g) {
      if (g == q || store[g].identity_id != store[q].identity_id) continue;
      if (best == store.size() || before(g, best)) best = g;
    }
    std::size_t rank = 0;
    for (std::size_t g = 0; g < store.size(); ++g) {
      if (g != q && before(g, best)) ++rank;
    }
    out.per_query.push_back(QueryOutcome{store[q].image_id, store[q].identity_id, rank});
  }
  out.n_queries = out.per_query.size();
  if (out.n_queries == 0) {
    throw Error(ErrorCode::EmptyGallery, "no image has a same-identity partner to retrieve");
  }
  for (int k : ks) {
    std::size_t hits = 0;
    for (const auto& q : out.per_query) hits += q.first_hit_rank < static_cast<std::size_t>(k);
    out.accuracy[k] = static_cast<double>(hits) / static_cast<double>(out.n_queries);
  }
  return out;
}

std::string eval_config_digest(const PairConfig& cfg, std::span<const int> ks) {
  std::ostringstream os;
  os << "pawprint-eval/v1;usage_cap=" << cfg.usage_cap << ";per_identity_cap=" << cfg.per_identity_cap
     << ";seed=" << cfg.seed << ";similarity=cosine;eer=midpoint-sweep;ks=";
  for (std::size_t i = 0; i < ks.size(); ++i) os << (i ? "," : "") << ks[i];
  return sha256_hex(os.str());
}

MetricReport evaluate(std::span<const EmbeddingRecord> store, const PairConfig& cfg,
                      std::span<const int> ks, TopKResult* retrieval, PairSet* pairs_out) {
  validate_records(store);
  const PairSet pairs = generate_pairs(store, cfg);
  const auto scored = score_pairs(store, pairs);
  MetricReport rep;
  rep.roc_auc = roc_auc(scored);
  const auto e = eer(scored);
  rep.eer = e.eer;
  rep.eer_threshold = e.threshold;
  rep.n_pos = pairs.positives.size();
  rep.n_neg = pairs.negatives.size();
  auto tk = top_k(store, ks);
  rep.top_k = tk.accuracy;
  rep.n_queries = tk.n_queries;
  rep.n_skipped = tk.n_skipped;
  rep.seed = cfg.seed;
  rep.config_digest = eval_config_digest(cfg, ks);
  if (retrieval) *retrieval = std::move(tk);
  if (pairs_out) *pairs_out = pairs;
  return rep;
}

MetricReport evaluate(std::span<const EmbeddingRecord> store, const PairConfig& cfg,
                      std::span<const int> ks) {
  return evaluate(store, cfg, ks, nullptr, nullptr);
}

}  // namespace pawprint
