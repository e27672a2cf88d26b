#include "pawprint/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

namespace pawprint {
namespace {

void require_same_dim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimMismatch, "vector widths " + std::to_string(a.size()) + " and " +
                                            std::to_string(b.size()) + " differ");
  }
}

struct PairIndex {
  Eigen::Index i;
  Eigen::Index j;
};

void check_balanced(const Eigen::MatrixXd& emb, std::span<const int> labels) {
  if (static_cast<std::size_t>(emb.rows()) != labels.size()) {
    throw Error(ErrorCode::UnbalancedBatch, "label count does not match embedding rows");
  }
  std::map<int, int> counts;
  for (int l : labels) ++counts[l];
  if (counts.size() < 2) {
    throw Error(ErrorCode::UnbalancedBatch, "a batch needs at least two identities");
  }
  for (const auto& [label, n] : counts) {
    if (n != 2) {
      throw Error(ErrorCode::UnbalancedBatch, "identity " + std::to_string(label) + " appears " +
                                                  std::to_string(n) + " times, expected 2");
    }
  }
}

void check_unit_norm(const Eigen::MatrixXd& emb) {
  for (Eigen::Index r = 0; r < emb.rows(); ++r) {
    const double n = emb.row(r).norm();
    if (!(std::abs(n - 1.0) <= 1e-4)) {
      throw Error(ErrorCode::NotNormalized, "row " + std::to_string(r) + " has norm " + std::to_string(n));
    }
  }
}

LossAndGrad evaluate(const Eigen::MatrixXd& emb, std::span<const int> labels, const LossConfig& cfg,
                     bool check_norm, bool want_grad) {
  cfg.validate();
  check_balanced(emb, labels);
  if (check_norm) check_unit_norm(emb);

  const Eigen::Index n = emb.rows();
  LossAndGrad out;
  if (want_grad) out.grad = Eigen::MatrixXd::Zero(n, emb.cols());
  auto& L = out.loss;

  // Triplet term over every (anchor, positive, negative).
  double trip_sum = 0.0;
  std::vector<std::array<Eigen::Index, 3>> active;
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index p = 0; p < n; ++p) {
      if (p == a || labels[a] != labels[p]) continue;
      const double d_ap = (emb.row(a) - emb.row(p)).squaredNorm();
      for (Eigen::Index q = 0; q < n; ++q) {
        if (labels[q] == labels[a]) continue;
        ++L.n_triplets;
        const double term = d_ap - (emb.row(a) - emb.row(q)).squaredNorm() + cfg.margin;
        if (term > 0.0) {
          trip_sum += term;
          if (want_grad) active.push_back({a, p, q});
        }
      }
    }
  }
  L.l_triplet = trip_sum / static_cast<double>(L.n_triplets);

  // Cosine similarities of unordered pairs.
  Eigen::VectorXd norms(n);
  for (Eigen::Index r = 0; r < n; ++r) norms[r] = emb.row(r).norm();
  std::vector<PairIndex> pos, neg;
  std::vector<double> pos_s, neg_s;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double s = emb.row(i).dot(emb.row(j)) / (norms[i] * norms[j]);
      if (labels[i] == labels[j]) {
        pos.push_back({i, j});
        pos_s.push_back(s);
      } else {
        neg.push_back({i, j});
        neg_s.push_back(s);
      }
    }
  }
  L.n_pos_pairs = pos.size();
  L.n_neg_pairs = neg.size();
  const auto var = variance_loss(pos_s, neg_s, cfg.eps_pos, cfg.eps_neg);
  L.l_var_pos = var.pos;
  L.l_var_neg = var.neg;
  L.l_total = cfg.lambda_triplet * L.l_triplet + cfg.lambda_variance * (L.l_var_pos + L.l_var_neg);

  if (!want_grad) return out;

  auto& G = out.grad;
  const double w_trip = cfg.lambda_triplet / static_cast<double>(L.n_triplets);
  for (const auto& [a, p, q] : active) {
    G.row(a) += w_trip * 2.0 * (emb.row(q) - emb.row(p));
    G.row(p) += w_trip * 2.0 * (emb.row(p) - emb.row(a));
    G.row(q) += w_trip * 2.0 * (emb.row(a) - emb.row(q));
  }

  // dL/ds for every similarity, then chain through the cosine.
  auto cosine_backward = [&](const std::vector<PairIndex>& pairs, const std::vector<double>& sims,
                             const std::vector<double>& dl_ds) {
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      if (dl_ds[k] == 0.0) continue;
      const auto [i, j] = pairs[k];
      const double s = sims[k];
      const double nij = norms[i] * norms[j];
      G.row(i) += dl_ds[k] * (emb.row(j) / nij - s * emb.row(i) / (norms[i] * norms[i]));
      G.row(j) += dl_ds[k] * (emb.row(i) / nij - s * emb.row(j) / (norms[j] * norms[j]));
    }
  };

  const double lam = cfg.lambda_variance;
  {
    const double np = static_cast<double>(pos_s.size());
    double mean = 0.0;
    for (double s : pos_s) mean += s;
    mean /= np;
    const double thr = (1.0 - cfg.eps_pos) * mean;
    std::vector<double> r(pos_s.size());
    double r_sum = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      r[k] = std::max(0.0, thr - pos_s[k]);
      r_sum += r[k];
    }
    std::vector<double> d(r.size());
    for (std::size_t k = 0; k < r.size(); ++k) {
      d[k] = lam * (2.0 / np) * ((1.0 - cfg.eps_pos) / np * r_sum - r[k]);
    }
    cosine_backward(pos, pos_s, d);
  }
  {
    const double nn = static_cast<double>(neg_s.size());
    double mean = 0.0;
    for (double s : neg_s) mean += s;
    mean /= nn;
    const double thr = (1.0 + cfg.eps_neg) * mean;
    std::vector<double> r(neg_s.size());
    double r_sum = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      r[k] = std::max(0.0, neg_s[k] - thr);
      r_sum += r[k];
    }
    std::vector<double> d(r.size());
    for (std::size_t k = 0; k < r.size(); ++k) {
      d[k] = lam * (2.0 / nn) * (r[k] - (1.0 + cfg.eps_neg) / nn * r_sum);
    }
    cosine_backward(neg, neg_s, d);
  }
  return out;
}

}  // namespace

double squared_distance(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a, b);
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a, b);
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  return ab / std::sqrt(aa * bb);
}

double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double margin) {
  require_same_dim(anchor, positive);
  require_same_dim(anchor, negative);
  return std::max(0.0, squared_distance(anchor, positive) - squared_distance(anchor, negative) + margin);
}

VarianceLoss variance_loss(std::span<const double> pos_sims, std::span<const double> neg_sims,
                           double eps_pos, double eps_neg) {
  if (pos_sims.empty() || neg_sims.empty()) {
    throw Error(ErrorCode::EmptyPairList, "variance loss needs positive and negative pairs");
  }
  VarianceLoss out;
  double mean_p = 0.0;
  for (double s : pos_sims) mean_p += s;
  mean_p /= static_cast<double>(pos_sims.size());
  const double thr_p = (1.0 - eps_pos) * mean_p;
  for (double s : pos_sims) {
    const double r = std::max(0.0, thr_p - s);
    out.pos += r * r;
  }
  out.pos /= static_cast<double>(pos_sims.size());

  double mean_n = 0.0;
  for (double s : neg_sims) mean_n += s;
  mean_n /= static_cast<double>(neg_sims.size());
  const double thr_n = (1.0 + eps_neg) * mean_n;
  for (double s : neg_sims) {
    const double r = std::max(0.0, s - thr_n);
    out.neg += r * r;
  }
  out.neg /= static_cast<double>(neg_sims.size());
  return out;
}

BatchLossBreakdown batch_loss(const Eigen::MatrixXd& embeddings, std::span<const int> labels,
                              const LossConfig& cfg) {
  return evaluate(embeddings, labels, cfg, true, false).loss;
}

Eigen::MatrixXd batch_loss_grad(const Eigen::MatrixXd& embeddings, std::span<const int> labels,
                                const LossConfig& cfg) {
  return evaluate(embeddings, labels, cfg, true, true).grad;
}

LossAndGrad batch_loss_with_grad(const Eigen::MatrixXd& embeddings, std::span<const int> labels,
                                 const LossConfig& cfg, bool check_norm) {
  return evaluate(embeddings, labels, cfg, check_norm, true);
}

}  // namespace pawprint
