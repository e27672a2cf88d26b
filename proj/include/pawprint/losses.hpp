#pragma once

#include <Eigen/Dense>

#include <span>

#include "pawprint/core.hpp"

namespace pawprint {

struct BatchLossBreakdown {
  double l_triplet = 0.0;
  double l_var_pos = 0.0;
  double l_var_neg = 0.0;
  double l_total = 0.0;
  std::size_t n_triplets = 0;
  std::size_t n_pos_pairs = 0;
  std::size_t n_neg_pairs = 0;
};

struct VarianceLoss {
  double pos = 0.0;
  double neg = 0.0;
};

double squared_distance(std::span<const double> a, std::span<const double> b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// max(0, |a-p|^2 - |a-n|^2 + margin). Throws DimMismatch.
double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                    std::span<const double> negative, double margin);

/// Mean squared shortfall of positive similarities below (1-eps_pos) * mean,
/// and mean squared excess of negative similarities above (1+eps_neg) * mean.
/// Throws EmptyPairList.
VarianceLoss variance_loss(std::span<const double> pos_sims, std::span<const double> neg_sims,
                           double eps_pos, double eps_neg);

/// Rows of `embeddings` are unit vectors; `labels[i]` is the identity of row i.
/// Every identity must occur exactly twice and at least two identities must be
/// present (UnbalancedBatch). Rows whose norm deviates from 1 by more than
/// 1e-4 raise NotNormalized.
///
/// Triplets are every ordered same-identity (anchor, positive) with every
/// other-identity negative; the triplet term is their mean. Similarities
/// are cosines over unordered pairs.
BatchLossBreakdown batch_loss(const Eigen::MatrixXd& embeddings, std::span<const int> labels,
                              const LossConfig& cfg);

/// Subgradient of l_total with respect to each row, same shape as
/// `embeddings`. Hinge terms sitting exactly at zero contribute nothing. The
/// similarity means are differentiated through.
Eigen::MatrixXd batch_loss_grad(const Eigen::MatrixXd& embeddings, std::span<const int> labels,
                                const LossConfig& cfg);

struct LossAndGrad {
  BatchLossBreakdown loss;
  Eigen::MatrixXd grad;
};

/// Loss and gradient in one pass. `check_norm = false` skips the unit-norm
/// precondition, which finite-difference probes need.
LossAndGrad batch_loss_with_grad(const Eigen::MatrixXd& embeddings, std::span<const int> labels,
                                 const LossConfig& cfg, bool check_norm = true);

}  // namespace pawprint
