#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pawprint/core.hpp"
#include "pawprint/fusion.hpp"

namespace pawprint {

struct AdamHyper {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  AdamHyper adam;
  int epochs = 10;
  int identities_per_batch = 58;
  std::uint64_t seed = 0;
  LossConfig loss;

  /// Throws InvalidConfig.
  void validate() const;
};

/// First and second moments per parameter tensor, plus the step count.
struct AdamState {
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update applied in place. A fresh (empty) state is
/// shaped on first use. Throws ShapeMismatch when params, grads and state
/// disagree.
void adam_step(std::span<Eigen::MatrixXd* const> params, std::span<const Eigen::MatrixXd* const> grads,
               AdamState& state, const AdamHyper& hyper);

/// adam_step over every tensor of a fusion model, gradients laid out as a
/// model of the same strategy.
void adam_step(FusionModel& model, const FusionModel& grads, AdamState& state, const AdamHyper& hyper);

struct TrainResult {
  std::optional<FusionModel> model;
  /// Mean batch l_total per epoch.
  std::vector<double> loss_history;
};

/// Balanced batches from the image store, fused through `model` (or the raw
/// normalized image embeddings when `model` is empty, which trains nothing),
/// combined loss, one Adam step per batch. `texts` supplies one
/// TextTokenSeq record per image id and is required whenever a model is given.
TrainResult train(std::optional<FusionModel> model, std::span<const EmbeddingRecord> images,
                  std::span<const EmbeddingRecord> texts, const TrainConfig& cfg);

/// Applies `model` to every image (with its text record) and returns Fused
/// records in image-store order. Without a model the image vectors are
/// returned unit-normalized as Image records.
std::vector<EmbeddingRecord> embed_store(const std::optional<FusionModel>& model,
                                         std::span<const EmbeddingRecord> images,
                                         std::span<const EmbeddingRecord> texts);

}  // namespace pawprint
