#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pawprint/core.hpp"

namespace pawprint {

enum class FusionStrategy { Concat, WeightedText, CrossAttention, Gated };

std::string_view to_string(FusionStrategy s);
/// Accepts "concat", "weighted", "xattn", "gated" (and the enum spellings).
FusionStrategy fusion_strategy_from_string(std::string_view s);

/// Every parameter the four strategies can use. Weight matrices map row
/// vectors: proj_img(x) = x * w_img + b_img^T. Biases are column matrices.
struct FusionParams {
  Eigen::MatrixXd w_img;  // dim_image x d_s
  Eigen::MatrixXd b_img;  // d_s x 1
  Eigen::MatrixXd w_txt;  // dim_text x d_s
  Eigen::MatrixXd b_txt;  // d_s x 1
  Eigen::MatrixXd gamma;  // 1 x 1, WeightedText
  Eigen::MatrixXd w_q;    // d_s x d_s, CrossAttention
  Eigen::MatrixXd w_k;
  Eigen::MatrixXd w_v;
  Eigen::MatrixXd w1;     // 2 d_s x d_s, Gated
  Eigen::MatrixXd b1;     // d_s x 1
  Eigen::MatrixXd w2;     // d_s x 2, logits ordered (text, image)
  Eigen::MatrixXd b2;     // 2 x 1
};

struct NamedTensor {
  std::string_view name;
  Eigen::MatrixXd* value;
};

struct ConstNamedTensor {
  std::string_view name;
  const Eigen::MatrixXd* value;
};

struct FusionModel {
  FusionStrategy strategy = FusionStrategy::Concat;
  int dim_image = 0;
  int dim_text = 0;
  int d_shared = 256;
  FusionParams params;

  /// Tensors the strategy uses, in canonical order (checkpoint and
  /// optimizer order).
  std::vector<NamedTensor> tensors();
  std::vector<ConstNamedTensor> tensors() const;

  int output_dim() const;
  std::size_t parameter_count() const;
};

/// Seeded scaled-gaussian weights (std 1/sqrt(fan_in)), zero biases,
/// gamma = 1.
FusionModel init_fusion(FusionStrategy strategy, int dim_image, int dim_text, int d_shared,
                        std::uint64_t seed);

/// Same strategy and shapes, all parameters zero.
FusionModel zeros_like(const FusionModel& model);

/// `patches` holds one image vector per row, `tokens` one text token per row.
/// Concat, WeightedText and Gated mean-pool both sequences first. The result
/// is unit-normalized.
Eigen::VectorXd fuse(const FusionModel& model, const Eigen::MatrixXd& patches,
                     const Eigen::MatrixXd& tokens);

struct GateWeights {
  double text = 0.5;
  double image = 0.5;
};

/// Throws StrategyMismatch unless the model is Gated.
GateWeights gate_weights(const FusionModel& model, const Eigen::MatrixXd& patches,
                         const Eigen::MatrixXd& tokens);

/// Row-wise attention weights (tokens x patches) of a CrossAttention model.
Eigen::MatrixXd attention_weights(const FusionModel& model, const Eigen::MatrixXd& patches,
                                  const Eigen::MatrixXd& tokens);

/// Numerically stable two-way softmax.
GateWeights softmax2(double text_logit, double image_logit);

struct FusionGrads {
  FusionModel params;  // gradient per parameter, same layout as the model
  Eigen::MatrixXd d_patches;
  Eigen::MatrixXd d_tokens;
};

/// Vector-Jacobian product of fuse(), normalization included.
FusionGrads fuse_backward(const FusionModel& model, const Eigen::MatrixXd& patches,
                          const Eigen::MatrixXd& tokens, const Eigen::VectorXd& upstream);

/// fuse_backward that accumulates parameter gradients into `acc` and
/// returns the fused output computed on the way.
Eigen::VectorXd fuse_backward_accumulate(const FusionModel& model, const Eigen::MatrixXd& patches,
                                         const Eigen::MatrixXd& tokens,
                                         const Eigen::VectorXd& upstream, FusionModel& acc);

/// Row-matrix views of stored records.
Eigen::MatrixXd as_rows(const EmbeddingRecord& r);

// Checkpoints: `<prefix>.json` describes strategy, dims and tensor shapes;
// `<prefix>.bin` holds the tensors row-major as little-endian f64, in
// canonical order.
void save_checkpoint(const FusionModel& model, const std::filesystem::path& prefix);
FusionModel load_checkpoint(const std::filesystem::path& prefix);

}  // namespace pawprint
