#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pawprint {

inline constexpr std::string_view kVersion = "0.1.0";

enum class ErrorCode {
  DimMismatch,
  NonFiniteValue,
  EmptyId,
  DuplicateImageId,
  UnknownModality,
  IdTooLong,
  MixedDims,
  IoFailure,
  BadMagic,
  UnsupportedVersion,
  InvalidHeader,
  TruncatedFile,
  TrailingData,
  InvalidConfig,
  TooFewImages,
  TooFewIdentities,
  EmptyPairList,
  UnbalancedBatch,
  NotNormalized,
  EmptyTokenSequence,
  StrategyMismatch,
  ShapeMismatch,
  NoPositivePairs,
  DegenerateLabels,
  EmptyGallery,
  LengthMismatch,
  InvalidTriplet,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Domain error carrying a machine-readable code. Every failure the library
/// reports goes through this type.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

enum class Modality : std::uint8_t { Image = 0, TextTokenSeq = 1, Fused = 2 };

std::string_view to_string(Modality m);
/// Throws UnknownModality for anything outside the closed enum.
Modality modality_from_byte(std::uint8_t b);

/// One embedding tagged with its identity. `values` holds token_count() rows
/// of width `dim` back to back; only TextTokenSeq records may carry more than
/// one row.
struct EmbeddingRecord {
  std::string identity_id;
  std::string image_id;
  Modality modality = Modality::Image;
  std::uint32_t dim = 0;
  std::vector<float> values;

  std::size_t token_count() const { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const float> token(std::size_t i) const {
    return std::span<const float>(values).subspan(i * dim, dim);
  }
  /// Arithmetic mean over tokens, in double.
  std::vector<double> pooled() const;
};

/// Returns normally iff every record invariant holds; throws Error otherwise.
void validate_record(const EmbeddingRecord& r);

/// Non-throwing form of validate_record.
std::optional<ErrorCode> check_record(const EmbeddingRecord& r) noexcept;

/// validate_record on each element plus image_id uniqueness.
void validate_records(std::span<const EmbeddingRecord> records);

/// Bytewise-ordered identity -> image ids, image ids in store order.
using Population = std::map<std::string, std::vector<std::string>>;

Population population_of(std::span<const EmbeddingRecord> records);

struct Triplet {
  const EmbeddingRecord* anchor = nullptr;
  const EmbeddingRecord* positive = nullptr;
  const EmbeddingRecord* negative = nullptr;
};

/// Throws InvalidTriplet unless anchor/positive share identity, the negative
/// does not, and anchor and positive are distinct images.
Triplet make_triplet(const EmbeddingRecord& anchor, const EmbeddingRecord& positive,
                     const EmbeddingRecord& negative);

using ImagePair = std::pair<std::string, std::string>;

struct PairSet {
  std::vector<ImagePair> positives;
  std::vector<ImagePair> negatives;
  int usage_cap = 5;
  int per_identity_cap = 15;
  std::uint64_t seed = 0;
};

/// Standalone PairSet verifier. `identity_of` maps image id -> identity id.
/// Returns one human-readable line per violated invariant; empty means valid.
std::vector<std::string> verify_pair_set(const PairSet& pairs,
                                         const std::map<std::string, std::string>& identity_of);

struct MetricReport {
  double roc_auc = 0.0;
  double eer = 0.0;
  double eer_threshold = 0.0;
  std::map<int, double> top_k;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::size_t n_queries = 0;
  std::size_t n_skipped = 0;
  std::uint64_t seed = 0;
  std::string config_digest;
};

struct LossConfig {
  double margin = 0.45;
  double eps_pos = 0.01;
  double eps_neg = 0.01;
  double lambda_triplet = 1.0;
  double lambda_variance = 0.5;

  /// Throws InvalidConfig.
  void validate() const;
};

}  // namespace pawprint
