#include "pawprint/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

namespace pawprint {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::EmptyId: return "EmptyId";
    case ErrorCode::DuplicateImageId: return "DuplicateImageId";
    case ErrorCode::UnknownModality: return "UnknownModality";
    case ErrorCode::IdTooLong: return "IdTooLong";
    case ErrorCode::MixedDims: return "MixedDims";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::InvalidHeader: return "InvalidHeader";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::TrailingData: return "TrailingData";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::TooFewImages: return "TooFewImages";
    case ErrorCode::TooFewIdentities: return "TooFewIdentities";
    case ErrorCode::EmptyPairList: return "EmptyPairList";
    case ErrorCode::UnbalancedBatch: return "UnbalancedBatch";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::EmptyTokenSequence: return "EmptyTokenSequence";
    case ErrorCode::StrategyMismatch: return "StrategyMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NoPositivePairs: return "NoPositivePairs";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::EmptyGallery: return "EmptyGallery";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InvalidTriplet: return "InvalidTriplet";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Image: return "image";
    case Modality::TextTokenSeq: return "text_token_seq";
    case Modality::Fused: return "fused";
  }
  return "unknown";
}

Modality modality_from_byte(std::uint8_t b) {
  if (b > 2) {
    throw Error(ErrorCode::UnknownModality, "unknown modality byte " + std::to_string(b));
  }
  return static_cast<Modality>(b);
}

std::vector<double> EmbeddingRecord::pooled() const {
  std::vector<double> out(dim, 0.0);
  const std::size_t n = token_count();
  if (n == 0) return out;
  for (std::size_t t = 0; t < n; ++t) {
    auto row = token(t);
    for (std::size_t k = 0; k < dim; ++k) out[k] += row[k];
  }
  for (auto& v : out) v /= static_cast<double>(n);
  return out;
}

std::optional<ErrorCode> check_record(const EmbeddingRecord& r) noexcept {
  if (r.identity_id.empty() || r.image_id.empty()) return ErrorCode::EmptyId;
  if (static_cast<std::uint8_t>(r.modality) > 2) return ErrorCode::UnknownModality;
  if (r.dim == 0 || r.values.empty() || r.values.size() % r.dim != 0) {
    return ErrorCode::DimMismatch;
  }
  if (r.modality != Modality::TextTokenSeq && r.values.size() != r.dim) {
    return ErrorCode::DimMismatch;
  }
  for (float v : r.values) {
    if (!std::isfinite(v)) return ErrorCode::NonFiniteValue;
  }
  return std::nullopt;
}

void validate_record(const EmbeddingRecord& r) {
  if (auto code = check_record(r)) {
    throw Error(*code, std::string(to_string(*code)) + " in record '" + r.image_id + "'");
  }
}

void validate_records(std::span<const EmbeddingRecord> records) {
  std::unordered_set<std::string_view> seen;
  seen.reserve(records.size());
  for (const auto& r : records) {
    validate_record(r);
    if (!seen.insert(r.image_id).second) {
      throw Error(ErrorCode::DuplicateImageId, "duplicate image id '" + r.image_id + "'");
    }
  }
}

Population population_of(std::span<const EmbeddingRecord> records) {
  Population pop;
  for (const auto& r : records) pop[r.identity_id].push_back(r.image_id);
  return pop;
}

Triplet make_triplet(const EmbeddingRecord& anchor, const EmbeddingRecord& positive,
                     const EmbeddingRecord& negative) {
  if (anchor.identity_id != positive.identity_id) {
    throw Error(ErrorCode::InvalidTriplet, "anchor and positive differ in identity");
  }
  if (anchor.identity_id == negative.identity_id) {
    throw Error(ErrorCode::InvalidTriplet, "negative shares the anchor identity");
  }
  if (anchor.image_id == positive.image_id) {
    throw Error(ErrorCode::InvalidTriplet, "anchor and positive are the same image");
  }
  return Triplet{&anchor, &positive, &negative};
}

std::vector<std::string> verify_pair_set(const PairSet& pairs,
                                         const std::map<std::string, std::string>& identity_of) {
  std::vector<std::string> problems;
  std::map<std::string, int> usage;
  std::map<std::string, int> positives_per_identity;
  std::set<std::pair<std::string, std::string>> seen;

  auto check = [&](const ImagePair& p, bool positive) {
    const char* kind = positive ? "positive" : "negative";
    if (p.first == p.second) {
      problems.push_back(std::string(kind) + " pair of image with itself: " + p.first);
    }
    auto key = std::minmax(p.first, p.second);
    if (!seen.emplace(key.first, key.second).second) {
      problems.push_back(std::string("duplicate pair: ") + p.first + " / " + p.second);
    }
    auto ia = identity_of.find(p.first);
    auto ib = identity_of.find(p.second);
    if (ia == identity_of.end() || ib == identity_of.end()) {
      problems.push_back(std::string(kind) + " pair references unknown image: " + p.first +
                         " / " + p.second);
      return;
    }
    const bool same = ia->second == ib->second;
    if (positive && !same) {
      problems.push_back("positive pair crosses identities: " + p.first + " / " + p.second);
    }
    if (!positive && same) {
      problems.push_back("negative pair shares identity: " + p.first + " / " + p.second);
    }
    if (positive) ++positives_per_identity[ia->second];
    ++usage[p.first];
    ++usage[p.second];
  };

  for (const auto& p : pairs.positives) check(p, true);
  for (const auto& p : pairs.negatives) check(p, false);

  for (const auto& [image, n] : usage) {
    if (n > pairs.usage_cap) {
      problems.push_back("image " + image + " used " + std::to_string(n) + " times (cap " +
                         std::to_string(pairs.usage_cap) + ")");
    }
  }
  for (const auto& [identity, n] : positives_per_identity) {
    if (n > pairs.per_identity_cap) {
      problems.push_back("identity " + identity + " has " + std::to_string(n) +
                         " positive pairs (cap " + std::to_string(pairs.per_identity_cap) + ")");
    }
  }
  return problems;
}

void LossConfig::validate() const {
  if (!(margin > 0.0)) throw Error(ErrorCode::InvalidConfig, "margin must be > 0");
  if (!(eps_pos >= 0.0) || !(eps_neg >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "epsilon tolerances must be >= 0");
  }
  if (!(lambda_triplet >= 0.0) || !(lambda_variance >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "loss weights must be >= 0");
  }
}

}  // namespace pawprint
