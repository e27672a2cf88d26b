#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pawprint/core.hpp"

namespace pawprint {

// .pvem layout, all integers and floats little-endian:
//   header  "PVEM" | u32 version (=1) | u32 dim | u64 count          (20 bytes)
//   record  u16 len + identity_id | u16 len + image_id | u8 modality |
//           u16 token_count | token_count * dim * f32
inline constexpr char kStoreMagic[4] = {'P', 'V', 'E', 'M'};
inline constexpr std::uint32_t kStoreVersion = 1;
inline constexpr std::size_t kStoreHeaderBytes = 20;

struct EmbeddingStoreHeader {
  std::uint32_t version = kStoreVersion;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
};

struct LoadOptions {
  /// Threads used to validate decoded records.
  unsigned workers = 1;
  /// Records per validation chunk.
  std::size_t chunk = 128;
};

/// Serializes records. `empty_dim` is the header dim written when `records`
/// is empty (the header requires dim >= 1).
std::vector<std::uint8_t> encode_store(std::span<const EmbeddingRecord> records,
                                       std::uint32_t empty_dim = 1);

std::vector<EmbeddingRecord> decode_store(std::span<const std::uint8_t> bytes,
                                          const LoadOptions& opts = {});

EmbeddingStoreHeader decode_store_header(std::span<const std::uint8_t> bytes);

/// Returns the number of bytes written.
std::uint64_t write_store(std::span<const EmbeddingRecord> records,
                          const std::filesystem::path& path, std::uint32_t empty_dim = 1);

std::vector<EmbeddingRecord> read_store(const std::filesystem::path& path,
                                        const LoadOptions& opts = {});

// File helpers shared by the CLI and checkpoints.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never observe a
/// partially written file.
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_text(const std::filesystem::path& path, const std::string& text);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& text);

// MetricReport JSON. Field names are the lowercase_snake struct field names;
// the output is deterministic for a given report.
std::string report_to_json(const MetricReport& report);
MetricReport report_from_json(const std::string& text);
void write_report(const MetricReport& report, const std::filesystem::path& path);
MetricReport read_report(const std::filesystem::path& path);

}  // namespace pawprint
