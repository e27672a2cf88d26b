#include "pawprint/store.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace pawprint {
namespace {

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t>& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw Error(ErrorCode::TruncatedFile, "store ends after " + std::to_string(in_.size()) +
                                                " bytes, needed " + std::to_string(n) + " more");
    }
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void write_id(ByteWriter& w, const std::string& id) {
  if (id.size() > 0xFFFF) {
    throw Error(ErrorCode::IdTooLong, "id longer than 65535 bytes");
  }
  w.u16(static_cast<std::uint16_t>(id.size()));
  w.bytes(id);
}

void validate_parallel(std::span<const EmbeddingRecord> records, const LoadOptions& opts) {
  const std::size_t chunk = std::max<std::size_t>(opts.chunk, 1);
  const std::size_t n_chunks = (records.size() + chunk - 1) / chunk;
  const unsigned workers =
      static_cast<unsigned>(std::clamp<std::size_t>(opts.workers, 1, std::max<std::size_t>(n_chunks, 1)));

  // First failing record index per chunk; the lowest one is reported.
  std::vector<std::size_t> first_bad(n_chunks, records.size());
  auto run = [&](unsigned w) {
    for (std::size_t c = w; c < n_chunks; c += workers) {
      const std::size_t end = std::min(records.size(), (c + 1) * chunk);
      for (std::size_t i = c * chunk; i < end; ++i) {
        if (check_record(records[i])) {
          first_bad[c] = i;
          break;
        }
      }
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }
  for (std::size_t bad : first_bad) {
    if (bad < records.size()) validate_record(records[bad]);
  }
  validate_records(records);
}

}  // namespace

std::vector<std::uint8_t> encode_store(std::span<const EmbeddingRecord> records,
                                       std::uint32_t empty_dim) {
  const std::uint32_t dim = records.empty() ? empty_dim : records.front().dim;
  if (dim == 0) throw Error(ErrorCode::InvalidHeader, "store dim must be >= 1");
  for (const auto& r : records) {
    if (r.dim != dim) {
      throw Error(ErrorCode::MixedDims, "record '" + r.image_id + "' has dim " +
                                            std::to_string(r.dim) + ", store dim is " +
                                            std::to_string(dim));
    }
  }
  validate_records(records);

  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.bytes(std::string_view(kStoreMagic, 4));
  w.u32(kStoreVersion);
  w.u32(dim);
  w.u64(records.size());
  for (const auto& r : records) {
    write_id(w, r.identity_id);
    write_id(w, r.image_id);
    w.u8(static_cast<std::uint8_t>(r.modality));
    const std::size_t tokens = r.token_count();
    if (tokens > 0xFFFF) throw Error(ErrorCode::DimMismatch, "more than 65535 tokens");
    w.u16(static_cast<std::uint16_t>(tokens));
    for (float v : r.values) w.f32(v);
  }
  return out;
}

EmbeddingStoreHeader decode_store_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(bytes.begin(), bytes.begin() + 4, kStoreMagic)) {
    if (bytes.size() < 4) throw Error(ErrorCode::TruncatedFile, "store shorter than its magic");
    throw Error(ErrorCode::BadMagic, "not a PVEM store");
  }
  ByteReader r(bytes.subspan(4));
  EmbeddingStoreHeader h;
  h.version = r.u32();
  if (h.version != kStoreVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "unsupported store version " + std::to_string(h.version));
  }
  h.dim = r.u32();
  h.count = r.u64();
  if (h.dim == 0) throw Error(ErrorCode::InvalidHeader, "store dim must be >= 1");
  return h;
}

std::vector<EmbeddingRecord> decode_store(std::span<const std::uint8_t> bytes,
                                          const LoadOptions& opts) {
  const auto header = decode_store_header(bytes);
  ByteReader r(bytes.subspan(kStoreHeaderBytes));
  std::vector<EmbeddingRecord> records;
  // Smallest possible record is 5 bytes of framing plus one float row.
  const std::uint64_t min_record = 5 + 4ULL * header.dim + 2;
  records.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(header.count, r.remaining() / min_record + 1)));
  for (std::uint64_t i = 0; i < header.count; ++i) {
    EmbeddingRecord rec;
    rec.identity_id = r.str(r.u16());
    rec.image_id = r.str(r.u16());
    rec.modality = modality_from_byte(r.u8());
    const std::uint16_t tokens = r.u16();
    rec.dim = header.dim;
    const std::size_t n = static_cast<std::size_t>(tokens) * header.dim;
    if (r.remaining() < n * 4) {
      throw Error(ErrorCode::TruncatedFile, "store truncated inside record " + std::to_string(i));
    }
    rec.values.resize(n);
    for (auto& v : rec.values) v = r.f32();
    records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) {
    throw Error(ErrorCode::TrailingData,
                std::to_string(r.remaining()) + " bytes after the last declared record");
  }
  validate_parallel(records, opts);
  return records;
}

std::uint64_t write_store(std::span<const EmbeddingRecord> records,
                          const std::filesystem::path& path, std::uint32_t empty_dim) {
  const auto bytes = encode_store(records, empty_dim);
  write_file_bytes(path, bytes);
  return bytes.size();
}

std::vector<EmbeddingRecord> read_store(const std::filesystem::path& path,
                                        const LoadOptions& opts) {
  const auto bytes = read_file_bytes(path);
  return decode_store(bytes, opts);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::IoFailure, "read failed for " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot rename onto " + path.string() + ": " + ec.message());
}

void write_file_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoFailure, "sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xF]);
  }
  return out;
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

namespace {

std::string fmt17(double v) {
  if (std::isnan(v)) return "\"nan\"";
  if (std::isinf(v)) return v > 0 ? "\"inf\"" : "\"-inf\"";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw Error(ErrorCode::InvalidArgument, "bad real value '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace

std::string report_to_json(const MetricReport& rep) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"roc_auc\": " << fmt17(rep.roc_auc) << ",\n";
  os << "  \"eer\": " << fmt17(rep.eer) << ",\n";
  os << "  \"eer_threshold\": " << fmt17(rep.eer_threshold) << ",\n";
  os << "  \"top_k\": {";
  bool first = true;
  for (const auto& [k, acc] : rep.top_k) {
    os << (first ? "" : ", ") << '"' << k << "\": " << fmt17(acc);
    first = false;
  }
  os << "},\n";
  os << "  \"n_pos\": " << rep.n_pos << ",\n";
  os << "  \"n_neg\": " << rep.n_neg << ",\n";
  os << "  \"n_queries\": " << rep.n_queries << ",\n";
  os << "  \"n_skipped\": " << rep.n_skipped << ",\n";
  os << "  \"seed\": " << rep.seed << ",\n";
  os << "  \"config_digest\": " << nlohmann::json(rep.config_digest).dump() << "\n";
  os << "}\n";
  return os.str();
}

MetricReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MetricReport rep;
    rep.roc_auc = parse_real(j.at("roc_auc"));
    rep.eer = parse_real(j.at("eer"));
    rep.eer_threshold = parse_real(j.at("eer_threshold"));
    for (const auto& [k, v] : j.at("top_k").items()) rep.top_k[std::stoi(k)] = parse_real(v);
    rep.n_pos = j.at("n_pos").get<std::size_t>();
    rep.n_neg = j.at("n_neg").get<std::size_t>();
    rep.n_queries = j.at("n_queries").get<std::size_t>();
    rep.n_skipped = j.value("n_skipped", std::size_t{0});
    rep.seed = j.at("seed").get<std::uint64_t>();
    rep.config_digest = j.at("config_digest").get<std::string>();
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed metric report: ") + e.what());
  }
}

void write_report(const MetricReport& report, const std::filesystem::path& path) {
  write_file_text(path, report_to_json(report));
}

MetricReport read_report(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return report_from_json(std::string(bytes.begin(), bytes.end()));
}

}  // namespace pawprint
