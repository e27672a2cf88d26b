#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "pawprint/store.hpp"
#include "pawprint/synth.hpp"

using namespace pawprint;
namespace fs = std::filesystem;

#ifndef PAWPRINT_TEST_DATA
#error "PAWPRINT_TEST_DATA must point at tests/data"
#endif

namespace {

ErrorCode decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_store(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("decode should have failed");
  return ErrorCode::InvalidArgument;
}

SyntheticPopulation golden_population() {
  SynthConfig cfg;
  cfg.seed = 7;
  cfg.n_identities = 3;
  cfg.images_per_identity = 2;
  cfg.dim_image = 4;
  cfg.dim_text = 3;
  cfg.tokens_per_text = 2;
  cfg.sigma = 0.1;
  cfg.rho = 0.8;
  return gen_population(cfg);
}

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "pawprint_store_test";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("empty store is a 20-byte header") {
  const auto bytes = encode_store({});
  CHECK(bytes.size() == 4 + 4 + 4 + 8);
  CHECK(decode_store(bytes).empty());
  const auto h = decode_store_header(bytes);
  CHECK(h.count == 0);
  CHECK(h.version == 1);
}

TEST_CASE("write_store/read_store round trip is bitwise") {
  const auto pop = golden_population();
  const auto path = temp_path("rt.pvem");
  const auto n = write_store(pop.texts, path);
  CHECK(n == fs::file_size(path));
  const auto back = read_store(path, LoadOptions{4, 2});
  REQUIRE(back.size() == pop.texts.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].identity_id == pop.texts[i].identity_id);
    CHECK(back[i].image_id == pop.texts[i].image_id);
    CHECK(back[i].modality == Modality::TextTokenSeq);
    CHECK(std::memcmp(back[i].values.data(), pop.texts[i].values.data(), back[i].values.size() * 4) == 0);
  }
  CHECK(encode_store(back) == read_file_bytes(path));
}

TEST_CASE("golden files are reproduced byte for byte") {
  const auto pop = golden_population();
  const auto golden_img = read_file_bytes(fs::path(PAWPRINT_TEST_DATA) / "golden_images.pvem");
  const auto golden_txt = read_file_bytes(fs::path(PAWPRINT_TEST_DATA) / "golden_texts.pvem");
  CHECK(encode_store(pop.images) == golden_img);
  CHECK(encode_store(pop.texts) == golden_txt);
  CHECK(encode_store(decode_store(golden_img)) == golden_img);
  CHECK(encode_store(decode_store(golden_txt)) == golden_txt);
}

TEST_CASE("header layout is little-endian") {
  std::vector<EmbeddingRecord> one{{"A", "a", Modality::Fused, 2, {1.0f, -2.0f}}};
  const auto b = encode_store(one);
  CHECK(std::string(b.begin(), b.begin() + 4) == "PVEM");
  CHECK(b[4] == 1);
  CHECK(b[8] == 2);
  CHECK(b[12] == 1);
  // identity "A", image "a", modality 2, one token, 1.0f = 0x3f800000.
  const std::vector<std::uint8_t> body{1, 0, 'A', 1, 0, 'a', 2, 1, 0, 0, 0, 0x80, 0x3f, 0, 0, 0, 0xc0};
  CHECK(std::vector<std::uint8_t>(b.begin() + 20, b.end()) == body);
}

TEST_CASE("mixed dims are refused") {
  std::vector<EmbeddingRecord> rs{{"A", "a", Modality::Image, 4, {1, 0, 0, 0}},
                                  {"B", "b", Modality::Image, 8, std::vector<float>(8, 0.1f)}};
  try {
    encode_store(rs);
    FAIL("expected MixedDims");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MixedDims);
  }
}

TEST_CASE("decoding rejects malformed files") {
  const auto good = encode_store(golden_population().images);

  auto bad_magic = good;
  std::copy_n("XXXX", 4, bad_magic.begin());
  CHECK(decode_error(bad_magic) == ErrorCode::BadMagic);

  auto bad_version = good;
  bad_version[4] = 2;
  CHECK(decode_error(bad_version) == ErrorCode::UnsupportedVersion);

  auto zero_dim = good;
  zero_dim[8] = 0;
  CHECK(decode_error(zero_dim) == ErrorCode::InvalidHeader);

  auto trailing = good;
  trailing.push_back(0);
  CHECK(decode_error(trailing) == ErrorCode::TrailingData);

  // Every proper prefix is truncated somewhere, header or record.
  for (std::size_t len = 0; len < good.size(); ++len) {
    std::vector<std::uint8_t> cut(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(len));
    CHECK(decode_error(cut) == ErrorCode::TruncatedFile);
  }
}

TEST_CASE("non-finite payloads and unknown modalities are load errors") {
  std::vector<EmbeddingRecord> one{{"A", "a", Modality::Image, 1, {1.0f}}};
  auto b = encode_store(one);
  const float nan = std::nanf("");
  std::memcpy(b.data() + b.size() - 4, &nan, 4);
  CHECK(decode_error(b) == ErrorCode::NonFiniteValue);

  auto m = encode_store(one);
  m[20 + 3 + 3] = 9;  // modality byte
  CHECK(decode_error(m) == ErrorCode::UnknownModality);
}

TEST_CASE("duplicate image ids are load errors") {
  std::vector<EmbeddingRecord> one{{"A", "a", Modality::Image, 1, {1.0f}}};
  auto b = encode_store(one);
  std::vector<std::uint8_t> twice(b.begin(), b.end());
  twice.insert(twice.end(), b.begin() + 20, b.end());
  twice[12] = 2;
  CHECK(decode_error(twice) == ErrorCode::DuplicateImageId);
}

TEST_CASE("overlong ids are refused") {
  std::vector<EmbeddingRecord> one{{std::string(70000, 'x'), "a", Modality::Image, 1, {1.0f}}};
  CHECK_THROWS_AS(encode_store(one), Error);
}

TEST_CASE("metric reports round trip exactly") {
  MetricReport r;
  r.roc_auc = 0.1 + 0.2;
  r.eer = 1.0 / 3.0;
  r.eer_threshold = -std::numeric_limits<double>::infinity();
  r.top_k = {{1, 2.0 / 7.0}, {5, 0.5}, {10, 1.0}};
  r.n_pos = 12;
  r.n_neg = 11;
  r.n_queries = 40;
  r.n_skipped = 1;
  r.seed = 0xFFFFFFFFFFFFFFFFULL;
  r.config_digest = "abc123";
  const auto text = report_to_json(r);
  const auto back = report_from_json(text);
  CHECK(back.roc_auc == r.roc_auc);
  CHECK(back.eer == r.eer);
  CHECK(back.eer_threshold == r.eer_threshold);
  CHECK(back.top_k == r.top_k);
  CHECK(back.n_pos == 12);
  CHECK(back.n_neg == 11);
  CHECK(back.n_queries == 40);
  CHECK(back.seed == r.seed);
  CHECK(back.config_digest == "abc123");
  CHECK(report_to_json(back) == text);
  CHECK(text.find("\"top_k\": {\"1\": ") != std::string::npos);
}

TEST_CASE("sha256 of a known string") {
  CHECK(sha256_hex(std::string("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
