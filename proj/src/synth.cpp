#include "pawprint/synth.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "pawprint/random.hpp"

namespace pawprint {
namespace {

enum StreamTag : std::uint64_t { kProjection = 1, kLatent = 2, kImageNoise = 3, kTextNoise = 4 };

// Orthonormal columns (rows x cols, rows >= cols) from the QR factorization
// of a seeded gaussian matrix.
Eigen::MatrixXd seeded_orthonormal(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd g(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) g(r, c) = rng.gaussian();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

std::vector<float> normalized(const Eigen::VectorXd& v) {
  const double n = v.norm();
  std::vector<float> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(v[i] / n);
  return out;
}

std::string numbered(const char* prefix, int width, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, i);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (n_identities < 1) fail("n_identities must be >= 1");
  if (images_per_identity < 2) fail("images_per_identity must be >= 2");
  if (dim_image < 1 || dim_text < 1) fail("dimensions must be >= 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) fail("sigma must be a finite value >= 0");
  if (!(rho >= 0.0 && rho <= 1.0)) fail("rho must lie in [0, 1]");
  if (tokens_per_text < 1 || tokens_per_text > 0xFFFF) fail("tokens_per_text must be in [1, 65535]");
}

SyntheticPopulation gen_population(const SynthConfig& cfg) {
  cfg.validate();
  const int latent = std::min(cfg.dim_image, cfg.dim_text);

  Rng proj_rng(derive_seed(cfg.seed, kProjection));
  const Eigen::MatrixXd to_image = seeded_orthonormal(proj_rng, cfg.dim_image, latent);
  const Eigen::MatrixXd to_text = seeded_orthonormal(proj_rng, cfg.dim_text, latent);

  Rng latent_rng(derive_seed(cfg.seed, kLatent));
  Rng image_rng(derive_seed(cfg.seed, kImageNoise));
  Rng text_rng(derive_seed(cfg.seed, kTextNoise));

  SyntheticPopulation pop;
  pop.images.reserve(static_cast<std::size_t>(cfg.n_identities * cfg.images_per_identity));
  pop.texts.reserve(pop.images.capacity());

  Eigen::VectorXd c(latent);
  Eigen::VectorXd img(cfg.dim_image);
  Eigen::VectorXd tok(cfg.dim_text);
  for (int id = 0; id < cfg.n_identities; ++id) {
    for (int k = 0; k < latent; ++k) c[k] = latent_rng.gaussian();
    c.normalize();
    const Eigen::VectorXd img_center = to_image * c;
    const Eigen::VectorXd txt_center = to_text * c;
    const std::string identity = numbered("id", 4, id);

    for (int m = 0; m < cfg.images_per_identity; ++m) {
      const std::string image_id = identity + numbered("_img", 3, m);

      for (int k = 0; k < cfg.dim_image; ++k) img[k] = img_center[k] + cfg.sigma * image_rng.gaussian();
      pop.images.push_back(EmbeddingRecord{identity, image_id, Modality::Image,
                                           static_cast<std::uint32_t>(cfg.dim_image), normalized(img)});

      EmbeddingRecord text{identity, image_id, Modality::TextTokenSeq,
                           static_cast<std::uint32_t>(cfg.dim_text), {}};
      text.values.reserve(static_cast<std::size_t>(cfg.dim_text * cfg.tokens_per_text));
      for (int t = 0; t < cfg.tokens_per_text; ++t) {
        for (int k = 0; k < cfg.dim_text; ++k) {
          const double uninformative = text_rng.gaussian();
          const double noise = text_rng.gaussian();
          tok[k] = cfg.rho * txt_center[k] + (1.0 - cfg.rho) * uninformative + cfg.sigma * noise;
        }
        const auto row = normalized(tok);
        text.values.insert(text.values.end(), row.begin(), row.end());
      }
      pop.texts.push_back(std::move(text));
    }
  }
  return pop;
}

std::string synth_config_to_json(const SynthConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["n_identities"] = cfg.n_identities;
  j["images_per_identity"] = cfg.images_per_identity;
  j["dim_image"] = cfg.dim_image;
  j["dim_text"] = cfg.dim_text;
  j["sigma"] = cfg.sigma;
  j["rho"] = cfg.rho;
  j["tokens_per_text"] = cfg.tokens_per_text;
  j["prng"] = "xoshiro256** seeded by splitmix64; gaussian via Box-Muller";
  return j.dump(2) + "\n";
}

}  // namespace pawprint
