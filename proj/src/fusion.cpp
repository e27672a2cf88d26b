#include "pawprint/fusion.hpp"

#include <bit>
#include <cmath>

#include <json.hpp>

#include "pawprint/random.hpp"
#include "pawprint/store.hpp"

namespace pawprint {

std::string_view to_string(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::Concat: return "concat";
    case FusionStrategy::WeightedText: return "weighted";
    case FusionStrategy::CrossAttention: return "xattn";
    case FusionStrategy::Gated: return "gated";
  }
  return "unknown";
}

FusionStrategy fusion_strategy_from_string(std::string_view s) {
  if (s == "concat" || s == "Concat") return FusionStrategy::Concat;
  if (s == "weighted" || s == "WeightedText") return FusionStrategy::WeightedText;
  if (s == "xattn" || s == "CrossAttention") return FusionStrategy::CrossAttention;
  if (s == "gated" || s == "Gated") return FusionStrategy::Gated;
  throw Error(ErrorCode::InvalidArgument, "unknown fusion strategy '" + std::string(s) + "'");
}

namespace {

template <typename Model, typename Tensor>
std::vector<Tensor> tensors_of(Model& m) {
  auto& p = m.params;
  std::vector<Tensor> out{{"w_img", &p.w_img}, {"b_img", &p.b_img}, {"w_txt", &p.w_txt},
                          {"b_txt", &p.b_txt}};
  switch (m.strategy) {
    case FusionStrategy::Concat: break;
    case FusionStrategy::WeightedText: out.push_back({"gamma", &p.gamma}); break;
    case FusionStrategy::CrossAttention:
      out.push_back({"w_q", &p.w_q});
      out.push_back({"w_k", &p.w_k});
      out.push_back({"w_v", &p.w_v});
      break;
    case FusionStrategy::Gated:
      out.push_back({"w1", &p.w1});
      out.push_back({"b1", &p.b1});
      out.push_back({"w2", &p.w2});
      out.push_back({"b2", &p.b2});
      break;
  }
  return out;
}

void shape_model(FusionModel& m) {
  const int d = m.d_shared;
  auto& p = m.params;
  p = FusionParams{};
  p.w_img = Eigen::MatrixXd::Zero(m.dim_image, d);
  p.b_img = Eigen::MatrixXd::Zero(d, 1);
  p.w_txt = Eigen::MatrixXd::Zero(m.dim_text, d);
  p.b_txt = Eigen::MatrixXd::Zero(d, 1);
  switch (m.strategy) {
    case FusionStrategy::Concat: break;
    case FusionStrategy::WeightedText: p.gamma = Eigen::MatrixXd::Zero(1, 1); break;
    case FusionStrategy::CrossAttention:
      p.w_q = p.w_k = p.w_v = Eigen::MatrixXd::Zero(d, d);
      break;
    case FusionStrategy::Gated:
      p.w1 = Eigen::MatrixXd::Zero(2 * d, d);
      p.b1 = Eigen::MatrixXd::Zero(d, 1);
      p.w2 = Eigen::MatrixXd::Zero(d, 2);
      p.b2 = Eigen::MatrixXd::Zero(2, 1);
      break;
  }
}

void check_inputs(const FusionModel& m, const Eigen::MatrixXd& patches, const Eigen::MatrixXd& tokens) {
  if (patches.rows() == 0 || tokens.rows() == 0) {
    throw Error(ErrorCode::EmptyTokenSequence, "fusion needs at least one image row and one token");
  }
  if (patches.cols() != m.dim_image || tokens.cols() != m.dim_text) {
    throw Error(ErrorCode::DimMismatch,
                "inputs of width (" + std::to_string(patches.cols()) + ", " +
                    std::to_string(tokens.cols()) + ") do not match model (" +
                    std::to_string(m.dim_image) + ", " + std::to_string(m.dim_text) + ")");
  }
}

void softmax_rows(Eigen::MatrixXd& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - mx).exp().matrix();
    s.row(r) /= s.row(r).sum();
  }
}

// Everything the backward pass needs from one forward evaluation.
struct Forward {
  Eigen::VectorXd img_mean, txt_mean;  // pooled inputs
  Eigen::VectorXd pi, pt;              // projected pooled inputs
  Eigen::VectorXd z, pre_hidden, hidden;
  GateWeights gate;
  Eigen::MatrixXd Pi, Pt, Q, K, V, A;  // attention path, rows per patch/token
  Eigen::VectorXd y;                   // before normalization
  Eigen::VectorXd out;
};

Forward forward(const FusionModel& m, const Eigen::MatrixXd& patches, const Eigen::MatrixXd& tokens) {
  check_inputs(m, patches, tokens);
  const auto& p = m.params;
  const Eigen::Index d = m.d_shared;
  Forward f;
  if (m.strategy == FusionStrategy::CrossAttention) {
    f.Pi = (patches * p.w_img).rowwise() + p.b_img.col(0).transpose();
    f.Pt = (tokens * p.w_txt).rowwise() + p.b_txt.col(0).transpose();
    f.Q = f.Pt * p.w_q;
    f.K = f.Pi * p.w_k;
    f.V = f.Pi * p.w_v;
    f.A = f.Q * f.K.transpose() / std::sqrt(static_cast<double>(d));
    softmax_rows(f.A);
    f.y = (f.A * f.V).colwise().mean().transpose();
  } else {
    f.img_mean = patches.colwise().mean().transpose();
    f.txt_mean = tokens.colwise().mean().transpose();
    f.pi = p.w_img.transpose() * f.img_mean + p.b_img.col(0);
    f.pt = p.w_txt.transpose() * f.txt_mean + p.b_txt.col(0);
    switch (m.strategy) {
      case FusionStrategy::Concat:
        f.y.resize(2 * d);
        f.y << f.pi, f.pt;
        break;
      case FusionStrategy::WeightedText:
        f.y.resize(2 * d);
        f.y << f.pi, p.gamma(0, 0) * f.pt;
        break;
      case FusionStrategy::Gated: {
        f.z.resize(2 * d);
        f.z << f.pi, f.pt;
        f.pre_hidden = p.w1.transpose() * f.z + p.b1.col(0);
        f.hidden = f.pre_hidden.cwiseMax(0.0);
        const Eigen::VectorXd logits = p.w2.transpose() * f.hidden + p.b2.col(0);
        f.gate = softmax2(logits[0], logits[1]);
        f.y = f.gate.text * f.pt + f.gate.image * f.pi;
        break;
      }
      case FusionStrategy::CrossAttention: break;
    }
  }
  f.out = f.y / f.y.norm();
  return f;
}

}  // namespace

std::vector<NamedTensor> FusionModel::tensors() { return tensors_of<FusionModel, NamedTensor>(*this); }

std::vector<ConstNamedTensor> FusionModel::tensors() const {
  return tensors_of<const FusionModel, ConstNamedTensor>(*this);
}

int FusionModel::output_dim() const {
  switch (strategy) {
    case FusionStrategy::Concat:
    case FusionStrategy::WeightedText: return 2 * d_shared;
    case FusionStrategy::CrossAttention:
    case FusionStrategy::Gated: return d_shared;
  }
  return d_shared;
}

std::size_t FusionModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += static_cast<std::size_t>(t.value->size());
  return n;
}

FusionModel init_fusion(FusionStrategy strategy, int dim_image, int dim_text, int d_shared,
                        std::uint64_t seed) {
  if (dim_image < 1 || dim_text < 1 || d_shared < 1) {
    throw Error(ErrorCode::InvalidConfig, "fusion dimensions must be >= 1");
  }
  FusionModel m{strategy, dim_image, dim_text, d_shared, {}};
  shape_model(m);
  Rng rng(derive_seed(seed, 0xF05E));
  for (auto& t : m.tensors()) {
    auto& w = *t.value;
    if (t.name == "gamma") {
      w(0, 0) = 1.0;
    } else if (t.name.front() == 'w') {
      const double std_dev = 1.0 / std::sqrt(static_cast<double>(w.rows()));
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = std_dev * rng.gaussian();
    }
  }
  return m;
}

FusionModel zeros_like(const FusionModel& model) {
  FusionModel z{model.strategy, model.dim_image, model.dim_text, model.d_shared, {}};
  shape_model(z);
  return z;
}

GateWeights softmax2(double text_logit, double image_logit) {
  const double mx = std::max(text_logit, image_logit);
  const double et = std::exp(text_logit - mx);
  const double ei = std::exp(image_logit - mx);
  const double s = et + ei;
  return GateWeights{et / s, ei / s};
}

Eigen::VectorXd fuse(const FusionModel& model, const Eigen::MatrixXd& patches,
                     const Eigen::MatrixXd& tokens) {
  return forward(model, patches, tokens).out;
}

GateWeights gate_weights(const FusionModel& model, const Eigen::MatrixXd& patches,
                         const Eigen::MatrixXd& tokens) {
  if (model.strategy != FusionStrategy::Gated) {
    throw Error(ErrorCode::StrategyMismatch, "gate weights need a gated model");
  }
  return forward(model, patches, tokens).gate;
}

Eigen::MatrixXd attention_weights(const FusionModel& model, const Eigen::MatrixXd& patches,
                                  const Eigen::MatrixXd& tokens) {
  if (model.strategy != FusionStrategy::CrossAttention) {
    throw Error(ErrorCode::StrategyMismatch, "attention weights need a cross-attention model");
  }
  return forward(model, patches, tokens).A;
}

Eigen::VectorXd fuse_backward_accumulate(const FusionModel& model, const Eigen::MatrixXd& patches,
                                         const Eigen::MatrixXd& tokens,
                                         const Eigen::VectorXd& upstream, FusionModel& acc,
                                         Eigen::MatrixXd* d_patches, Eigen::MatrixXd* d_tokens);

FusionGrads fuse_backward(const FusionModel& model, const Eigen::MatrixXd& patches,
                          const Eigen::MatrixXd& tokens, const Eigen::VectorXd& upstream) {
  FusionGrads g{zeros_like(model), {}, {}};
  fuse_backward_accumulate(model, patches, tokens, upstream, g.params, &g.d_patches, &g.d_tokens);
  return g;
}

Eigen::VectorXd fuse_backward_accumulate(const FusionModel& model, const Eigen::MatrixXd& patches,
                                         const Eigen::MatrixXd& tokens,
                                         const Eigen::VectorXd& upstream, FusionModel& acc) {
  return fuse_backward_accumulate(model, patches, tokens, upstream, acc, nullptr, nullptr);
}

Eigen::VectorXd fuse_backward_accumulate(const FusionModel& model, const Eigen::MatrixXd& patches,
                                         const Eigen::MatrixXd& tokens,
                                         const Eigen::VectorXd& upstream, FusionModel& acc,
                                         Eigen::MatrixXd* d_patches, Eigen::MatrixXd* d_tokens) {
  const Forward f = forward(model, patches, tokens);
  if (upstream.size() != f.out.size()) {
    throw Error(ErrorCode::DimMismatch, "upstream gradient has width " +
                                            std::to_string(upstream.size()) + ", output has " +
                                            std::to_string(f.out.size()));
  }
  const auto& p = model.params;
  auto& g = acc.params;
  const Eigen::Index d = model.d_shared;

  // Through y -> y / |y|.
  const Eigen::VectorXd gy = (upstream - f.out * f.out.dot(upstream)) / f.y.norm();

  if (model.strategy == FusionStrategy::CrossAttention) {
    const double n_tok = static_cast<double>(tokens.rows());
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    const Eigen::MatrixXd gO = (gy.transpose() / n_tok).replicate(tokens.rows(), 1);
    const Eigen::MatrixXd gA = gO * f.V.transpose();
    const Eigen::MatrixXd gV = f.A.transpose() * gO;
    const Eigen::VectorXd row_dot = (gA.array() * f.A.array()).rowwise().sum();
    const Eigen::MatrixXd gS = f.A.array() * (gA.colwise() - row_dot).array();
    const Eigen::MatrixXd gQ = scale * gS * f.K;
    const Eigen::MatrixXd gK = scale * gS.transpose() * f.Q;
    g.w_q += f.Pt.transpose() * gQ;
    g.w_k += f.Pi.transpose() * gK;
    g.w_v += f.Pi.transpose() * gV;
    const Eigen::MatrixXd gPt = gQ * p.w_q.transpose();
    const Eigen::MatrixXd gPi = gK * p.w_k.transpose() + gV * p.w_v.transpose();
    g.w_txt += tokens.transpose() * gPt;
    g.b_txt += gPt.colwise().sum().transpose();
    g.w_img += patches.transpose() * gPi;
    g.b_img += gPi.colwise().sum().transpose();
    if (d_tokens) *d_tokens = gPt * p.w_txt.transpose();
    if (d_patches) *d_patches = gPi * p.w_img.transpose();
    return f.out;
  }

  Eigen::VectorXd g_pi, g_pt;
  switch (model.strategy) {
    case FusionStrategy::Concat:
      g_pi = gy.head(d);
      g_pt = gy.tail(d);
      break;
    case FusionStrategy::WeightedText:
      g_pi = gy.head(d);
      g_pt = p.gamma(0, 0) * gy.tail(d);
      g.gamma(0, 0) += gy.tail(d).dot(f.pt);
      break;
    case FusionStrategy::Gated: {
      g_pt = f.gate.text * gy;
      g_pi = f.gate.image * gy;
      const double g_wt = gy.dot(f.pt);
      const double g_wi = gy.dot(f.pi);
      const double mix = f.gate.text * g_wt + f.gate.image * g_wi;
      Eigen::VectorXd g_logits(2);
      g_logits << f.gate.text * (g_wt - mix), f.gate.image * (g_wi - mix);
      g.w2 += f.hidden * g_logits.transpose();
      g.b2.col(0) += g_logits;
      const Eigen::VectorXd g_hidden = p.w2 * g_logits;
      const Eigen::VectorXd g_pre =
          (f.pre_hidden.array() > 0.0).select(g_hidden, Eigen::VectorXd::Zero(d));
      g.w1 += f.z * g_pre.transpose();
      g.b1.col(0) += g_pre;
      const Eigen::VectorXd g_z = p.w1 * g_pre;
      g_pi += g_z.head(d);
      g_pt += g_z.tail(d);
      break;
    }
    case FusionStrategy::CrossAttention: break;
  }
  g.w_img += f.img_mean * g_pi.transpose();
  g.b_img.col(0) += g_pi;
  g.w_txt += f.txt_mean * g_pt.transpose();
  g.b_txt.col(0) += g_pt;
  if (d_patches) {
    const Eigen::RowVectorXd row = (p.w_img * g_pi).transpose() / static_cast<double>(patches.rows());
    *d_patches = row.replicate(patches.rows(), 1);
  }
  if (d_tokens) {
    const Eigen::RowVectorXd row = (p.w_txt * g_pt).transpose() / static_cast<double>(tokens.rows());
    *d_tokens = row.replicate(tokens.rows(), 1);
  }
  return f.out;
}

Eigen::MatrixXd as_rows(const EmbeddingRecord& r) {
  const auto n = static_cast<Eigen::Index>(r.token_count());
  Eigen::MatrixXd m(n, r.dim);
  for (Eigen::Index t = 0; t < n; ++t) {
    auto row = r.token(static_cast<std::size_t>(t));
    for (Eigen::Index k = 0; k < r.dim; ++k) m(t, k) = row[static_cast<std::size_t>(k)];
  }
  return m;
}

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix) {
  auto p = prefix;
  p += suffix;
  return p;
}

}  // namespace

void save_checkpoint(const FusionModel& model, const std::filesystem::path& prefix) {
  std::vector<std::uint8_t> payload;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  for (const auto& t : model.tensors()) {
    const auto& w = *t.value;
    tensors.push_back({{"name", t.name}, {"rows", w.rows()}, {"cols", w.cols()}, {"offset", payload.size()}});
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        const auto bits = std::bit_cast<std::uint64_t>(w(r, c));
        for (int b = 0; b < 8; ++b) payload.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
      }
    }
  }
  const auto bin = with_suffix(prefix, ".bin");
  nlohmann::ordered_json j;
  j["format"] = "pawprint-fusion-checkpoint";
  j["version"] = 1;
  j["strategy"] = to_string(model.strategy);
  j["dim_image"] = model.dim_image;
  j["dim_text"] = model.dim_text;
  j["d_shared"] = model.d_shared;
  j["dtype"] = "f64le";
  j["payload_bytes"] = payload.size();
  j["payload_sha256"] = sha256_hex(payload);
  j["tensors"] = tensors;
  write_file_bytes(bin, payload);
  write_file_text(with_suffix(prefix, ".json"), j.dump(2) + "\n");
}

FusionModel load_checkpoint(const std::filesystem::path& prefix) {
  const auto text_bytes = read_file_bytes(with_suffix(prefix, ".json"));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text_bytes.begin(), text_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed checkpoint: ") + e.what());
  }
  try {
    FusionModel m{fusion_strategy_from_string(j.at("strategy").get<std::string>()),
                  j.at("dim_image").get<int>(), j.at("dim_text").get<int>(),
                  j.at("d_shared").get<int>(), {}};
    shape_model(m);
    const auto payload = read_file_bytes(with_suffix(prefix, ".bin"));
    auto tensors = m.tensors();
    const auto& listed = j.at("tensors");
    if (listed.size() != tensors.size()) {
      throw Error(ErrorCode::ShapeMismatch, "checkpoint tensor list does not match strategy");
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      auto& w = *tensors[i].value;
      const auto& meta = listed[i];
      if (meta.at("name").get<std::string>() != tensors[i].name ||
          meta.at("rows").get<Eigen::Index>() != w.rows() || meta.at("cols").get<Eigen::Index>() != w.cols()) {
        throw Error(ErrorCode::ShapeMismatch, "checkpoint tensor " + std::string(tensors[i].name) +
                                                  " has an unexpected name or shape");
      }
      std::size_t off = meta.at("offset").get<std::size_t>();
      if (off + static_cast<std::size_t>(w.size()) * 8 > payload.size()) {
        throw Error(ErrorCode::TruncatedFile, "checkpoint payload too short");
      }
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
          std::uint64_t bits = 0;
          for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(payload[off + b]) << (8 * b);
          w(r, c) = std::bit_cast<double>(bits);
          off += 8;
        }
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace pawprint
