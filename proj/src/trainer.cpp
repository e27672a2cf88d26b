#include "pawprint/trainer.hpp"

#include <cmath>
#include <map>
#include <unordered_map>

#include "pawprint/losses.hpp"
#include "pawprint/sampler.hpp"

namespace pawprint {

void TrainConfig::validate() const {
  if (!(adam.learning_rate >= 0.0) || !std::isfinite(adam.learning_rate)) {
    throw Error(ErrorCode::InvalidConfig, "learning rate must be finite and >= 0");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "Adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw Error(ErrorCode::InvalidConfig, "Adam epsilon must be > 0");
  if (epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 1");
  if (identities_per_batch < 2) {
    throw Error(ErrorCode::InvalidConfig, "a batch needs at least two identities");
  }
  loss.validate();
}

void adam_step(std::span<Eigen::MatrixXd* const> params, std::span<const Eigen::MatrixXd* const> grads,
               AdamState& state, const AdamHyper& hyper) {
  if (params.size() != grads.size()) {
    throw Error(ErrorCode::ShapeMismatch, "parameter and gradient counts differ");
  }
  if (state.m.empty() && state.v.empty() && state.t == 0) {
    for (const auto* p : params) {
      state.m.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      state.v.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto r = params[i]->rows(), c = params[i]->cols();
    if (grads[i]->rows() != r || grads[i]->cols() != c || state.m[i].rows() != r ||
        state.m[i].cols() != c || state.v[i].rows() != r || state.v[i].cols() != c) {
      throw Error(ErrorCode::ShapeMismatch, "tensor " + std::to_string(i) + " shape mismatch");
    }
  }

  ++state.t;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = *grads[i];
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * g.cwiseProduct(g);
    auto& p = *params[i];
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const double m_hat = m.data()[k] / bc1;
      const double v_hat = v.data()[k] / bc2;
      p.data()[k] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
  }
}

void adam_step(FusionModel& model, const FusionModel& grads, AdamState& state, const AdamHyper& hyper) {
  if (model.strategy != grads.strategy) {
    throw Error(ErrorCode::ShapeMismatch, "gradient strategy differs from model strategy");
  }
  std::vector<Eigen::MatrixXd*> p;
  std::vector<const Eigen::MatrixXd*> g;
  for (auto& t : model.tensors()) p.push_back(t.value);
  for (const auto& t : grads.tensors()) g.push_back(t.value);
  adam_step(std::span<Eigen::MatrixXd* const>(p), std::span<const Eigen::MatrixXd* const>(g), state, hyper);
}

namespace {

std::unordered_map<std::string_view, std::size_t> index_by_image(std::span<const EmbeddingRecord> records) {
  std::unordered_map<std::string_view, std::size_t> idx;
  idx.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) idx.emplace(records[i].image_id, i);
  return idx;
}

const EmbeddingRecord& text_for(const std::unordered_map<std::string_view, std::size_t>& idx,
                                std::span<const EmbeddingRecord> texts, const std::string& image_id) {
  auto it = idx.find(image_id);
  if (it == idx.end()) {
    throw Error(ErrorCode::InvalidArgument, "no text record for image '" + image_id + "'");
  }
  return texts[it->second];
}

Eigen::RowVectorXd normalized_row(const EmbeddingRecord& r) {
  const auto pooled = r.pooled();
  Eigen::RowVectorXd v(static_cast<Eigen::Index>(pooled.size()));
  for (std::size_t k = 0; k < pooled.size(); ++k) v[static_cast<Eigen::Index>(k)] = pooled[k];
  return v / v.norm();
}

}  // namespace

TrainResult train(std::optional<FusionModel> model, std::span<const EmbeddingRecord> images,
                  std::span<const EmbeddingRecord> texts, const TrainConfig& cfg) {
  cfg.validate();
  validate_records(images);
  if (model) {
    validate_records(texts);
    for (const auto& r : images) {
      if (static_cast<int>(r.dim) != model->dim_image) {
        throw Error(ErrorCode::DimMismatch, "image store dim does not match the model");
      }
    }
    for (const auto& r : texts) {
      if (static_cast<int>(r.dim) != model->dim_text) {
        throw Error(ErrorCode::DimMismatch, "text store dim does not match the model");
      }
    }
  }
  const auto image_idx = index_by_image(images);
  const auto text_idx = index_by_image(texts);
  const Population population = population_of(images);

  TrainResult result;
  AdamState adam;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto plans = plan_epoch(population, cfg.identities_per_batch, cfg.seed,
                                  static_cast<std::uint64_t>(epoch));
    double epoch_loss = 0.0;
    for (const auto& plan : plans) {
      std::vector<const EmbeddingRecord*> rows;
      std::vector<int> labels;
      for (std::size_t e = 0; e < plan.entries.size(); ++e) {
        for (const auto& id : plan.entries[e].image_ids) {
          rows.push_back(&images[image_idx.at(id)]);
          labels.push_back(static_cast<int>(e));
        }
      }
      const auto n = static_cast<Eigen::Index>(rows.size());

      if (!model) {
        Eigen::MatrixXd emb(n, images.front().dim);
        for (Eigen::Index r = 0; r < n; ++r) emb.row(r) = normalized_row(*rows[static_cast<std::size_t>(r)]);
        epoch_loss += batch_loss(emb, labels, cfg.loss).l_total;
        continue;
      }

      std::vector<Eigen::MatrixXd> patches(rows.size()), tokens(rows.size());
      Eigen::MatrixXd emb(n, model->output_dim());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        patches[r] = as_rows(*rows[r]);
        tokens[r] = as_rows(text_for(text_idx, texts, rows[r]->image_id));
        emb.row(static_cast<Eigen::Index>(r)) = fuse(*model, patches[r], tokens[r]).transpose();
      }
      const auto lg = batch_loss_with_grad(emb, labels, cfg.loss);
      epoch_loss += lg.loss.l_total;

      FusionModel grads = zeros_like(*model);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const Eigen::VectorXd up = lg.grad.row(static_cast<Eigen::Index>(r)).transpose();
        fuse_backward_accumulate(*model, patches[r], tokens[r], up, grads);
      }
      adam_step(*model, grads, adam, cfg.adam);
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(plans.size()));
  }
  result.model = std::move(model);
  return result;
}

std::vector<EmbeddingRecord> embed_store(const std::optional<FusionModel>& model,
                                         std::span<const EmbeddingRecord> images,
                                         std::span<const EmbeddingRecord> texts) {
  std::vector<EmbeddingRecord> out;
  out.reserve(images.size());
  const auto text_idx = index_by_image(texts);
  for (const auto& img : images) {
    EmbeddingRecord r{img.identity_id, img.image_id, Modality::Image, 0, {}};
    Eigen::VectorXd v;
    if (model) {
      r.modality = Modality::Fused;
      v = fuse(*model, as_rows(img), as_rows(text_for(text_idx, texts, img.image_id)));
    } else {
      v = normalized_row(img).transpose();
    }
    r.dim = static_cast<std::uint32_t>(v.size());
    r.values.resize(static_cast<std::size_t>(v.size()));
    for (Eigen::Index k = 0; k < v.size(); ++k) r.values[static_cast<std::size_t>(k)] = static_cast<float>(v[k]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace pawprint
