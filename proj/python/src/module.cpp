#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pawprint/evalproto.hpp"
#include "pawprint/fusion.hpp"
#include "pawprint/losses.hpp"
#include "pawprint/sampler.hpp"
#include "pawprint/stats.hpp"
#include "pawprint/store.hpp"
#include "pawprint/synth.hpp"
#include "pawprint/trainer.hpp"

namespace py = pybind11;
using namespace pawprint;

namespace {

Modality modality_from_name(const std::string& name) {
  if (name == "image") return Modality::Image;
  if (name == "text_token_seq") return Modality::TextTokenSeq;
  if (name == "fused") return Modality::Fused;
  throw Error(ErrorCode::UnknownModality, "unknown modality '" + name + "'");
}

// Records expose their payload as a (tokens, dim) float32 array.
py::array_t<float> values_of(const EmbeddingRecord& r) {
  const auto rows = static_cast<py::ssize_t>(r.token_count());
  const auto cols = static_cast<py::ssize_t>(r.dim);
  py::array_t<float> out({rows, cols});
  std::copy(r.values.begin(), r.values.end(), out.mutable_data());
  return out;
}

EmbeddingRecord make_record(std::string identity_id, std::string image_id,
                            py::array_t<float, py::array::c_style | py::array::forcecast> values,
                            const std::string& modality) {
  EmbeddingRecord r;
  r.identity_id = std::move(identity_id);
  r.image_id = std::move(image_id);
  r.modality = modality_from_name(modality);
  if (values.ndim() == 1) {
    r.dim = static_cast<std::uint32_t>(values.shape(0));
  } else if (values.ndim() == 2) {
    r.dim = static_cast<std::uint32_t>(values.shape(1));
  } else {
    throw Error(ErrorCode::DimMismatch, "values must be 1-D or 2-D");
  }
  r.values.assign(values.data(), values.data() + values.size());
  validate_record(r);
  return r;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["roc_auc"] = r.roc_auc;
  d["eer"] = r.eer;
  d["eer_threshold"] = r.eer_threshold;
  d["top_k"] = r.top_k;
  d["n_pos"] = r.n_pos;
  d["n_neg"] = r.n_neg;
  d["n_queries"] = r.n_queries;
  d["n_skipped"] = r.n_skipped;
  d["seed"] = r.seed;
  d["config_digest"] = r.config_digest;
  return d;
}

py::dict loss_dict(const BatchLossBreakdown& b) {
  py::dict d;
  d["triplet"] = b.l_triplet;
  d["var_pos"] = b.l_var_pos;
  d["var_neg"] = b.l_var_neg;
  d["total"] = b.l_total;
  d["n_triplets"] = b.n_triplets;
  d["n_pos_pairs"] = b.n_pos_pairs;
  d["n_neg_pairs"] = b.n_neg_pairs;
  return d;
}

LossConfig loss_config(double margin, double eps, double lambda_triplet, double lambda_variance) {
  LossConfig c;
  c.margin = margin;
  c.eps_pos = eps;
  c.eps_neg = eps;
  c.lambda_triplet = lambda_triplet;
  c.lambda_variance = lambda_variance;
  return c;
}

}  // namespace

PYBIND11_MODULE(_pawprint, m) {
  m.doc() = "Pet re-identification embedding toolkit";
  m.attr("__version__") = std::string(kVersion);

  static py::exception<Error> error_type(m, "PawprintError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const auto args = py::make_tuple(std::string(to_string(e.code())), e.what());
      PyErr_SetObject(error_type.ptr(), args.ptr());
    }
  });

  py::class_<EmbeddingRecord>(m, "Record")
      .def(py::init(&make_record), py::arg("identity_id"), py::arg("image_id"), py::arg("values"),
           py::arg("modality") = "image")
      .def_readonly("identity_id", &EmbeddingRecord::identity_id)
      .def_readonly("image_id", &EmbeddingRecord::image_id)
      .def_readonly("dim", &EmbeddingRecord::dim)
      .def_property_readonly("modality", [](const EmbeddingRecord& r) { return std::string(to_string(r.modality)); })
      .def_property_readonly("values", &values_of)
      .def("__repr__", [](const EmbeddingRecord& r) {
        return "Record(" + r.identity_id + ", " + r.image_id + ", " + std::string(to_string(r.modality)) +
               ", tokens=" + std::to_string(r.token_count()) + ", dim=" + std::to_string(r.dim) + ")";
      });

  m.def(
      "gen_population",
      [](std::uint64_t seed, int n_identities, int images_per_identity, int dim_image, int dim_text, double sigma,
         double rho, int tokens_per_text) {
        SynthConfig c{seed, n_identities, images_per_identity, dim_image, dim_text, sigma, rho, tokens_per_text};
        auto pop = gen_population(c);
        return py::make_tuple(pop.images, pop.texts);
      },
      py::arg("seed") = 0, py::arg("n_identities") = 20, py::arg("images_per_identity") = 4,
      py::arg("dim_image") = 64, py::arg("dim_text") = 32, py::arg("sigma") = 0.05, py::arg("rho") = 0.9,
      py::arg("tokens_per_text") = 4, "Synthetic (images, texts) record lists.");

  m.def(
      "write_store",
      [](const std::vector<EmbeddingRecord>& records, const std::filesystem::path& path) {
        return write_store(records, path);
      },
      py::arg("records"), py::arg("path"));
  m.def(
      "read_store",
      [](const std::filesystem::path& path, unsigned workers, std::size_t chunk) {
        return read_store(path, LoadOptions{workers, chunk});
      },
      py::arg("path"), py::arg("workers") = 1, py::arg("chunk") = 128);
  m.def("encode_store", [](const std::vector<EmbeddingRecord>& records) {
    const auto b = encode_store(records);
    return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
  });
  m.def("decode_store", [](py::bytes data) {
    const std::string s = data;
    return decode_store(std::vector<std::uint8_t>(s.begin(), s.end()));
  });

  m.def(
      "triplet_loss",
      [](const std::vector<double>& a, const std::vector<double>& p, const std::vector<double>& n, double margin) {
        return triplet_loss(a, p, n, margin);
      },
      py::arg("anchor"), py::arg("positive"), py::arg("negative"),
        py::arg("margin") = 0.45);
  m.def(
      "variance_loss",
      [](const std::vector<double>& pos, const std::vector<double>& neg, double eps) {
        const auto v = variance_loss(pos, neg, eps, eps);
        return py::make_tuple(v.pos, v.neg);
      },
      py::arg("pos_similarities"), py::arg("neg_similarities"), py::arg("eps") = 0.01);
  m.def(
      "batch_loss",
      [](const Eigen::MatrixXd& emb, const std::vector<int>& labels, double margin, double eps, double l1, double l2) {
        return loss_dict(batch_loss(emb, labels, loss_config(margin, eps, l1, l2)));
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("margin") = 0.45, py::arg("eps") = 0.01,
      py::arg("lambda_triplet") = 1.0, py::arg("lambda_variance") = 0.5);
  m.def(
      "batch_loss_grad",
      [](const Eigen::MatrixXd& emb, const std::vector<int>& labels, double margin, double eps, double l1, double l2) {
        return batch_loss_grad(emb, labels, loss_config(margin, eps, l1, l2));
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("margin") = 0.45, py::arg("eps") = 0.01,
      py::arg("lambda_triplet") = 1.0, py::arg("lambda_variance") = 0.5);

  m.def(
      "plan_epoch",
      [](const Population& pop, int n, std::uint64_t seed, std::uint64_t epoch) {
        py::list batches;
        for (const auto& plan : plan_epoch(pop, n, seed, epoch)) {
          py::list entries;
          for (const auto& e : plan.entries) entries.append(py::make_tuple(e.identity_id, e.image_ids[0], e.image_ids[1]));
          batches.append(entries);
        }
        return batches;
      },
      py::arg("population"), py::arg("identities_per_batch"), py::arg("seed") = 0, py::arg("epoch") = 0);

  m.def(
      "generate_pairs",
      [](const std::vector<EmbeddingRecord>& store, int usage_cap, int identity_cap, std::uint64_t seed) {
        const auto set = generate_pairs(store, PairConfig{usage_cap, identity_cap, seed});
        return py::make_tuple(set.positives, set.negatives);
      },
      py::arg("records"), py::arg("usage_cap") = 5, py::arg("identity_cap") = 15, py::arg("seed") = 0);
  m.def(
      "roc_auc",
      [](const std::vector<double>& same, const std::vector<double>& diff) { return roc_auc(same, diff); },
      py::arg("same_scores"), py::arg("different_scores"));
  m.def(
      "eer",
      [](const std::vector<double>& same, const std::vector<double>& diff) {
        const auto e = eer(same, diff);
        return py::make_tuple(e.eer, e.threshold);
      },
      py::arg("same_scores"), py::arg("different_scores"));
  m.def(
      "top_k",
      [](const std::vector<EmbeddingRecord>& store, const std::vector<int>& ks) { return top_k(store, ks).accuracy; },
      py::arg("records"), py::arg("ks") = std::vector<int>{1, 5, 10});
  m.def(
      "evaluate",
      [](const std::vector<EmbeddingRecord>& store, std::uint64_t seed, int usage_cap, int identity_cap,
         const std::vector<int>& ks) { return report_dict(evaluate(store, PairConfig{usage_cap, identity_cap, seed}, ks)); },
      py::arg("records"), py::arg("seed") = 0, py::arg("usage_cap") = 5, py::arg("identity_cap") = 15,
      py::arg("ks") = std::vector<int>{1, 5, 10});

  m.def(
      "mcnemar",
      [](std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
        const auto r = mcnemar({a, b, c, d});
        return py::make_tuple(r.chi2, r.p, std::string(to_string(r.direction)));
      },
      py::arg("a"), py::arg("b"), py::arg("c"), py::arg("d"),
      "McNemar test on a 2x2 table; returns (chi2, p, direction).");

  py::class_<FusionModel>(m, "FusionModel")
      .def(py::init([](const std::string& strategy, int dim_image, int dim_text, int d_shared, std::uint64_t seed) {
             return init_fusion(fusion_strategy_from_string(strategy), dim_image, dim_text, d_shared, seed);
           }),
           py::arg("strategy"), py::arg("dim_image"), py::arg("dim_text"), py::arg("d_shared") = 256,
           py::arg("seed") = 0)
      .def_property_readonly("strategy", [](const FusionModel& f) { return std::string(to_string(f.strategy)); })
      .def_readonly("dim_image", &FusionModel::dim_image)
      .def_readonly("dim_text", &FusionModel::dim_text)
      .def_readonly("d_shared", &FusionModel::d_shared)
      .def_property_readonly("output_dim", &FusionModel::output_dim)
      .def("parameters",
           [](const FusionModel& f) {
             py::dict d;
             for (const auto& t : f.tensors()) d[py::str(std::string(t.name))] = *t.value;
             return d;
           })
      .def("fuse", &fuse, py::arg("patches"), py::arg("tokens"))
      .def(
          "gate_weights",
          [](const FusionModel& f, const Eigen::MatrixXd& patches, const Eigen::MatrixXd& tokens) {
            const auto w = gate_weights(f, patches, tokens);
            return py::make_tuple(w.text, w.image);
          },
          py::arg("patches"), py::arg("tokens"))
      .def("save", &save_checkpoint, py::arg("prefix"))
      .def_static("load", &load_checkpoint, py::arg("prefix"));

  m.def(
      "train",
      [](std::optional<FusionModel> model, const std::vector<EmbeddingRecord>& images,
         const std::vector<EmbeddingRecord>& texts, double lr, int epochs, int identities_per_batch,
         std::uint64_t seed) {
        TrainConfig cfg;
        cfg.adam.learning_rate = lr;
        cfg.epochs = epochs;
        cfg.identities_per_batch = identities_per_batch;
        cfg.seed = seed;
        auto r = train(std::move(model), images, texts, cfg);
        return py::make_tuple(r.model, r.loss_history);
      },
      py::arg("model"), py::arg("images"), py::arg("texts"), py::arg("lr") = 1e-4, py::arg("epochs") = 10,
      py::arg("identities_per_batch") = 58, py::arg("seed") = 0, "Returns (model, loss_history).");
  m.def(
      "embed",
      [](const std::optional<FusionModel>& model, const std::vector<EmbeddingRecord>& images,
         const std::vector<EmbeddingRecord>& texts) { return embed_store(model, images, texts); },
      py::arg("model"), py::arg("images"), py::arg("texts"));
}
