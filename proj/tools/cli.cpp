#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>

#include "pawprint/evalproto.hpp"
#include "pawprint/fusion.hpp"
#include "pawprint/random.hpp"
#include "pawprint/stats.hpp"
#include "pawprint/store.hpp"
#include "pawprint/synth.hpp"
#include "pawprint/trainer.hpp"

namespace pawprint::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

fs::path suffixed(const fs::path& prefix, std::string_view suffix) {
  fs::path p = prefix;
  p += std::string(suffix);
  return p;
}

// Inputs are digested from the exact bytes that get decoded; outputs are
// digested after they land on disk.
class Run {
 public:
  Run(std::string command, const std::vector<std::string>& argv) : command_(std::move(command)), argv_(argv) {}

  ojson flags = ojson::object();
  std::uint64_t seed = 0;

  std::vector<std::uint8_t> read_input(const fs::path& path) {
    auto bytes = read_file_bytes(path);
    inputs_.push_back({path.string(), sha256_hex(bytes)});
    return bytes;
  }

  std::vector<EmbeddingRecord> read_store_input(const fs::path& path, const LoadOptions& opts) {
    return decode_store(read_input(path), opts);
  }

  std::string read_text_input(const fs::path& path) {
    const auto bytes = read_input(path);
    return std::string(bytes.begin(), bytes.end());
  }

  void wrote(const fs::path& path) { outputs_.push_back(path); }

  void write_manifest(const fs::path& path) const {
    ojson m;
    m["tool"] = "pawprint";
    m["version"] = std::string(kVersion);
    m["command"] = command_;
    m["argv"] = argv_;
    m["flags"] = flags;
    m["seed"] = seed;
    ojson in = ojson::array();
    for (const auto& [p, digest] : inputs_) in.push_back({{"path", p}, {"sha256", digest}});
    m["inputs"] = in;
    ojson outs = ojson::array();
    for (const auto& p : outputs_) outs.push_back({{"path", p.string()}, {"sha256", sha256_hex(read_file_bytes(p))}});
    m["outputs"] = outs;
    write_file_text(path, m.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<fs::path> outputs_;
};

struct SynthArgs {
  SynthConfig cfg;
  std::string out;
};

struct TrainArgs {
  std::string images, texts, strategy = "gated", out;
  double lr = 1e-4;
  int epochs = 10;
  int batch_identities = 58;
  std::uint64_t seed = 0;
  int d_shared = 256;
  bool save_init = false;
  std::string embed_images, embed_texts, embed_out;
};

struct EvalArgs {
  std::string store, out, per_query;
  std::uint64_t pairs_seed = 0;
  int usage_cap = 5;
  int identity_cap = 15;
  std::vector<int> ks{1, 5, 10};
  int workers = 8;
  int chunk = 128;
};

struct McNemarArgs {
  std::string a, b, out;
};

struct ReportArgs {
  std::vector<std::string> files;
  std::string out;
};

int cmd_synth(const SynthArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  Run run("synth", argv);
  const auto& c = a.cfg;
  run.seed = c.seed;
  run.flags = {{"seed", c.seed},          {"identities", c.n_identities}, {"images", c.images_per_identity},
               {"dim-image", c.dim_image}, {"dim-text", c.dim_text},      {"sigma", c.sigma},
               {"rho", c.rho},             {"tokens", c.tokens_per_text}, {"out", a.out}};
  const auto pop = gen_population(c);
  const auto img_bytes = encode_store(pop.images);
  const auto txt_bytes = encode_store(pop.texts);

  const fs::path prefix = a.out;
  const auto img_path = suffixed(prefix, ".images.pvem");
  const auto txt_path = suffixed(prefix, ".texts.pvem");
  const auto cfg_path = suffixed(prefix, ".synth.json");
  write_file_bytes(img_path, img_bytes);
  write_file_bytes(txt_path, txt_bytes);
  write_file_text(cfg_path, synth_config_to_json(c));
  for (const auto& p : {img_path, txt_path, cfg_path}) run.wrote(p);
  run.write_manifest(suffixed(prefix, ".manifest.json"));
  out << "wrote " << pop.images.size() << " image and " << pop.texts.size() << " text records to "
      << img_path.string() << ", " << txt_path.string() << "\n";
  return 0;
}

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  Run run("train", argv);
  run.seed = a.seed;
  run.flags = {{"images", a.images},
               {"texts", a.texts},
               {"strategy", a.strategy},
               {"lr", a.lr},
               {"epochs", a.epochs},
               {"batch-identities", a.batch_identities},
               {"seed", a.seed},
               {"d-shared", a.d_shared},
               {"save-init", a.save_init},
               {"embed-images", a.embed_images},
               {"embed-texts", a.embed_texts},
               {"embed-out", a.embed_out},
               {"out", a.out}};

  const bool fused = a.strategy != "none";
  TrainConfig cfg;
  cfg.adam.learning_rate = a.lr;
  cfg.epochs = a.epochs;
  cfg.identities_per_batch = a.batch_identities;
  cfg.seed = a.seed;
  cfg.validate();

  const auto images = run.read_store_input(a.images, LoadOptions{});
  std::vector<EmbeddingRecord> texts;
  if (fused) texts = run.read_store_input(a.texts, LoadOptions{});

  std::optional<FusionModel> init;
  if (fused) {
    if (images.empty() || texts.empty()) throw Error(ErrorCode::TooFewImages, "training stores are empty");
    init = init_fusion(fusion_strategy_from_string(a.strategy), static_cast<int>(images.front().dim),
                       static_cast<int>(texts.front().dim), a.d_shared, derive_seed(a.seed, 0x1417));
  }
  const auto result = train(init, images, texts, cfg);

  std::optional<std::vector<std::uint8_t>> embedded;
  if (!a.embed_out.empty()) {
    std::vector<EmbeddingRecord> e_images = images, e_texts = texts;
    if (!a.embed_images.empty()) e_images = run.read_store_input(a.embed_images, LoadOptions{});
    if (fused && !a.embed_texts.empty()) e_texts = run.read_store_input(a.embed_texts, LoadOptions{});
    embedded = encode_store(embed_store(result.model, e_images, e_texts));
  }

  ojson history;
  history["strategy"] = a.strategy;
  history["epochs"] = a.epochs;
  history["loss_history"] = result.loss_history;

  const fs::path prefix = a.out;
  if (result.model) {
    const auto ckpt = suffixed(prefix, ".ckpt");
    save_checkpoint(*result.model, ckpt);
    run.wrote(suffixed(ckpt, ".json"));
    run.wrote(suffixed(ckpt, ".bin"));
    if (a.save_init) {
      const auto ip = suffixed(prefix, ".init");
      save_checkpoint(*init, ip);
      run.wrote(suffixed(ip, ".json"));
      run.wrote(suffixed(ip, ".bin"));
    }
  }
  const auto hist_path = suffixed(prefix, ".history.json");
  write_file_text(hist_path, history.dump(2) + "\n");
  run.wrote(hist_path);
  if (embedded) {
    write_file_bytes(a.embed_out, *embedded);
    run.wrote(a.embed_out);
  }
  run.write_manifest(suffixed(prefix, ".manifest.json"));

  out << "epoch  mean_loss\n";
  for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
    char line[64];
    std::snprintf(line, sizeof line, "%5zu  %.6f\n", i + 1, result.loss_history[i]);
    out << line;
  }
  return 0;
}

ojson per_query_json(const TopKResult& r, const std::string& digest, const std::string& store_digest) {
  ojson q = ojson::array();
  for (const auto& p : r.per_query) {
    q.push_back({{"image_id", p.image_id},
                 {"identity_id", p.identity_id},
                 {"rank", p.first_hit_rank},
                 {"correct", p.first_hit_rank == 0}});
  }
  ojson j;
  j["criterion"] = "top1";
  j["config_digest"] = digest;
  j["store_sha256"] = store_digest;
  j["queries"] = q;
  return j;
}

PairConfig pair_config(std::uint64_t seed, int usage_cap, int identity_cap) {
  PairConfig cfg;
  cfg.seed = seed;
  cfg.usage_cap = usage_cap;
  cfg.per_identity_cap = identity_cap;
  return cfg;
}

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  Run run("eval", argv);
  run.seed = a.pairs_seed;
  run.flags = {{"store", a.store},       {"pairs-seed", a.pairs_seed}, {"usage-cap", a.usage_cap},
               {"identity-cap", a.identity_cap}, {"k", a.ks},        {"workers", a.workers},
               {"chunk", a.chunk},       {"emit-per-query", a.per_query}, {"out", a.out}};
  const auto bytes = run.read_input(a.store);
  const auto store = decode_store(bytes, LoadOptions{static_cast<unsigned>(a.workers),
                                                     static_cast<std::size_t>(a.chunk)});
  const auto cfg = pair_config(a.pairs_seed, a.usage_cap, a.identity_cap);
  TopKResult retrieval;
  const auto report = evaluate(store, cfg, a.ks, &retrieval, nullptr);

  write_report(report, a.out);
  run.wrote(a.out);
  if (!a.per_query.empty()) {
    write_file_text(a.per_query, per_query_json(retrieval, report.config_digest, sha256_hex(bytes)).dump(2) + "\n");
    run.wrote(a.per_query);
  }
  run.write_manifest(suffixed(a.out, ".manifest.json"));

  char line[160];
  std::snprintf(line, sizeof line, "roc_auc %.6f  eer %.6f  pairs %llu/%llu  queries %llu\n", report.roc_auc,
                report.eer, static_cast<unsigned long long>(report.n_pos),
                static_cast<unsigned long long>(report.n_neg), static_cast<unsigned long long>(report.n_queries));
  out << line;
  for (const auto& [k, acc] : report.top_k) {
    std::snprintf(line, sizeof line, "top_%d %.6f\n", k, acc);
    out << line;
  }
  return 0;
}

int cmd_pairs(const EvalArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  Run run("pairs", argv);
  run.seed = a.pairs_seed;
  run.flags = {{"store", a.store},         {"pairs-seed", a.pairs_seed}, {"usage-cap", a.usage_cap},
               {"identity-cap", a.identity_cap}, {"workers", a.workers},  {"chunk", a.chunk},
               {"out", a.out}};
  const auto store = run.read_store_input(a.store, LoadOptions{static_cast<unsigned>(a.workers),
                                                               static_cast<std::size_t>(a.chunk)});
  const auto cfg = pair_config(a.pairs_seed, a.usage_cap, a.identity_cap);
  const auto set = generate_pairs(store, cfg);
  const auto scored = score_pairs(store, set);

  ojson pairs = ojson::array();
  for (const auto& p : scored) {
    pairs.push_back({{"a", p.id_a},
                     {"b", p.id_b},
                     {"label", p.label == PairLabel::Same ? "same" : "different"},
                     {"score", p.score}});
  }
  ojson j;
  j["usage_cap"] = cfg.usage_cap;
  j["per_identity_cap"] = cfg.per_identity_cap;
  j["seed"] = cfg.seed;
  j["n_pos"] = set.positives.size();
  j["n_neg"] = set.negatives.size();
  j["pairs"] = pairs;
  write_file_text(a.out, j.dump(2) + "\n");
  run.wrote(a.out);
  run.write_manifest(suffixed(a.out, ".manifest.json"));
  out << set.positives.size() << " positive and " << set.negatives.size() << " negative pairs\n";
  return 0;
}

std::map<std::string, bool> read_correctness(Run& run, const std::string& path) {
  const auto j = nlohmann::json::parse(run.read_text_input(path));
  std::map<std::string, bool> out;
  for (const auto& q : j.at("queries")) out[q.at("image_id").get<std::string>()] = q.at("correct").get<bool>();
  return out;
}

int cmd_mcnemar(const McNemarArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  Run run("mcnemar", argv);
  run.flags = {{"a", a.a}, {"b", a.b}, {"out", a.out}};
  const auto ra = read_correctness(run, a.a);
  const auto rb = read_correctness(run, a.b);
  std::vector<bool> va, vb;
  for (const auto& [image, ok] : ra) {
    const auto it = rb.find(image);
    if (it == rb.end()) throw Error(ErrorCode::LengthMismatch, "query " + image + " is missing from " + a.b);
    va.push_back(ok);
    vb.push_back(it->second);
  }
  if (ra.size() != rb.size()) throw Error(ErrorCode::LengthMismatch, "the two files hold different query sets");
  const auto table = correctness_vector(va, vb);
  const auto r = mcnemar(table);

  ojson j;
  j["row"] = a.a;
  j["col"] = a.b;
  j["table"] = {{"a", table.a}, {"b", table.b}, {"c", table.c}, {"d", table.d}};
  j["chi2"] = r.chi2;
  j["p"] = r.p;
  j["direction"] = std::string(to_string(r.direction));
  j["arrow"] = std::string(arrow(r.direction));
  write_file_text(a.out, j.dump(2) + "\n");
  run.wrote(a.out);
  run.write_manifest(suffixed(a.out, ".manifest.json"));

  char line[128];
  std::snprintf(line, sizeof line, "chi2 %.6f  p %.6g  %s (%s)\n", r.chi2, r.p, std::string(arrow(r.direction)).c_str(),
                std::string(to_string(r.direction)).c_str());
  out << line;
  return 0;
}

std::string render_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::string s;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %8s %8s %8s %8s %8s %7s %7s %7s\n", "report", "roc_auc", "eer", "top_1",
                "top_5", "top_10", "n_pos", "n_neg", "queries");
  s += line;
  auto cell = [](const MetricReport& r, int k) {
    const auto it = r.top_k.find(k);
    char b[16];
    if (it == r.top_k.end()) return std::string("       -");
    std::snprintf(b, sizeof b, "%8.4f", it->second);
    return std::string(b);
  };
  for (const auto& [name, r] : rows) {
    std::snprintf(line, sizeof line, "%-24s %8.4f %8.4f %s %s %s %7llu %7llu %7llu\n", name.c_str(), r.roc_auc, r.eer,
                  cell(r, 1).c_str(), cell(r, 5).c_str(), cell(r, 10).c_str(),
                  static_cast<unsigned long long>(r.n_pos), static_cast<unsigned long long>(r.n_neg),
                  static_cast<unsigned long long>(r.n_queries));
    s += line;
  }
  return s;
}

int cmd_report(const ReportArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  Run run("report", argv);
  run.flags = {{"files", a.files}, {"out", a.out}};
  std::vector<std::pair<std::string, MetricReport>> rows;
  for (const auto& f : a.files) rows.emplace_back(fs::path(f).stem().string(), report_from_json(run.read_text_input(f)));
  const auto table = render_table(rows);
  write_file_text(a.out, table);
  run.wrote(a.out);
  run.write_manifest(suffixed(a.out, ".manifest.json"));
  out << table;
  return 0;
}

void add_pair_flags(CLI::App* sub, EvalArgs& a) {
  sub->add_option("--store", a.store, "Embedding store (.pvem)")->required()->check(CLI::ExistingFile);
  sub->add_option("--pairs-seed", a.pairs_seed, "Seed for pair generation");
  sub->add_option("--usage-cap", a.usage_cap, "Maximum pairs per image")->check(CLI::PositiveNumber);
  sub->add_option("--identity-cap", a.identity_cap, "Maximum positive pairs per identity")->check(CLI::PositiveNumber);
  sub->add_option("--workers", a.workers, "Store loading threads")->check(CLI::PositiveNumber);
  sub->add_option("--chunk", a.chunk, "Records per loading chunk")->check(CLI::PositiveNumber);
}

void print_error(std::ostream& err, std::string_view code, const std::string& message) {
  err << nlohmann::json{{"error", code}, {"message", message}}.dump() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pet re-identification embedding toolkit", "pawprint"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic image/text population");
  synth->add_option("--seed", sa.cfg.seed);
  synth->add_option("--identities", sa.cfg.n_identities)->check(CLI::PositiveNumber);
  synth->add_option("--images", sa.cfg.images_per_identity, "Images per identity")->check(CLI::Range(2, 1 << 20));
  synth->add_option("--dim-image", sa.cfg.dim_image)->check(CLI::PositiveNumber);
  synth->add_option("--dim-text", sa.cfg.dim_text)->check(CLI::PositiveNumber);
  synth->add_option("--sigma", sa.cfg.sigma, "Noise scale")->check(CLI::NonNegativeNumber);
  synth->add_option("--rho", sa.cfg.rho, "Text informativeness")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--tokens", sa.cfg.tokens_per_text)->check(CLI::PositiveNumber);
  synth->add_option("--out", sa.out, "Output prefix")->required();

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a fusion model with the combined loss");
  trn->add_option("--images", ta.images, "Image store")->required()->check(CLI::ExistingFile);
  trn->add_option("--texts", ta.texts, "Text token store")->check(CLI::ExistingFile);
  trn->add_option("--strategy", ta.strategy)->check(CLI::IsMember({"concat", "weighted", "xattn", "gated", "none"}));
  trn->add_option("--lr", ta.lr)->check(CLI::NonNegativeNumber);
  trn->add_option("--epochs", ta.epochs)->check(CLI::PositiveNumber);
  trn->add_option("--batch-identities", ta.batch_identities)->check(CLI::Range(2, 1 << 20));
  trn->add_option("--seed", ta.seed);
  trn->add_option("--d-shared", ta.d_shared, "Shared embedding width")->check(CLI::PositiveNumber);
  trn->add_flag("--save-init", ta.save_init, "Also write the initial checkpoint");
  trn->add_option("--embed-images", ta.embed_images, "Images to embed (default: training images)")
      ->check(CLI::ExistingFile);
  trn->add_option("--embed-texts", ta.embed_texts, "Texts to embed (default: training texts)")
      ->check(CLI::ExistingFile);
  trn->add_option("--embed-out", ta.embed_out, "Write embeddings of the trained model");
  trn->add_option("--out", ta.out, "Output prefix")->required();

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Verification and retrieval metrics for a store");
  add_pair_flags(ev, ea);
  ev->add_option("--k", ea.ks, "Top-k cut-offs")->delimiter(',')->check(CLI::PositiveNumber);
  ev->add_option("--emit-per-query", ea.per_query, "Write per-query Top-1 correctness JSON");
  ev->add_option("--out", ea.out, "Report JSON")->required();

  EvalArgs pa;
  auto* prs = app.add_subcommand("pairs", "Write the evaluation pair set with scores");
  add_pair_flags(prs, pa);
  prs->add_option("--out", pa.out, "Pairs JSON")->required();

  McNemarArgs ma;
  auto* mc = app.add_subcommand("mcnemar", "Paired test on two per-query correctness files");
  mc->add_option("--a", ma.a, "Row model")->required()->check(CLI::ExistingFile);
  mc->add_option("--b", ma.b, "Column model")->required()->check(CLI::ExistingFile);
  mc->add_option("--out", ma.out, "Result JSON")->required();

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "Tabulate metric reports");
  rep->add_option("files", ra.files, "MetricReport JSON files")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", ra.out, "Table output")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  if (*trn && ta.strategy != "none" && ta.texts.empty()) {
    err << "--texts is required unless --strategy none\n";
    return 2;
  }

  try {
    if (*synth) return cmd_synth(sa, args, out);
    if (*trn) return cmd_train(ta, args, out);
    if (*ev) return cmd_eval(ea, args, out);
    if (*prs) return cmd_pairs(pa, args, out);
    if (*mc) return cmd_mcnemar(ma, args, out);
    if (*rep) return cmd_report(ra, args, out);
  } catch (const Error& e) {
    print_error(err, to_string(e.code()), e.what());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    print_error(err, to_string(ErrorCode::InvalidArgument), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error(err, "Internal", e.what());
    return 1;
  }
  return 2;
}

}  // namespace pawprint::cli
