#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <sstream>

#include "cli.hpp"
#include "pawprint/store.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

struct Sandbox {
  fs::path dir;
  explicit Sandbox(const std::string& name) : dir(fs::temp_directory_path() / ("pawprint_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  std::string operator/(const std::string& f) const { return (dir / f).string(); }
  std::size_t file_count() const {
    return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}));
  }
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = pawprint::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  const auto b = pawprint::read_file_bytes(path);
  return std::string(b.begin(), b.end());
}

Result synth(const Sandbox& box, const std::string& prefix, const std::string& sigma = "0.05") {
  return run({"synth", "--seed", "7", "--identities", "20", "--images", "4", "--dim-image", "64", "--dim-text",
              "32", "--sigma", sigma, "--rho", "0.9", "--out", box / prefix});
}

}  // namespace

TEST_CASE("synth writes two stores, a config sidecar and a manifest") {
  Sandbox box("synth");
  const auto r = synth(box, "pop");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(box / "pop.images.pvem"));
  CHECK(fs::exists(box / "pop.texts.pvem"));
  const auto cfg = nlohmann::json::parse(slurp(box / "pop.synth.json"));
  CHECK(cfg.at("seed") == 7);
  CHECK(cfg.at("sigma") == 0.05);
  const auto m = nlohmann::json::parse(slurp(box / "pop.manifest.json"));
  CHECK(m.at("command") == "synth");
  CHECK(m.at("outputs").size() == 3);
  CHECK(m.at("flags").at("identities") == 20);
  CHECK(pawprint::read_store(box / "pop.images.pvem").size() == 80);
}

TEST_CASE("synth, train and eval are byte-reproducible") {
  Sandbox box("determinism");
  REQUIRE(synth(box, "a").code == 0);
  REQUIRE(synth(box, "b").code == 0);
  CHECK(slurp(box / "a.images.pvem") == slurp(box / "b.images.pvem"));
  CHECK(slurp(box / "a.texts.pvem") == slurp(box / "b.texts.pvem"));

  auto train = [&](const std::string& out) {
    return run({"train", "--images", box / "a.images.pvem", "--texts", box / "a.texts.pvem", "--strategy", "gated",
                "--epochs", "2", "--batch-identities", "5", "--d-shared", "16", "--seed", "3", "--out", box / out,
                "--embed-out", box / (out + ".fused.pvem")});
  };
  REQUIRE(train("t1").code == 0);
  REQUIRE(train("t2").code == 0);
  CHECK(slurp(box / "t1.ckpt.bin") == slurp(box / "t2.ckpt.bin"));
  CHECK(slurp(box / "t1.ckpt.json") == slurp(box / "t2.ckpt.json"));
  CHECK(slurp(box / "t1.history.json") == slurp(box / "t2.history.json"));
  CHECK(slurp(box / "t1.fused.pvem") == slurp(box / "t2.fused.pvem"));

  auto eval = [&](const std::string& out, const std::string& workers) {
    return run({"eval", "--store", box / "t1.fused.pvem", "--pairs-seed", "1", "--workers", workers, "--out",
                box / out});
  };
  REQUIRE(eval("e1.json", "8").code == 0);
  REQUIRE(eval("e2.json", "1").code == 0);
  CHECK(slurp(box / "e1.json") == slurp(box / "e2.json"));
}

TEST_CASE("zero learning rate reproduces the initial checkpoint") {
  Sandbox box("lr0");
  REQUIRE(synth(box, "p").code == 0);
  const auto r = run({"train", "--images", box / "p.images.pvem", "--texts", box / "p.texts.pvem", "--strategy",
                      "gated", "--lr", "0", "--epochs", "2", "--batch-identities", "4", "--d-shared", "8",
                      "--save-init", "--out", box / "m"});
  REQUIRE(r.code == 0);
  CHECK(slurp(box / "m.ckpt.bin") == slurp(box / "m.init.bin"));
  CHECK(slurp(box / "m.ckpt.json") == slurp(box / "m.init.json"));
}

TEST_CASE("image-only baseline needs no text store") {
  Sandbox box("none");
  REQUIRE(synth(box, "p").code == 0);
  const auto r = run({"train", "--images", box / "p.images.pvem", "--strategy", "none", "--epochs", "1",
                      "--batch-identities", "4", "--embed-out", box / "raw.pvem", "--out", box / "b"});
  REQUIRE(r.code == 0);
  CHECK_FALSE(fs::exists(box / "b.ckpt.json"));
  CHECK(pawprint::read_store(box / "raw.pvem").front().modality == pawprint::Modality::Image);
}

TEST_CASE("eval, mcnemar and report chain together") {
  Sandbox box("chain");
  REQUIRE(synth(box, "easy", "0.05").code == 0);
  REQUIRE(synth(box, "hard", "1.0").code == 0);
  for (const std::string name : {"easy", "hard"}) {
    const auto r = run({"eval", "--store", box / (name + ".images.pvem"), "--pairs-seed", "2", "--k", "1,5",
                        "--emit-per-query", box / (name + ".q.json"), "--out", box / (name + ".json")});
    REQUIRE(r.code == 0);
  }
  const auto easy = pawprint::read_report(box / "easy.json");
  CHECK(easy.top_k.size() == 2);
  CHECK(easy.top_k.at(1) == 1.0);

  const auto mc = run({"mcnemar", "--a", box / "easy.q.json", "--b", box / "hard.q.json", "--out", box / "mc.json"});
  REQUIRE(mc.code == 0);
  CHECK(mc.out.find("↑") != std::string::npos);
  const auto j = nlohmann::json::parse(slurp(box / "mc.json"));
  CHECK(j.at("table").at("c") == 0);
  CHECK(j.at("direction") == "RowBetter");

  const auto rep = run({"report", box / "easy.json", box / "hard.json", "--out", box / "table.txt"});
  REQUIRE(rep.code == 0);
  CHECK(rep.out == slurp(box / "table.txt"));
  CHECK(rep.out.rfind("report ", 0) == 0);
  CHECK(rep.out.find("\neasy ") != std::string::npos);
  CHECK(rep.out.find("\nhard ") != std::string::npos);

  const auto pairs = run({"pairs", "--store", box / "easy.images.pvem", "--out", box / "pairs.json"});
  REQUIRE(pairs.code == 0);
  const auto pj = nlohmann::json::parse(slurp(box / "pairs.json"));
  CHECK(pj.at("pairs").size() == pj.at("n_pos").get<std::size_t>() + pj.at("n_neg").get<std::size_t>());
}

TEST_CASE("usage errors exit 2 and write nothing") {
  Sandbox box("usage");
  const std::vector<std::vector<std::string>> bad{
      {},
      {"frobnicate"},
      {"synth", "--seed", "1"},
      {"synth", "--rho", "2", "--out", box / "x"},
      {"synth", "--images", "1", "--out", box / "x"},
      {"eval", "--store", box / "missing.pvem", "--out", box / "r.json"},
      {"eval", "--store", box / "missing.pvem"},
      {"train", "--images", box / "missing.pvem", "--out", box / "t"},
      {"train", "--strategy", "sum", "--out", box / "t"},
      {"mcnemar", "--a", box / "a.json", "--out", box / "m.json"},
  };
  for (const auto& args : bad) {
    CAPTURE(args.size());
    CHECK(run(args).code == 2);
  }
  CHECK(box.file_count() == 0);
}

TEST_CASE("domain errors exit 1 with a JSON error on stderr") {
  Sandbox box("domain");
  pawprint::write_file_text(box / "junk.pvem", "NOPE and then some bytes");
  const auto r = run({"eval", "--store", box / "junk.pvem", "--out", box / "r.json"});
  CHECK(r.code == 1);
  const auto j = nlohmann::json::parse(r.err);
  CHECK(j.at("error") == "BadMagic");
  CHECK(j.at("message").get<std::string>().size() > 0);
  CHECK_FALSE(fs::exists(box / "r.json"));

  REQUIRE(run({"synth", "--identities", "1", "--images", "3", "--out", box / "solo"}).code == 0);
  const auto solo = run({"eval", "--store", box / "solo.images.pvem", "--out", box / "s.json"});
  CHECK(solo.code == 1);
  CHECK(nlohmann::json::parse(solo.err).at("error") == "NoPositivePairs");
  CHECK_FALSE(fs::exists(box / "s.json"));
}

TEST_CASE("help and version exit 0") {
  CHECK(run({"--help"}).code == 0);
  const auto v = run({"--version"});
  CHECK(v.code == 0);
  CHECK(v.out.find("0.1.0") != std::string::npos);
}
