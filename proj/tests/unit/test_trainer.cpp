#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "pawprint/synth.hpp"
#include "pawprint/trainer.hpp"

using namespace pawprint;

namespace {

// Plain scalar Adam, kept separate from the library implementation.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double& x, double g, double lr = 1e-4, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    const double delta = lr * mh / (std::sqrt(vh) + eps);
    x -= delta;
    return delta;
  }
};

double adam_scalar(Eigen::MatrixXd& x, double g, AdamState& st, const AdamHyper& hyper) {
  Eigen::MatrixXd grad(1, 1);
  grad(0, 0) = g;
  Eigen::MatrixXd* ps[] = {&x};
  const Eigen::MatrixXd* gs[] = {&grad};
  const double before = x(0, 0);
  adam_step(ps, gs, st, hyper);
  return before - x(0, 0);
}

SyntheticPopulation separable(std::uint64_t seed) {
  SynthConfig c;
  c.seed = seed;
  c.n_identities = 12;
  c.images_per_identity = 4;
  c.dim_image = 16;
  c.dim_text = 8;
  c.sigma = 0.05;
  c.rho = 0.9;
  return gen_population(c);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.identities_per_batch = 4;
  cfg.seed = 5;
  return cfg;
}

bool same_params(const FusionModel& a, const FusionModel& b) {
  auto ta = a.tensors();
  auto tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (*ta[i].value != *tb[i].value) return false;
  return true;
}

}  // namespace

TEST_CASE("zero gradients leave parameters unchanged") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(3, 2, 0.25);
  const Eigen::MatrixXd g = Eigen::MatrixXd::Zero(3, 2);
  Eigen::MatrixXd* ps[] = {&x};
  const Eigen::MatrixXd* gs[] = {&g};
  AdamState st;
  adam_step(ps, gs, st, AdamHyper{});
  CHECK(x == Eigen::MatrixXd::Constant(3, 2, 0.25));
  CHECK(st.t == 1);
}

TEST_CASE("first step has magnitude lr / (1 + eps)") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 1);
  AdamState st;
  const AdamHyper hyper;
  const double delta = adam_scalar(x, 1.0, st, hyper);
  CHECK(delta == doctest::Approx(1e-4 / (1 + 1e-8)).epsilon(1e-12));
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(1, 1);
  AdamState st2;
  CHECK(adam_scalar(y, -3.0, st2, hyper) == doctest::Approx(-1e-4).epsilon(1e-7));
}

TEST_CASE("updates decay after the gradient vanishes, matching scalar Adam") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, 0.5);
  AdamState st;
  ScalarAdam ref;
  double rx = 0.5;
  const AdamHyper hyper;
  double prev = 1.0;
  for (double g : {1.0, 0.0, 0.0}) {
    const double got = adam_scalar(x, g, st, hyper);
    const double want = ref.step(rx, g);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
    CHECK(got > 0);
    CHECK(got < prev);
    prev = got;
  }
  CHECK(x(0, 0) == doctest::Approx(rx).epsilon(1e-15));
}

TEST_CASE("matrix Adam agrees with elementwise scalar Adam over many steps") {
  Eigen::MatrixXd x(2, 2);
  x << 0.1, -0.2, 0.3, -0.4;
  std::vector<ScalarAdam> ref(4);
  std::vector<double> rx{x(0), x(1), x(2), x(3)};
  AdamState st;
  AdamHyper hyper;
  hyper.learning_rate = 0.01;
  for (int step = 0; step < 30; ++step) {
    Eigen::MatrixXd g(2, 2);
    for (int i = 0; i < 4; ++i) g(i) = std::sin(step * 0.7 + i) * (i + 1);
    Eigen::MatrixXd* ps[] = {&x};
    const Eigen::MatrixXd* gs[] = {&g};
    adam_step(ps, gs, st, hyper);
    for (int i = 0; i < 4; ++i) ref[i].step(rx[i], g(i), 0.01);
  }
  for (int i = 0; i < 4; ++i) CHECK(x(i) == doctest::Approx(rx[i]).epsilon(1e-12));
}

TEST_CASE("shape disagreements are errors") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 2), g = Eigen::MatrixXd::Zero(2, 3);
  Eigen::MatrixXd* ps[] = {&x};
  const Eigen::MatrixXd* gs[] = {&g};
  AdamState st;
  try {
    adam_step(ps, gs, st, AdamHyper{});
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("configuration validation") {
  TrainConfig c;
  CHECK(c.adam.learning_rate == 1e-4);
  CHECK(c.epochs == 10);
  CHECK(c.identities_per_batch == 58);
  CHECK_NOTHROW(c.validate());
  c.identities_per_batch = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.adam.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("zero learning rate leaves the model and its outputs unchanged") {
  const auto pop = separable(1);
  auto cfg = small_config();
  cfg.adam.learning_rate = 0.0;
  cfg.epochs = 2;
  const auto init = init_fusion(FusionStrategy::Gated, 16, 8, 8, 9);
  const auto r = train(init, pop.images, pop.texts, cfg);
  REQUIRE(r.model);
  CHECK(same_params(*r.model, init));
  const auto before = embed_store(init, pop.images, pop.texts);
  const auto after = embed_store(r.model, pop.images, pop.texts);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i].values == after[i].values);
}

TEST_CASE("training reduces the loss on a separable population") {
  const auto pop = separable(2);
  const auto r = train(init_fusion(FusionStrategy::Gated, 16, 8, 16, 3), pop.images, pop.texts, small_config());
  REQUIRE(r.loss_history.size() == 10);
  for (double l : r.loss_history) {
    CHECK(std::isfinite(l));
    CHECK(l >= 0);
  }
  CHECK(r.loss_history.back() < r.loss_history.front());
}

TEST_CASE("training is deterministic") {
  const auto pop = separable(3);
  auto cfg = small_config();
  cfg.epochs = 3;
  const auto init = init_fusion(FusionStrategy::CrossAttention, 16, 8, 8, 4);
  const auto a = train(init, pop.images, pop.texts, cfg);
  const auto b = train(init, pop.images, pop.texts, cfg);
  CHECK(a.loss_history == b.loss_history);
  CHECK(same_params(*a.model, *b.model));
}

TEST_CASE("every strategy trains end to end") {
  const auto pop = separable(4);
  auto cfg = small_config();
  cfg.epochs = 2;
  cfg.adam.learning_rate = 1e-3;
  for (auto s : {FusionStrategy::Concat, FusionStrategy::WeightedText, FusionStrategy::CrossAttention,
                 FusionStrategy::Gated}) {
    const auto init = init_fusion(s, 16, 8, 8, 1);
    const auto r = train(init, pop.images, pop.texts, cfg);
    CHECK(r.loss_history.size() == 2);
    CHECK_FALSE(same_params(*r.model, init));
    const auto fused = embed_store(r.model, pop.images, pop.texts);
    CHECK(fused.front().modality == Modality::Fused);
    CHECK(fused.front().dim == static_cast<std::uint32_t>(init.output_dim()));
  }
}

TEST_CASE("without a model the raw images are only scored") {
  const auto pop = separable(5);
  auto cfg = small_config();
  cfg.epochs = 3;
  const auto r = train(std::nullopt, pop.images, {}, cfg);
  CHECK_FALSE(r.model);
  REQUIRE(r.loss_history.size() == 3);
  CHECK(r.loss_history[0] >= 0);
  const auto raw = embed_store(std::nullopt, pop.images, {});
  CHECK(raw.size() == pop.images.size());
  CHECK(raw.front().modality == Modality::Image);
}
