#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "pawprint/sampler.hpp"

using namespace pawprint;

namespace {

Population make_population(int identities, int images) {
  Population p;
  for (int i = 0; i < identities; ++i)
    for (int m = 0; m < images; ++m)
      p["id" + std::to_string(i)].push_back("id" + std::to_string(i) + "_" + std::to_string(m));
  return p;
}

}  // namespace

TEST_CASE("58 identities give one batch of 116") {
  const auto pop = make_population(58, 3);
  const auto plans = plan_epoch(pop, 58, 1);
  REQUIRE(plans.size() == 1);
  CHECK(plans[0].batch_size() == 116);
  CHECK(check_batch(plans[0], pop).empty());
}

TEST_CASE("four identities with two images split into two exact batches") {
  const auto pop = make_population(4, 2);
  const auto plans = plan_epoch(pop, 2, 9);
  REQUIRE(plans.size() == 2);
  std::set<std::string> ids;
  for (const auto& p : plans) {
    CHECK(p.entries.size() == 2);
    CHECK(check_batch(p, pop).empty());
    for (const auto& e : p.entries) ids.insert(e.identity_id);
  }
  CHECK(ids.size() == 4);
}

TEST_CASE("precondition errors") {
  auto pop = make_population(3, 2);
  pop["lonely"] = {"only"};
  try {
    plan_epoch(pop, 2, 0);
    FAIL("expected TooFewImages");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewImages);
    CHECK(std::string(e.what()).find("lonely") != std::string::npos);
  }
  try {
    plan_epoch(make_population(3, 2), 4, 0);
    FAIL("expected TooFewIdentities");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewIdentities);
  }
}

TEST_CASE("remainder identities sit out and return in later epochs") {
  const auto pop = make_population(7, 2);
  std::set<std::string> ever;
  for (std::uint64_t epoch = 0; epoch < 20; ++epoch) {
    const auto plans = plan_epoch(pop, 3, 5, epoch);
    REQUIRE(plans.size() == 2);
    for (const auto& p : plans)
      for (const auto& e : p.entries) ever.insert(e.identity_id);
  }
  CHECK(ever.size() == 7);
}

TEST_CASE("plans are deterministic and differ across epochs") {
  const auto pop = make_population(10, 5);
  auto flatten = [](const std::vector<BatchPlan>& ps) {
    std::vector<std::string> out;
    for (const auto& p : ps)
      for (const auto& e : p.entries) {
        out.push_back(e.image_ids[0]);
        out.push_back(e.image_ids[1]);
      }
    return out;
  };
  CHECK(flatten(plan_epoch(pop, 5, 3, 0)) == flatten(plan_epoch(pop, 5, 3, 0)));
  CHECK(flatten(plan_epoch(pop, 5, 3, 0)) != flatten(plan_epoch(pop, 5, 3, 1)));
}

TEST_CASE("every image of a 7-image identity is drawn within 200 epochs") {
  Population pop = make_population(5, 2);
  pop["big"] = {"b0", "b1", "b2", "b3", "b4", "b5", "b6"};
  std::set<std::string> drawn;
  for (std::uint64_t epoch = 0; epoch < 200; ++epoch) {
    for (const auto& p : plan_epoch(pop, 3, 17, epoch))
      for (const auto& e : p.entries)
        if (e.identity_id == "big") drawn.insert(e.image_ids.begin(), e.image_ids.end());
  }
  CHECK(drawn.size() == 7);
}

TEST_CASE("batch invariants hold on random populations") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Population pop;
    const int n = 2 + static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) {
      const int m = 2 + static_cast<int>(rng() % 6);
      for (int k = 0; k < m; ++k) pop["i" + std::to_string(i)].push_back("i" + std::to_string(i) + "/" + std::to_string(k));
    }
    const int per = 1 + static_cast<int>(rng() % static_cast<unsigned>(n));
    const auto plans = plan_epoch(pop, per, rng());
    CHECK(plans.size() == static_cast<std::size_t>(n / per));
    for (const auto& p : plans) {
      CHECK(p.entries.size() == static_cast<std::size_t>(per));
      CHECK(check_batch(p, pop).empty());
    }
  }
}
