#include <cmath>

#include "doctest.h"
#include "hmmcnn/error.hpp"
#include "hmmcnn/evalreport.hpp"
#include "oracles.hpp"

using namespace hmmcnn;
using namespace hmmcnn::evalreport;

namespace {

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("confusion counts and normalization") {
  auto cm = confusion({0, 0, 1}, {0, 1, 1}, 2);
  CHECK(cm.counts == std::vector<std::size_t>{1, 1, 0, 1});
  CHECK(cm.total() == 3);
  auto norm = normalize_rows(cm);
  CHECK(norm(0, 0) == 0.5);
  CHECK(norm(0, 1) == 0.5);
  CHECK(norm(1, 1) == 1.0);

  auto with_zero_row = confusion({0, 0}, {0, 2}, 3);
  auto z = normalize_rows(with_zero_row);
  for (std::size_t c = 0; c < 3; ++c) CHECK(z(1, c) == 0.0);

  CHECK(kind_of([] { confusion({0}, {0, 1}, 2); }) == ErrorKind::LengthMismatch);
  CHECK(kind_of([] { confusion({0}, {2}, 2); }) == ErrorKind::LabelOutOfRange);
}

TEST_CASE("metrics on the hand-worked matrix") {
  auto m = metrics(confusion({0, 0, 1}, {0, 1, 1}, 2));
  CHECK(m.accuracy == doctest::Approx(2.0 / 3.0));
  CHECK(m.per_class[0].precision == 1.0);
  CHECK(m.per_class[0].recall == 0.5);
  CHECK(m.per_class[0].f1 == doctest::Approx(2.0 / 3.0));
  CHECK(m.per_class[1].f1 == doctest::Approx(2.0 / 3.0));
  CHECK(m.weighted_f1 == doctest::Approx(2.0 / 3.0));

  auto perfect = metrics(confusion({0, 1, 2}, {0, 1, 2}, 3));
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.weighted_f1 == 1.0);

  // A class that is never predicted gets precision 0, not NaN.
  auto never = metrics(confusion({0, 1}, {0, 0}, 2));
  CHECK(never.per_class[1].precision == 0.0);
  CHECK(never.per_class[1].f1 == 0.0);
  CHECK(kind_of([] { metrics(ConfusionMatrix{2, {0, 0, 0, 0}}); }) == ErrorKind::EmptyMatrix);
}

TEST_CASE("metrics agree with direct recomputation") {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = 2 + rng.below(6), n = 1 + rng.below(80);
    std::vector<std::size_t> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = rng.below(k);
      p[i] = rng.uniform() < 0.6 ? t[i] : rng.below(k);
    }
    auto m = metrics(confusion(t, p, k));
    CHECK(std::abs(m.accuracy - oracle::direct_accuracy(t, p)) < 1e-12);
    CHECK(std::abs(m.weighted_f1 - oracle::direct_weighted_f1(t, p, k)) < 1e-12);
    std::size_t support = 0;
    for (const auto& c : m.per_class) support += c.support;
    CHECK(support == n);
  }
}

TEST_CASE("grid search visits the product and breaks ties by serialization") {
  GridSpec grid;
  grid.n = {2, 3};
  grid.l = {5};
  grid.optimizer = {nn::OptimizerKind::adam, nn::OptimizerKind::nadam};
  grid.learning_rate = {1e-3, 1e-2};
  CHECK(grid.size() == 8);
  auto cells = grid.cells();
  CHECK(cells.front().n == 2);
  CHECK(cells.back().n == 3);

  std::size_t calls = 0;
  auto result = grid_search(grid, [&](const GridConfig& c) {
    ++calls;
    CellOutcome out;
    out.accuracy = c.learning_rate > 5e-3 ? 0.9 : 0.5;
    return out;
  });
  CHECK(calls == 8);
  CHECK(result.rows.size() == 8);
  for (const auto& row : result.rows) CHECK(result.rows[result.best].outcome.accuracy >= row.outcome.accuracy);
  std::string best = serialize(result.rows[result.best].config);
  for (const auto& row : result.rows) {
    if (row.outcome.accuracy == 0.9) CHECK(best <= serialize(row.config));
  }

  GridSpec single;
  auto one = grid_search(single, [](const GridConfig&) { return CellOutcome{0.1, 0.1, 0.0, std::nullopt}; });
  CHECK(one.rows.size() == 1);
  CHECK(one.best == 0);
  CHECK(to_json(one).at("rows").size() == 1);

  GridSpec empty;
  empty.loss.clear();
  CHECK(kind_of([&] { grid_search(empty, [](const GridConfig&) { return CellOutcome{}; }); }) == ErrorKind::EmptyGrid);
}

TEST_CASE("timing report") {
  auto r = timing_report({{"a", 1.0, false}, {"b", 1.0, false}, {"c", 0.5, true}}, 10);
  CHECK(r.total_train_seconds == 2.0);
  CHECK(r.total_test_seconds == 0.5);
  CHECK(*r.test_seconds_per_sample == doctest::Approx(0.05));
  auto none = timing_report({{"a", 1.0, false}}, 0);
  CHECK_FALSE(none.test_seconds_per_sample.has_value());
  CHECK(to_json(none).at("test_seconds_per_sample").is_null());
}

TEST_CASE("report JSON carries both confusion forms") {
  auto cm = confusion({0, 0, 1}, {0, 1, 1}, 2);
  auto j = report_json(metrics(cm), cm, {"a", "b"}, {{"n", 3}}, 42);
  CHECK(j.at("confusion").at("counts") == nlohmann::json::parse("[[1,1],[0,1]]"));
  CHECK(j.at("confusion").at("normalized") == nlohmann::json::parse("[[0.5,0.5],[0.0,1.0]]"));
  CHECK(j.at("seed") == 42);
  CHECK(j.at("per_class").contains("a"));
  auto table = report_table(metrics(cm), cm, {"a", "b"});
  CHECK(table.find("0.6667") != std::string::npos);
}
