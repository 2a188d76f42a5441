#include <cmath>

#include "doctest.h"
#include "hmmcnn/error.hpp"
#include "hmmcnn/hmm.hpp"
#include "hmmcnn/synth.hpp"
#include "oracles.hpp"

using namespace hmmcnn;
using namespace hmmcnn::hmm;
using corpus::Symbol;

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

void check_stochastic(const HmmModel& m, double tol) {
  auto row_sum = [](std::span<const double> r) {
    double s = 0.0;
    for (double v : r) s += v;
    return s;
  };
  for (std::size_t i = 0; i < m.n; ++i) {
    CHECK(std::abs(row_sum(m.a.row(i)) - 1.0) < tol);
    CHECK(std::abs(row_sum(m.b.row(i)) - 1.0) < tol);
  }
  CHECK(std::abs(row_sum(m.pi) - 1.0) < tol);
}

HmmModel two_state_switch() {
  HmmModel m;
  m.n = 2;
  m.m = 2;
  m.a = Matrix(2, 2);
  m.a(0, 1) = m.a(1, 0) = 1.0;
  m.b = Matrix(2, 2);
  m.b(0, 0) = m.b(1, 1) = 1.0;
  m.pi = {1.0, 0.0};
  return m;
}

}  // namespace

TEST_CASE("init_model shapes, jitter and determinism") {
  auto u = init_model(3, 5, 1, 0.0);
  for (double v : u.a.data()) CHECK(v == doctest::Approx(1.0 / 3));
  for (double v : u.b.data()) CHECK(v == doctest::Approx(1.0 / 5));
  for (double v : u.pi) CHECK(v == doctest::Approx(1.0 / 3));

  auto m = init_model(20, 427, 9);
  CHECK(m.a.rows() == 20);
  CHECK(m.a.cols() == 20);
  CHECK(m.b.rows() == 20);
  CHECK(m.b.cols() == 427);
  CHECK(m.pi.size() == 20);
  check_stochastic(m, 1e-10);
  for (double v : m.b.data()) {
    CHECK(v > 0.97 / 427);
    CHECK(v < 1.03 / 427);
  }
  auto again = init_model(20, 427, 9);
  CHECK(again.a == m.a);
  CHECK(again.b == m.b);
  CHECK(again.pi == m.pi);
  CHECK(kind_of([] { init_model(0, 3, 0); }) == ErrorKind::InvalidDimension);
  CHECK(kind_of([] { init_model(2, 0, 0); }) == ErrorKind::InvalidDimension);
  CHECK(kind_of([] { init_model(2, 2, 0, 1.0); }) == ErrorKind::InvalidDimension);
}

TEST_CASE("forward log-likelihood on closed-form cases") {
  HmmModel one;
  one.n = 1;
  one.m = 2;
  one.a = Matrix(1, 1, 1.0);
  one.b = Matrix(1, 2, 0.5);
  one.pi = {1.0};
  std::vector<Symbol> obs{0, 1, 1};
  CHECK(log_likelihood(one, obs) == doctest::Approx(3 * std::log(0.5)).epsilon(1e-14));

  auto sw = two_state_switch();
  std::vector<Symbol> alternating{0, 1, 0};
  CHECK(std::abs(log_likelihood(sw, alternating)) < 1e-15);
  CHECK(posterior_decode(sw, std::vector<Symbol>{0, 1}).states == std::vector<std::uint32_t>{0, 1});
}

TEST_CASE("forward matches exhaustive path sums and posteriors match enumerated marginals") {
  Rng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + rng.below(3), m = 1 + rng.below(4), t = 1 + rng.below(6);
    auto model = oracle::random_model(n, m, rng);
    auto obs = oracle::random_obs(t, m, rng);
    auto lat = forward_backward(model, obs);
    CHECK(std::abs(lat.log_likelihood - std::log(oracle::path_sum_likelihood(model, obs))) < 1e-9);
    for (std::size_t s = 0; s < t; ++s) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += lat.alpha(s, i);
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    auto gamma = posteriors(lat);
    auto exact = oracle::path_marginals(model, obs);
    for (std::size_t k = 0; k < gamma.data().size(); ++k) CHECK(std::abs(gamma.data()[k] - exact.data()[k]) < 1e-9);
    CHECK(posterior_decode(model, obs).states == oracle::marginal_argmax(exact));
  }
}

TEST_CASE("posterior ties go to the lowest state") {
  auto m = init_model(3, 2, 0, 0.0);
  auto states = posterior_decode(m, std::vector<Symbol>{1, 0, 1}).states;
  CHECK(states == std::vector<std::uint32_t>{0, 0, 0});
  auto single = init_model(1, 4, 0);
  CHECK(posterior_decode(single, std::vector<Symbol>{3, 2, 1}).states == std::vector<std::uint32_t>{0, 0, 0});
}

TEST_CASE("validation errors") {
  auto m = init_model(2, 3, 0);
  CHECK(kind_of([&] { forward_backward(m, std::vector<Symbol>{0, 3}); }) == ErrorKind::SymbolOutOfRange);
  CHECK(kind_of([&] { forward_backward(m, std::vector<Symbol>{}); }) == ErrorKind::DegenerateSequence);
  CHECK(kind_of([&] { baum_welch(m, std::vector<Symbol>{1}); }) == ErrorKind::DegenerateSequence);
  auto sw = two_state_switch();
  CHECK(kind_of([&] { log_likelihood(sw, std::vector<Symbol>{0, 0}); }) == ErrorKind::NumericFailure);
}

TEST_CASE("Baum-Welch is monotone, stochastic and respects the emission floor") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto generator = oracle::random_model(3, 6, rng);
    auto obs = oracle::random_obs(400, 5, rng);  // symbol 5 never appears
    BaumWelchOptions opts;
    opts.min_iterations = 25;
    opts.epsilon = 0.0;
    opts.max_iterations = 25;
    auto trained = baum_welch(init_model(3, 6, trial), obs, opts);
    const auto& h = trained.train_log.history;
    REQUIRE(h.size() == 26);
    CHECK(trained.train_log.iterations == 25);
    for (std::size_t i = 1; i < h.size(); ++i) CHECK(h[i] >= h[i - 1] - 1e-8);
    check_stochastic(trained, 1e-10);
    for (std::size_t i = 0; i < 3; ++i) CHECK(trained.b(i, 5) >= kEmissionFloor * 0.99);
    (void)generator;
  }
}

TEST_CASE("Baum-Welch stopping rule") {
  Rng rng(8);
  auto obs = oracle::random_obs(300, 4, rng);
  auto trained = baum_welch(init_model(2, 4, 1), obs);
  CHECK(trained.train_log.iterations >= 10);
  CHECK(trained.train_log.iterations <= 500);
  if (trained.train_log.converged) {
    const auto& h = trained.train_log.history;
    CHECK(h.back() - h[h.size() - 2] < 1e-3);
  }
  BaumWelchOptions capped;
  capped.min_iterations = 1;
  capped.epsilon = -1.0;
  capped.max_iterations = 3;
  auto capped_model = baum_welch(init_model(2, 4, 1), obs, capped);
  CHECK(capped_model.train_log.iterations == 3);
  CHECK_FALSE(capped_model.train_log.converged);
}

TEST_CASE("family models follow canonical order and are reproducible") {
  synth::SynthSpec spec;
  spec.k_families = 3;
  spec.vocab_size = 6;
  spec.samples_per_family = 3;
  spec.sample_length = 40;
  auto sources = synth::planted_sources(spec);
  corpus::Corpus train;
  Rng rng(2);
  for (std::size_t f = 3; f-- > 0;) {
    for (int i = 0; i < 3; ++i) {
      corpus::OpcodeSample s;
      s.family = sources[f].family;
      s.sample_id = s.family + std::to_string(i);
      s.tokens = synth::sample_sequence(sources[f], 40, rng);
      s.raw_length = 40;
      train.samples.push_back(s);
    }
  }
  corpus::refresh_families(train);
  train.vocabulary = corpus::Vocabulary({"A", "B", "C", "D", "E"});
  auto models = train_family_models(train, 2, 17);
  REQUIRE(models.size() == 3);
  CHECK(models.begin()->first == "fam00");
  for (const auto& [family, model] : models) {
    CHECK(model.family == family);
    CHECK(model.m == 6);
    CHECK(model.seed == family_seed(17, family));
  }
  auto again = train_family_models(train, 2, 17);
  for (const auto& [family, model] : models) {
    CHECK(to_json(model, {}) == to_json(again.at(family), {}));
  }
  CHECK(kind_of([] { train_family_models(corpus::Corpus{}, 2, 0); }) == ErrorKind::EmptyCorpus);
}

TEST_CASE("model JSON round trip") {
  Rng rng(4);
  auto m = oracle::random_model(3, 4, rng);
  m.family = "fam";
  m.seed = 99;
  m.train_log.history = {-1.5, -1.25};
  m.train_log.iterations = 1;
  auto j = to_json(m, {"A", "B", "C", "<UNK>"});
  for (const char* key : {"family", "n", "m", "seed", "pi", "a", "b", "vocab", "train_log"}) CHECK(j.contains(key));
  auto back = model_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.a == m.a);
  CHECK(back.b == m.b);
  CHECK(back.pi == m.pi);
  CHECK(back.train_log.history == m.train_log.history);
  CHECK(back.family == "fam");
}
