#include <cmath>
#include <fstream>

#include "doctest.h"
#include "hmmcnn/error.hpp"
#include "hmmcnn/features.hpp"
#include "oracles.hpp"

using namespace hmmcnn;
using namespace hmmcnn::features;
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

FeatureVector vec(std::vector<double> values, std::string id = "x", std::string label = "f") {
  return {std::move(values), std::move(id), std::move(label)};
}

corpus::OpcodeSample sample(std::string id, std::string family, std::vector<Symbol> tokens) {
  corpus::OpcodeSample s;
  s.sample_id = std::move(id);
  s.family = std::move(family);
  s.raw_length = tokens.size();
  s.tokens = std::move(tokens);
  return s;
}

std::map<std::string, hmm::HmmModel> random_models(std::size_t k, std::size_t n, std::size_t m, Rng& rng) {
  std::map<std::string, hmm::HmmModel> out;
  for (std::size_t f = 0; f < k; ++f) {
    auto model = oracle::random_model(n, m, rng);
    model.family = "f" + std::to_string(f);
    out.emplace(model.family, model);
  }
  return out;
}

}  // namespace

TEST_CASE("hidden features concatenate per-family decodings in family order") {
  Rng rng(1);
  auto models = random_models(3, 3, 4, rng);
  auto s = sample("s", "f1", oracle::random_obs(12, 4, rng));
  auto v = extract_hidden_features(s, models, 5);
  REQUIRE(v.values.size() == 15);
  CHECK(v.label == "f1");
  std::size_t offset = 0;
  for (const auto& [family, model] : models) {
    auto states = hmm::posterior_decode(model, std::span<const Symbol>(s.tokens.data(), 5)).states;
    for (std::size_t t = 0; t < 5; ++t) CHECK(v.values[offset + t] == states[t]);
    offset += 5;
  }
  CHECK(kind_of([&] { extract_hidden_features(s, models, 13); }) == ErrorKind::SampleTooShort);
  models["f2"].n = 2;
  CHECK(kind_of([&] { extract_hidden_features(s, models, 5); }) == ErrorKind::ModelMismatch);
}

TEST_CASE("raw features are the first l symbols") {
  auto s = sample("s", "f", {4, 1, 3, 9});
  CHECK(raw_features(s, 3).values == std::vector<double>{4, 1, 3});
  CHECK(kind_of([&] { raw_features(s, 5); }) == ErrorKind::SampleTooShort);
}

TEST_CASE("parallel extraction equals the serial reference and reports short samples") {
  Rng rng(2);
  auto models = random_models(2, 3, 5, rng);
  corpus::Corpus c;
  for (int i = 0; i < 30; ++i) {
    c.samples.push_back(sample("s" + std::to_string(i), i % 2 ? "f0" : "f1", oracle::random_obs(i == 7 ? 4 : 20, 5, rng)));
  }
  auto par = extract_all_hidden(c, models, 10);
  auto ser = extract_all_hidden_serial(c, models, 10);
  REQUIRE(par.vectors.size() == 29);
  CHECK(par.skipped == std::vector<std::string>{"s7"});
  CHECK(ser.skipped == par.skipped);
  for (std::size_t i = 0; i < par.vectors.size(); ++i) {
    CHECK(par.vectors[i].values == ser.vectors[i].values);
    CHECK(par.vectors[i].sample_id == ser.vectors[i].sample_id);
  }
}

TEST_CASE("scaler uses population statistics and leaves constant columns centred") {
  std::vector<FeatureVector> train{vec({1, 5, 2}), vec({3, 5, 4}), vec({5, 5, 9})};
  auto s = fit_scaler(train);
  CHECK(s.mu[0] == doctest::Approx(3.0));
  CHECK(s.sigma[0] == doctest::Approx(std::sqrt(8.0 / 3.0)));
  CHECK(s.sigma[1] == 0.0);
  auto z = apply_scaler(s, vec({5, 5, 5}));
  CHECK(z.values[0] == doctest::Approx(2.0 / std::sqrt(8.0 / 3.0)));
  CHECK(z.values[1] == 0.0);

  // Scaled training columns have mean 0 and unit population variance.
  for (std::size_t d : {0u, 2u}) {
    double mean = 0.0, var = 0.0;
    for (const auto& v : train) mean += apply_scaler(s, v).values[d] / 3.0;
    for (const auto& v : train) var += std::pow(apply_scaler(s, v).values[d] - mean, 2) / 3.0;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::abs(var - 1.0) < 1e-12);
  }

  auto back = scaler_from_json(nlohmann::json::parse(to_json(s).dump()));
  for (std::size_t d = 0; d < 3; ++d) {
    CHECK(std::abs(back.mu[d] - s.mu[d]) <= 1e-12);
    CHECK(std::abs(back.sigma[d] - s.sigma[d]) <= 1e-12);
  }
  CHECK(kind_of([] { fit_scaler({}); }) == ErrorKind::EmptyInput);
  CHECK(kind_of([] { fit_scaler({vec({1}), vec({1, 2})}); }) == ErrorKind::RaggedInput);
  CHECK(kind_of([&] { apply_scaler(s, vec({1, 2})); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("embed_image geometry and fidelity") {
  std::vector<double> values(784);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(i) + 0.5;
  auto img = embed_image(vec(values));
  CHECK(img.payload_side == 28);
  CHECK(img.offset == 98);
  CHECK(img(98, 98) == 0.5);
  CHECK(img(98, 99) == 1.5);
  CHECK(img(99, 98) == 28.5);
  CHECK(img(97, 98) == 0.0);
  CHECK(img(125, 125) == 783.5);
  CHECK(img(126, 125) == 0.0);
  CHECK(extract_payload(img, 784) == values);

  auto odd = embed_image(vec({1, 2, 3, 4, 5}), 6);
  CHECK(odd.payload_side == 3);
  CHECK(odd.offset == 1);
  CHECK(odd(2, 2) == 5.0);
  CHECK(odd(2, 3) == 0.0);  // unused payload cell

  CHECK(embed_image(vec({7}), 1)(0, 0) == 7.0);
  CHECK(kind_of([] { embed_image(vec({}), 4); }) == ErrorKind::EmptyInput);
  CHECK(kind_of([] { embed_image(vec(std::vector<double>(17)), 4); }) == ErrorKind::PayloadTooLarge);
}

TEST_CASE("HMF1 files and indexes round trip") {
  auto dir = oracle::scratch_dir("hmf1");
  std::vector<FeatureVector> vs{vec({1.0, -2.5, 1e-3}, "a", "fa"), vec({0.0, 3.25, 7.0}, "b", "fb")};
  write_feature_file(dir / "x.hmf", vs);
  write_feature_index(dir / "x.csv", vs);
  CHECK(std::filesystem::file_size(dir / "x.hmf") == 16 + 2 * 3 * 4);
  std::ifstream in(dir / "x.hmf", std::ios::binary);
  char header[16];
  in.read(header, 16);
  CHECK(std::string(header, 4) == "HMF1");
  CHECK(header[4] == 2);
  CHECK(header[8] == 3);
  auto rows = read_feature_file(dir / "x.hmf");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][2] == 1e-3f);
  auto loaded = load_feature_set(dir / "x.hmf", dir / "x.csv");
  CHECK(loaded[1].sample_id == "b");
  CHECK(loaded[1].label == "fb");
  CHECK(loaded[1].values[1] == 3.25);

  std::ofstream(dir / "bad.hmf", std::ios::binary) << "NOPE";
  CHECK(kind_of([&] { read_feature_file(dir / "bad.hmf"); }) == ErrorKind::Io);
  write_feature_index(dir / "short.csv", {vs[0]});
  CHECK(kind_of([&] { load_feature_set(dir / "x.hmf", dir / "short.csv"); }) == ErrorKind::LengthMismatch);
}

TEST_CASE("PGM export") {
  auto dir = oracle::scratch_dir("pgm");
  write_pgm(dir / "x.pgm", embed_image(vec({0, 1, 2, 3}), 4));
  std::ifstream in(dir / "x.pgm");
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  CHECK(magic == "P2");
  CHECK(w == 4);
  CHECK(h == 4);
  CHECK(maxval == 255);
}
