#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hmmcnn/corpus.hpp"
#include "hmmcnn/error.hpp"
#include "hmmcnn/synth.hpp"
#include "oracles.hpp"

using namespace hmmcnn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fraction of samples whose own generator scores them highest.
double oracle_separability(const synth::SynthSpec& spec) {
  auto dir = oracle::scratch_dir("synth_sep");
  auto gen = synth::generate(spec, dir);
  auto c = corpus::load_corpus(gen.manifest, gen.data_root);
  corpus::Vocabulary vocab(gen.vocabulary);
  std::size_t hits = 0;
  for (const auto& s : c.samples) {
    std::vector<corpus::Symbol> obs;
    for (const auto& tok : s.mnemonics) obs.push_back(vocab.index(tok));
    std::size_t best = 0;
    double best_ll = -1e300;
    for (std::size_t f = 0; f < gen.generators.size(); ++f) {
      double ll = -1e300;
      try {
        ll = hmm::log_likelihood(gen.generators[f], obs);
      } catch (const Error&) {
        // Zero probability under this generator.
      }
      if (ll > best_ll) {
        best_ll = ll;
        best = f;
      }
    }
    hits += gen.generators[best].family == s.family;
  }
  return static_cast<double>(hits) / static_cast<double>(c.samples.size());
}

}  // namespace

TEST_CASE("small spec writes one file per sample and a matching manifest") {
  synth::SynthSpec spec;
  spec.k_families = 2;
  spec.vocab_size = 5;
  spec.samples_per_family = 4;
  spec.sample_length = 10;
  auto dir = oracle::scratch_dir("synth_small");
  auto gen = synth::generate(spec, dir);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(gen.data_root)) files += e.is_regular_file();
  CHECK(files == 8);
  auto c = corpus::load_corpus(gen.manifest, gen.data_root);
  CHECK(c.samples.size() == 8);
  CHECK(c.families == std::vector<std::string>{"fam00", "fam01"});
  for (const auto& s : c.samples) CHECK(s.raw_length == 10);
  CHECK(gen.vocabulary.front() == "OP000");
  CHECK(fs::exists(dir / "generators.json"));
  auto vocab = corpus::build_vocabulary(c);
  CHECK(corpus::encode_corpus(c, vocab).samples.size() == 8);
}

TEST_CASE("same seed gives a byte-identical corpus") {
  synth::SynthSpec spec;
  spec.k_families = 3;
  spec.samples_per_family = 5;
  spec.sample_length = 50;
  spec.seed = 5;
  auto a = oracle::scratch_dir("synth_a"), b = oracle::scratch_dir("synth_b");
  synth::generate(spec, a);
  synth::generate(spec, b);
  CHECK(slurp(a / "manifest.csv") == slurp(b / "manifest.csv"));
  CHECK(slurp(a / "generators.json") == slurp(b / "generators.json"));
  CHECK(slurp(a / "data" / "fam02" / "fam02_0004.txt") == slurp(b / "data" / "fam02" / "fam02_0004.txt"));
  spec.seed = 6;
  auto c = oracle::scratch_dir("synth_c");
  synth::generate(spec, c);
  CHECK(slurp(a / "generators.json") != slurp(c / "generators.json"));
}

TEST_CASE("generators are stochastic and disjoint at full separation") {
  synth::SynthSpec spec;
  spec.separation = 1.0;
  for (const auto& g : synth::planted_sources(spec)) {
    for (std::size_t i = 0; i < g.n; ++i) {
      double a = 0.0, b = 0.0;
      for (double v : g.a.row(i)) a += v;
      for (double v : g.b.row(i)) b += v;
      CHECK(std::abs(a - 1.0) < 1e-12);
      CHECK(std::abs(b - 1.0) < 1e-12);
    }
  }
  CHECK(oracle_separability(spec) == 1.0);
}

TEST_CASE("oracle separability degrades as separation shrinks") {
  synth::SynthSpec spec;
  spec.samples_per_family = 40;
  spec.sample_length = 60;
  spec.separation = 1.0;
  const double high = oracle_separability(spec);
  spec.separation = 0.3;
  const double mid = oracle_separability(spec);
  spec.separation = 0.02;
  const double low = oracle_separability(spec);
  MESSAGE("separability 1.0/0.3/0.02: " << high << " " << mid << " " << low);
  CHECK(high >= mid);
  CHECK(mid >= low);
  CHECK(low < 1.0);
}

TEST_CASE("invalid specs") {
  synth::SynthSpec spec;
  spec.separation = 0.0;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.separation = 0.5;
  spec.vocab_size = 0;
  CHECK_THROWS_AS(synth::generate(spec, oracle::scratch_dir("synth_bad")), Error);
}
