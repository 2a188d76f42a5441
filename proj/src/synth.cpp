#include "hmmcnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "hmmcnn/error.hpp"

namespace hmmcnn::synth {

namespace fs = std::filesystem;

void SynthSpec::validate() const {
  if (k_families < 1 || vocab_size < 1 || states_per_source < 1 || samples_per_family < 1 || sample_length < 1) {
    throw Error(ErrorKind::InvalidSpec, "all synth counts must be at least 1");
  }
  if (!(separation > 0.0 && separation <= 1.0)) {
    throw Error(ErrorKind::InvalidSpec, "separation must lie in (0, 1]");
  }
}

nlohmann::json to_json(const SynthSpec& spec) {
  return {{"k_families", spec.k_families},
          {"vocab_size", spec.vocab_size},
          {"states_per_source", spec.states_per_source},
          {"samples_per_family", spec.samples_per_family},
          {"sample_length", spec.sample_length},
          {"separation", spec.separation},
          {"seed", spec.seed}};
}

std::string family_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fam%02zu", index);
  return buf;
}

std::string mnemonic(std::size_t symbol, std::size_t vocab_size) {
  const int width = vocab_size > 1000 ? static_cast<int>(std::to_string(vocab_size - 1).size()) : 3;
  char buf[32];
  std::snprintf(buf, sizeof buf, "OP%0*zu", width, symbol);
  return buf;
}

namespace {

constexpr double kSharpening = 4.0;

// Dirichlet(1, ..., 1) draw over the listed support; zero elsewhere.
std::vector<double> flat_dirichlet(std::size_t len, const std::vector<std::size_t>& support, Rng& rng) {
  std::vector<double> row(len, 0.0);
  double total = 0.0;
  for (auto k : support) {
    row[k] = rng.exponential();
    total += row[k];
  }
  for (auto& v : row) v /= total;
  return row;
}

// Dirichlet(1) draw raised elementwise to `power` and renormalized; powers
// above 1 concentrate mass on fewer entries.
std::vector<double> sharpened_dirichlet(std::size_t len, const std::vector<std::size_t>& support, double power,
                                        Rng& rng) {
  auto row = flat_dirichlet(len, support, rng);
  double total = 0.0;
  for (auto& v : row) {
    v = std::pow(v, power);
    total += v;
  }
  for (auto& v : row) v /= total;
  return row;
}

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

// Vocabulary block owned by family f: a contiguous slice, or a single
// shared symbol when there are more families than symbols.
std::vector<std::size_t> family_block(std::size_t f, std::size_t k, std::size_t vocab) {
  if (vocab < k) return {f % vocab};
  std::vector<std::size_t> block;
  for (std::size_t s = f * vocab / k; s < (f + 1) * vocab / k; ++s) block.push_back(s);
  return block;
}

void blend(std::span<double> dst, const std::vector<double>& own, const std::vector<double>& shared, double sep) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = sep * own[i] + (1.0 - sep) * shared[i];
}

std::size_t draw(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u above the final partial sum; take the last positive entry.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.size() - 1;
}

}  // namespace

std::vector<hmm::HmmModel> planted_sources(const SynthSpec& spec) {
  spec.validate();
  const std::size_t S = spec.states_per_source;
  const std::size_t V = spec.vocab_size;
  const auto all_states = iota_n(S);
  const auto all_symbols = iota_n(V);

  Rng shared_rng(derive_seed(spec.seed, fnv1a("shared")));
  std::vector<std::vector<double>> shared_a, shared_b;
  for (std::size_t i = 0; i < S; ++i) shared_a.push_back(flat_dirichlet(S, all_states, shared_rng));
  for (std::size_t i = 0; i < S; ++i) shared_b.push_back(flat_dirichlet(V, all_symbols, shared_rng));
  const auto shared_pi = flat_dirichlet(S, all_states, shared_rng);

  const double power = 1.0 + kSharpening * spec.separation;
  std::vector<hmm::HmmModel> out;
  for (std::size_t f = 0; f < spec.k_families; ++f) {
    const auto name = family_name(f);
    Rng rng(derive_seed(spec.seed, fnv1a(name)));
    const auto block = family_block(f, spec.k_families, V);
    hmm::HmmModel model;
    model.n = S;
    model.m = V;
    model.family = name;
    model.seed = spec.seed;
    model.a = Matrix(S, S);
    model.b = Matrix(S, V);
    model.pi.assign(S, 0.0);
    for (std::size_t i = 0; i < S; ++i) {
      blend(model.a.row(i), sharpened_dirichlet(S, all_states, power, rng), shared_a[i], spec.separation);
    }
    for (std::size_t i = 0; i < S; ++i) {
      blend(model.b.row(i), sharpened_dirichlet(V, block, power, rng), shared_b[i], spec.separation);
    }
    blend(model.pi, flat_dirichlet(S, all_states, rng), shared_pi, spec.separation);
    out.push_back(std::move(model));
  }
  return out;
}

std::vector<corpus::Symbol> sample_sequence(const hmm::HmmModel& source, std::size_t length, Rng& rng) {
  std::vector<corpus::Symbol> out(length);
  std::size_t state = draw(source.pi, rng);
  for (std::size_t t = 0; t < length; ++t) {
    if (t > 0) state = draw(source.a.row(state), rng);
    out[t] = static_cast<corpus::Symbol>(draw(source.b.row(state), rng));
  }
  return out;
}

GeneratedCorpus generate(const SynthSpec& spec, const fs::path& out_dir) {
  spec.validate();
  GeneratedCorpus out;
  out.generators = planted_sources(spec);
  for (std::size_t s = 0; s < spec.vocab_size; ++s) out.vocabulary.push_back(mnemonic(s, spec.vocab_size));
  out.data_root = out_dir / "data";
  out.manifest = out_dir / "manifest.csv";
  fs::create_directories(out.data_root);

  std::ofstream manifest(out.manifest, std::ios::binary);
  if (!manifest) throw Error(ErrorKind::Io, "cannot write " + out.manifest.string());
  manifest << "sample_id,family,path\n";
  for (std::size_t f = 0; f < spec.k_families; ++f) {
    const auto& source = out.generators[f];
    fs::create_directories(out.data_root / source.family);
    Rng rng(derive_seed(spec.seed, fnv1a(source.family) ^ 0x5a5a5a5aULL));
    for (std::size_t i = 0; i < spec.samples_per_family; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "%s_%04zu", source.family.c_str(), i);
      const auto rel = fs::path(source.family) / (std::string(id) + ".txt");
      std::ofstream file(out.data_root / rel, std::ios::binary);
      if (!file) throw Error(ErrorKind::Io, "cannot write " + (out.data_root / rel).string());
      const auto seq = sample_sequence(source, spec.sample_length, rng);
      for (std::size_t t = 0; t < seq.size(); ++t) {
        file << out.vocabulary[seq[t]] << ((t + 1) % 16 == 0 || t + 1 == seq.size() ? '\n' : ' ');
      }
      manifest << id << ',' << source.family << ',' << rel.generic_string() << '\n';
    }
  }

  nlohmann::json gen = {{"spec", to_json(spec)}, {"vocab", out.vocabulary}, {"families", nlohmann::json::array()}};
  for (const auto& g : out.generators) gen["families"].push_back(hmm::to_json(g, out.vocabulary));
  std::ofstream gfile(out_dir / "generators.json", std::ios::binary);
  gfile << gen.dump(2) << '\n';
  return out;
}

}  // namespace hmmcnn::synth
