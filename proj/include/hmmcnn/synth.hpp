#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hmmcnn/hmm.hpp"
#include "hmmcnn/random.hpp"
#include "json.hpp"

namespace hmmcnn::synth {

struct SynthSpec {
  std::size_t k_families = 7;
  std::size_t vocab_size = 40;
  std::size_t states_per_source = 6;
  std::size_t samples_per_family = 200;
  std::size_t sample_length = 300;
  // In (0, 1]. At 1 each family emits only from its own block of the
  // vocabulary; smaller values blend in a source shared by all families.
  double separation = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const SynthSpec& spec);

std::string family_name(std::size_t index);
std::string mnemonic(std::size_t symbol, std::size_t vocab_size);

// Planted sources indexed in family order; symbols are generator indices.
std::vector<hmm::HmmModel> planted_sources(const SynthSpec& spec);

std::vector<corpus::Symbol> sample_sequence(const hmm::HmmModel& source, std::size_t length, Rng& rng);

struct GeneratedCorpus {
  std::filesystem::path manifest;
  std::filesystem::path data_root;
  std::vector<hmm::HmmModel> generators;
  std::vector<std::string> vocabulary;  // generator index -> mnemonic
};

// Writes manifest.csv, data/<family>/<id>.txt and generators.json under `out_dir`.
GeneratedCorpus generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace hmmcnn::synth
