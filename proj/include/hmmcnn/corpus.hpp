#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace hmmcnn::corpus {

using Symbol = std::uint32_t;

// One labeled opcode sequence. Straight out of load_corpus only `mnemonics`
// is populated; encode_corpus fills `tokens` and releases the strings.
struct OpcodeSample {
  std::string sample_id;
  std::string family;
  std::vector<std::string> mnemonics;
  std::vector<Symbol> tokens;
  std::size_t raw_length = 0;

  bool encoded() const noexcept { return mnemonics.empty() && !tokens.empty(); }
};

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  // Number of known mnemonics; UNK sits at index m().
  std::size_t m() const noexcept { return index_to_token_.size(); }
  Symbol unk() const noexcept { return static_cast<Symbol>(m()); }
  // Alphabet size seen by the HMMs, UNK included.
  std::size_t symbol_count() const noexcept { return m() + 1; }

  Symbol index(const std::string& token) const;
  const std::string& token(Symbol index) const;
  const std::vector<std::string>& tokens() const noexcept { return index_to_token_; }

 private:
  std::unordered_map<std::string, Symbol> token_to_index_;
  std::vector<std::string> index_to_token_;
};

struct Corpus {
  std::vector<OpcodeSample> samples;
  // Sorted ascending, duplicate-free. This is the canonical family order.
  std::vector<std::string> families;
  std::optional<Vocabulary> vocabulary;

  std::size_t family_index(const std::string& family) const;
};

struct SplitResult {
  Corpus train;
  Corpus test;
  std::uint64_t seed = 0;
};

struct DropReport {
  std::vector<std::string> dropped;
  std::map<std::string, std::size_t> per_family;

  bool empty() const noexcept { return dropped.empty(); }
};

std::string normalize_mnemonic(std::string_view raw);
std::vector<std::string> tokenize_opcodes(std::string_view text);

// Rebuilds `families` from the samples (sorted, unique).
void refresh_families(Corpus& corpus);

Corpus load_corpus(const std::filesystem::path& manifest_path,
                   const std::filesystem::path& data_root);

Vocabulary build_vocabulary(const Corpus& train);

Corpus encode_corpus(Corpus corpus, const Vocabulary& vocab);

SplitResult filter_and_split(const Corpus& corpus, std::size_t min_family_size = 50,
                             double train_fraction = 0.8, std::uint64_t seed = 0);

std::pair<Corpus, DropReport> drop_short(Corpus corpus, std::size_t l);

nlohmann::json to_json(const DropReport& report);
nlohmann::json to_json(const Vocabulary& vocab);
Vocabulary vocabulary_from_json(const nlohmann::json& j);
// Membership only: families plus train/test sample ids in corpus order.
nlohmann::json to_json(const SplitResult& split);

}  // namespace hmmcnn::corpus
