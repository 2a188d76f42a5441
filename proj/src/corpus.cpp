#include "hmmcnn/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "hmmcnn/error.hpp"
#include "hmmcnn/random.hpp"

namespace hmmcnn::corpus {

namespace fs = std::filesystem;

Vocabulary::Vocabulary(std::vector<std::string> tokens) : index_to_token_(std::move(tokens)) {
  for (std::size_t i = 0; i < index_to_token_.size(); ++i) {
    auto [it, inserted] = token_to_index_.emplace(index_to_token_[i], static_cast<Symbol>(i));
    if (!inserted) throw Error(ErrorKind::InvalidConfig, "duplicate vocabulary token " + it->first);
  }
}

Symbol Vocabulary::index(const std::string& token) const {
  auto it = token_to_index_.find(token);
  return it == token_to_index_.end() ? unk() : it->second;
}

const std::string& Vocabulary::token(Symbol index) const {
  static const std::string kUnk = "<UNK>";
  return index < index_to_token_.size() ? index_to_token_[index] : kUnk;
}

std::size_t Corpus::family_index(const std::string& family) const {
  auto it = std::lower_bound(families.begin(), families.end(), family);
  if (it == families.end() || *it != family) {
    throw Error(ErrorKind::LabelOutOfRange, "unknown family " + family);
  }
  return static_cast<std::size_t>(it - families.begin());
}

std::string normalize_mnemonic(std::string_view raw) {
  std::string out(raw);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> tokenize_opcodes(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.push_back(normalize_mnemonic(text.substr(i, j - i)));
    i = j;
  }
  return out;
}

void refresh_families(Corpus& corpus) {
  std::set<std::string> names;
  for (const auto& s : corpus.samples) names.insert(s.family);
  corpus.families.assign(names.begin(), names.end());
}

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

Corpus load_corpus(const fs::path& manifest_path, const fs::path& data_root) {
  std::ifstream manifest(manifest_path);
  if (!manifest) {
    throw Error(ErrorKind::MalformedManifest, "cannot open manifest " + manifest_path.string());
  }
  std::string line;
  if (!std::getline(manifest, line) || strip_cr(line) != "sample_id,family,path") {
    throw Error(ErrorKind::MalformedManifest, "expected header sample_id,family,path");
  }

  struct Row {
    std::string id, family;
    fs::path path;
  };
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(manifest, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_csv_row(line);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      throw Error(ErrorKind::MalformedManifest, "bad row at line " + std::to_string(line_no));
    }
    rows.push_back({fields[0], fields[1], data_root / fields[2]});
  }
  if (rows.empty()) throw Error(ErrorKind::EmptyCorpus, "manifest has no rows");

  Corpus corpus;
  corpus.samples.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::ifstream in(rows[i].path, std::ios::binary);
    if (!in) throw Error(ErrorKind::MissingSample, rows[i].path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    auto& s = corpus.samples[i];
    s.sample_id = rows[i].id;
    s.family = rows[i].family;
    s.mnemonics = tokenize_opcodes(buf.str());
    s.raw_length = s.mnemonics.size();
    if (s.mnemonics.empty()) throw Error(ErrorKind::MissingSample, "empty opcode file " + rows[i].path.string());
  }
  refresh_families(corpus);
  return corpus;
}

Vocabulary build_vocabulary(const Corpus& train) {
  if (train.samples.empty()) throw Error(ErrorKind::EmptyCorpus, "cannot build vocabulary");
  std::vector<std::string> order;
  std::unordered_map<std::string, Symbol> seen;
  for (const auto& s : train.samples) {
    for (const auto& tok : s.mnemonics) {
      if (seen.emplace(tok, static_cast<Symbol>(order.size())).second) order.push_back(tok);
    }
  }
  return Vocabulary(std::move(order));
}

Corpus encode_corpus(Corpus corpus, const Vocabulary& vocab) {
  for (auto& s : corpus.samples) {
    if (s.encoded()) continue;
    s.tokens.resize(s.mnemonics.size());
    std::transform(s.mnemonics.begin(), s.mnemonics.end(), s.tokens.begin(),
                   [&](const std::string& t) { return vocab.index(t); });
    s.mnemonics.clear();
    s.mnemonics.shrink_to_fit();
  }
  corpus.vocabulary = vocab;
  return corpus;
}

SplitResult filter_and_split(const Corpus& corpus, std::size_t min_family_size,
                             double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "train_fraction must lie in (0, 1)");
  }
  std::map<std::string, std::vector<std::size_t>> by_family;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    by_family[corpus.samples[i].family].push_back(i);
  }

  std::vector<char> to_train(corpus.samples.size(), 0);
  std::vector<char> kept(corpus.samples.size(), 0);
  bool any = false;
  for (auto& [family, members] : by_family) {
    if (members.size() < min_family_size) continue;
    any = true;
    Rng rng(derive_seed(seed, fnv1a(family)));
    auto shuffled = members;
    rng.shuffle(std::span<std::size_t>(shuffled));
    const auto n_train = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(members.size())));
    for (std::size_t k = 0; k < shuffled.size(); ++k) {
      kept[shuffled[k]] = 1;
      to_train[shuffled[k]] = k < n_train ? 1 : 0;
    }
  }
  if (!any) throw Error(ErrorKind::EmptyCorpus, "no family has at least " + std::to_string(min_family_size) + " samples");

  // Both halves keep manifest order.
  SplitResult out;
  out.seed = seed;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    if (!kept[i]) continue;
    (to_train[i] ? out.train : out.test).samples.push_back(corpus.samples[i]);
  }
  refresh_families(out.train);
  out.test.families = out.train.families;
  out.train.vocabulary = corpus.vocabulary;
  out.test.vocabulary = corpus.vocabulary;
  return out;
}

std::pair<Corpus, DropReport> drop_short(Corpus corpus, std::size_t l) {
  if (l < 1) throw Error(ErrorKind::InvalidConfig, "l must be at least 1");
  DropReport report;
  std::vector<OpcodeSample> kept;
  kept.reserve(corpus.samples.size());
  for (auto& s : corpus.samples) {
    if (s.raw_length < l) {
      report.dropped.push_back(s.sample_id);
      ++report.per_family[s.family];
    } else {
      kept.push_back(std::move(s));
    }
  }
  corpus.samples = std::move(kept);
  return {std::move(corpus), std::move(report)};
}

nlohmann::json to_json(const DropReport& report) {
  nlohmann::json per_family = nlohmann::json::object();
  for (const auto& [name, count] : report.per_family) per_family[name] = count;
  return {{"dropped", report.dropped}, {"per_family", per_family}};
}

nlohmann::json to_json(const Vocabulary& vocab) {
  return {{"m", vocab.m()}, {"tokens", vocab.tokens()}};
}

Vocabulary vocabulary_from_json(const nlohmann::json& j) {
  return Vocabulary(j.at("tokens").get<std::vector<std::string>>());
}

nlohmann::json to_json(const SplitResult& split) {
  auto ids = [](const Corpus& c) {
    std::vector<std::string> out;
    for (const auto& s : c.samples) out.push_back(s.sample_id);
    return out;
  };
  return {{"seed", split.seed},
          {"families", split.train.families},
          {"train", ids(split.train)},
          {"test", ids(split.test)}};
}

}  // namespace hmmcnn::corpus
