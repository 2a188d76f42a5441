#include "hmmcnn/pipeline.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "hmmcnn/error.hpp"

namespace hmmcnn::pipeline {

using nlohmann::json;
using features::FeatureVector;

std::string_view to_string(ClassifierKind kind) noexcept {
  switch (kind) {
    case ClassifierKind::cnn: return "cnn";
    case ClassifierKind::rf: return "rf";
    case ClassifierKind::svm: return "svm";
  }
  return "?";
}

std::string_view to_string(FeaturizerKind kind) noexcept {
  return kind == FeaturizerKind::hmm ? "hmm" : "raw";
}

ClassifierKind parse_classifier(std::string_view name) {
  if (name == "cnn") return ClassifierKind::cnn;
  if (name == "rf") return ClassifierKind::rf;
  if (name == "svm") return ClassifierKind::svm;
  throw Error(ErrorKind::InvalidConfig, "unknown classifier '" + std::string(name) + "'");
}

FeaturizerKind parse_featurizer(std::string_view name) {
  if (name == "hmm") return FeaturizerKind::hmm;
  if (name == "raw") return FeaturizerKind::raw;
  throw Error(ErrorKind::InvalidConfig, "unknown featurizer '" + std::string(name) + "'");
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); };
  if (n < 1) fail("n must be at least 1");
  if (l < 1) fail("l must be at least 1");
  if (epochs < 1) fail("epochs must be at least 1");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must lie in (0, 1)");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(svm_lambda > 0.0)) fail("svm lambda must be positive");
  if (!(hmm.baum_welch.epsilon >= 0.0)) fail("hmm epsilon must be nonnegative");
  if (hmm.baum_welch.max_iterations < 1) fail("hmm max_iterations must be at least 1");
  if (rf.n_trees < 1) fail("rf n_trees must be at least 1");
  if (grid) {
    if (grid->size() == 0) throw Error(ErrorKind::EmptyGrid, "a grid list is empty");
    for (auto v : grid->n) if (v < 1) fail("grid n must be at least 1");
    for (auto v : grid->l) if (v < 1) fail("grid l must be at least 1");
  }
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, where + " must be an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw Error(ErrorKind::InvalidConfig, "unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::vector<nn::ConvBlockSpec> read_base(const json& j) {
  if (!j.is_array() || j.empty()) throw Error(ErrorKind::InvalidConfig, "base must be a non-empty array");
  for (const auto& b : j) check_keys(b, {"filters", "kernel", "stride", "pool"}, "base block");
  return nn::conv_base_from_json(j);
}

json base_json(const std::vector<nn::ConvBlockSpec>& base) { return nn::to_json(base); }

evalreport::GridSpec read_grid(const json& j) {
  check_keys(j, {"n", "l", "base", "optimizer", "learning_rate", "loss"}, "grid");
  evalreport::GridSpec g;
  read(j, "n", g.n);
  read(j, "l", g.l);
  read(j, "learning_rate", g.learning_rate);
  if (j.contains("base")) {
    g.base.clear();
    for (const auto& b : j.at("base")) g.base.push_back(read_base(b));
  }
  if (j.contains("optimizer")) {
    g.optimizer.clear();
    for (const auto& o : j.at("optimizer")) g.optimizer.push_back(nn::parse_optimizer(o.get<std::string>()));
  }
  if (j.contains("loss")) {
    g.loss.clear();
    for (const auto& o : j.at("loss")) g.loss.push_back(nn::parse_loss(o.get<std::string>()));
  }
  return g;
}

json grid_json(const evalreport::GridSpec& g) {
  json bases = json::array();
  for (const auto& b : g.base) bases.push_back(base_json(b));
  json opts = json::array();
  for (auto o : g.optimizer) opts.push_back(std::string(nn::to_string(o)));
  json losses = json::array();
  for (auto o : g.loss) losses.push_back(std::string(nn::to_string(o)));
  return {{"n", g.n}, {"l", g.l}, {"base", bases}, {"optimizer", opts}, {"learning_rate", g.learning_rate},
          {"loss", losses}};
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "missing " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, path.string() + ": " + e.what());
  }
}

void require_path(const fs::path& path, const char* what) {
  if (path.empty()) throw Error(ErrorKind::InvalidConfig, std::string(what) + " is not set");
  if (!fs::exists(path)) throw Error(ErrorKind::InvalidConfig, std::string(what) + " does not exist: " + path.string());
}

fs::path data_root_of(const PipelineConfig& config) {
  return config.data_root.empty() ? config.manifest.parent_path() / "data" : config.data_root;
}

void record_stage(const PipelineConfig& config, const std::string& name, double seconds, bool test) {
  write_json(config.work_dir / "timings" / (name + ".json"), {{"name", name}, {"seconds", seconds}, {"test", test}});
}

hmm::BaumWelchOptions bw_options(const PipelineConfig& config) { return config.hmm.baum_welch; }

corpus::Corpus select(const corpus::Corpus& all, const std::vector<std::string>& ids,
                      const corpus::Vocabulary& vocab) {
  std::unordered_map<std::string, const corpus::OpcodeSample*> by_id;
  for (const auto& s : all.samples) by_id.emplace(s.sample_id, &s);
  corpus::Corpus out;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(ErrorKind::MissingSample, "split references unknown sample " + id);
    out.samples.push_back(*it->second);
  }
  corpus::refresh_families(out);
  return corpus::encode_corpus(std::move(out), vocab);
}

void merge_drops(corpus::DropReport& into, const corpus::DropReport& more) {
  into.dropped.insert(into.dropped.end(), more.dropped.begin(), more.dropped.end());
  for (const auto& [family, count] : more.per_family) into.per_family[family] += count;
}

}  // namespace

PipelineConfig config_from_json(const json& j) {
  try {
    check_keys(j,
               {"manifest", "data_root", "work_dir", "n", "l", "classifier", "featurizer", "base", "optimizer",
                "learning_rate", "loss", "epochs", "batch_size", "image_side", "seed", "min_family_size",
                "train_fraction", "hmm", "rf", "svm", "grid"},
               "config");
    PipelineConfig c;
    if (j.contains("manifest")) c.manifest = j.at("manifest").get<std::string>();
    if (j.contains("data_root")) c.data_root = j.at("data_root").get<std::string>();
    if (j.contains("work_dir")) c.work_dir = j.at("work_dir").get<std::string>();
    read(j, "n", c.n);
    read(j, "l", c.l);
    if (j.contains("classifier")) c.classifier = parse_classifier(j.at("classifier").get<std::string>());
    if (j.contains("featurizer")) c.featurizer = parse_featurizer(j.at("featurizer").get<std::string>());
    if (j.contains("base")) c.base = read_base(j.at("base"));
    if (j.contains("optimizer")) c.optimizer = nn::parse_optimizer(j.at("optimizer").get<std::string>());
    read(j, "learning_rate", c.learning_rate);
    if (j.contains("loss")) c.loss = nn::parse_loss(j.at("loss").get<std::string>());
    read(j, "epochs", c.epochs);
    read(j, "batch_size", c.batch_size);
    read(j, "image_side", c.image_side);
    read(j, "seed", c.seed);
    read(j, "min_family_size", c.min_family_size);
    read(j, "train_fraction", c.train_fraction);
    if (j.contains("hmm")) {
      const auto& h = j.at("hmm");
      check_keys(h, {"min_iterations", "epsilon", "max_iterations", "jitter"}, "hmm");
      read(h, "min_iterations", c.hmm.baum_welch.min_iterations);
      read(h, "epsilon", c.hmm.baum_welch.epsilon);
      read(h, "max_iterations", c.hmm.baum_welch.max_iterations);
      read(h, "jitter", c.hmm.jitter);
    }
    if (j.contains("rf")) {
      const auto& r = j.at("rf");
      check_keys(r, {"n_trees", "max_depth", "mtry", "bootstrap"}, "rf");
      read(r, "n_trees", c.rf.n_trees);
      read(r, "max_depth", c.rf.max_depth);
      read(r, "mtry", c.rf.mtry);
      read(r, "bootstrap", c.rf.bootstrap);
    }
    if (j.contains("svm")) {
      const auto& s = j.at("svm");
      check_keys(s, {"lambda", "epochs"}, "svm");
      read(s, "lambda", c.svm_lambda);
      read(s, "epochs", c.svm_epochs);
    }
    if (j.contains("grid")) c.grid = read_grid(j.at("grid"));
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, e.what());
  }
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

json hyperparameters_json(const PipelineConfig& c) {
  json j = {{"n", c.n},
            {"l", c.l},
            {"classifier", std::string(to_string(c.classifier))},
            {"featurizer", std::string(to_string(c.featurizer))},
            {"seed", c.seed},
            {"min_family_size", c.min_family_size},
            {"train_fraction", c.train_fraction},
            {"hmm",
             {{"min_iterations", c.hmm.baum_welch.min_iterations},
              {"epsilon", c.hmm.baum_welch.epsilon},
              {"max_iterations", c.hmm.baum_welch.max_iterations},
              {"jitter", c.hmm.jitter}}}};
  switch (c.classifier) {
    case ClassifierKind::cnn:
      j["base"] = base_json(c.base);
      j["optimizer"] = std::string(nn::to_string(c.optimizer));
      j["learning_rate"] = c.learning_rate;
      j["loss"] = std::string(nn::to_string(c.loss));
      j["epochs"] = c.epochs;
      j["batch_size"] = c.batch_size;
      j["image_side"] = c.image_side;
      break;
    case ClassifierKind::rf:
      j["rf"] = {{"n_trees", c.rf.n_trees}, {"max_depth", c.rf.max_depth}, {"mtry", c.rf.mtry},
                 {"bootstrap", c.rf.bootstrap}};
      break;
    case ClassifierKind::svm:
      j["svm"] = {{"lambda", c.svm_lambda}, {"epochs", c.svm_epochs}};
      break;
  }
  if (c.grid) j["grid"] = grid_json(*c.grid);
  return j;
}

PreparedCorpus prepare_corpus(const PipelineConfig& config) {
  auto all = corpus::load_corpus(config.manifest, data_root_of(config));
  auto split = corpus::filter_and_split(all, config.min_family_size, config.train_fraction, config.seed);
  PreparedCorpus out;
  out.vocab = corpus::build_vocabulary(split.train);
  split.train = corpus::encode_corpus(std::move(split.train), out.vocab);
  split.test = corpus::encode_corpus(std::move(split.test), out.vocab);
  auto [train, train_drops] = corpus::drop_short(std::move(split.train), config.l);
  auto [test, test_drops] = corpus::drop_short(std::move(split.test), config.l);
  out.split.train = std::move(train);
  out.split.test = std::move(test);
  out.split.seed = split.seed;
  out.drops = train_drops;
  merge_drops(out.drops, test_drops);
  if (out.split.train.samples.empty()) throw Error(ErrorKind::EmptyCorpus, "no training samples left after drop_short");
  return out;
}

FamilyModels train_hmms(const PipelineConfig& config, const corpus::Corpus& train) {
  return hmm::train_family_models(train, config.n, config.seed, bw_options(config), config.hmm.jitter);
}

FeatureSplit build_features(const PipelineConfig& config, const PreparedCorpus& prepared,
                            const FamilyModels* models) {
  auto extract = [&](const corpus::Corpus& c) {
    if (config.featurizer == FeaturizerKind::raw) return features::extract_all_raw(c, config.l);
    if (!models) throw Error(ErrorKind::ModelMismatch, "hidden-state features need trained HMMs");
    return features::extract_all_hidden(c, *models, config.l);
  };
  auto train = extract(prepared.split.train);
  auto test = extract(prepared.split.test);
  FeatureSplit out;
  out.scaler = features::fit_scaler(train.vectors);
  out.train.reserve(train.vectors.size());
  for (const auto& v : train.vectors) out.train.push_back(features::apply_scaler(out.scaler, v));
  out.test.reserve(test.vectors.size());
  for (const auto& v : test.vectors) out.test.push_back(features::apply_scaler(out.scaler, v));
  out.skipped = std::move(train.skipped);
  out.skipped.insert(out.skipped.end(), test.skipped.begin(), test.skipped.end());
  return out;
}

std::vector<std::size_t> label_indices(const std::vector<FeatureVector>& vectors,
                                       const std::vector<std::string>& families) {
  std::vector<std::size_t> labels;
  labels.reserve(vectors.size());
  for (const auto& v : vectors) {
    auto it = std::lower_bound(families.begin(), families.end(), v.label);
    if (it == families.end() || *it != v.label) {
      throw Error(ErrorKind::LabelOutOfRange, "family '" + v.label + "' is not among the training families");
    }
    labels.push_back(static_cast<std::size_t>(it - families.begin()));
  }
  return labels;
}

Matrix feature_matrix(const std::vector<FeatureVector>& vectors) {
  if (vectors.empty()) return Matrix(0, 0);
  Matrix x(vectors.size(), vectors.front().values.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].values.size() != x.cols()) throw Error(ErrorKind::RaggedInput, "feature vectors differ in length");
    std::copy(vectors[i].values.begin(), vectors[i].values.end(), x.row(i).begin());
  }
  return x;
}

nn::Tensor<float> image_batch(const std::vector<FeatureVector>& vectors, std::size_t side) {
  nn::Tensor<float> batch({vectors.size(), 1, side, side});
  const std::size_t plane = side * side;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    auto image = features::embed_image(vectors[i], side);
    float* dst = batch.data() + i * plane;
    for (std::size_t p = 0; p < plane; ++p) dst[p] = static_cast<float>(image.pixels[p]);
  }
  return batch;
}

nn::CnnSpec cnn_spec(const PipelineConfig& config, std::size_t num_classes) {
  nn::CnnSpec spec;
  spec.input_side = config.image_side;
  spec.conv_blocks = config.base;
  spec.num_classes = num_classes;
  return spec;
}

TrainedClassifier train_classifier(const PipelineConfig& config, const std::vector<FeatureVector>& train,
                                   const std::vector<std::string>& families) {
  if (train.empty()) throw Error(ErrorKind::EmptyInput, "no training vectors");
  const auto labels = label_indices(train, families);
  TrainedClassifier out;
  out.kind = config.classifier;
  switch (config.classifier) {
    case ClassifierKind::cnn: {
      auto model = nn::init_cnn<float>(cnn_spec(config, families.size()), config.seed);
      nn::OptimizerConfig opt;
      opt.kind = config.optimizer;
      opt.learning_rate = config.learning_rate;
      const auto images = image_batch(train, config.image_side);
      out.history = nn::fit(model, images, labels, opt, config.loss, config.epochs, config.batch_size, config.seed);
      out.cnn = std::move(model);
      break;
    }
    case ClassifierKind::rf: {
      auto options = config.rf;
      options.seed = config.seed;
      out.rf = baselines::rf_fit(feature_matrix(train), labels, options, families.size());
      break;
    }
    case ClassifierKind::svm:
      out.svm = baselines::svm_fit(feature_matrix(train), labels, families.size(), config.svm_lambda,
                                   config.svm_epochs, config.seed);
      break;
  }
  return out;
}

std::vector<std::size_t> predict(const PipelineConfig& config, const TrainedClassifier& classifier,
                                 const std::vector<FeatureVector>& vectors) {
  if (vectors.empty()) return {};
  switch (classifier.kind) {
    case ClassifierKind::cnn: {
      std::vector<std::size_t> out;
      out.reserve(vectors.size());
      // Embed in chunks to bound memory on large test sets.
      constexpr std::size_t chunk = 256;
      for (std::size_t start = 0; start < vectors.size(); start += chunk) {
        std::vector<FeatureVector> part(vectors.begin() + start,
                                        vectors.begin() + std::min(vectors.size(), start + chunk));
        auto preds = nn::predict(*classifier.cnn, image_batch(part, config.image_side), config.batch_size);
        out.insert(out.end(), preds.begin(), preds.end());
      }
      return out;
    }
    case ClassifierKind::rf: return baselines::rf_predict(*classifier.rf, feature_matrix(vectors));
    case ClassifierKind::svm: return baselines::svm_predict(*classifier.svm, feature_matrix(vectors));
  }
  return {};
}

Evaluation evaluate(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                    std::size_t k) {
  Evaluation e;
  e.confusion = evalreport::confusion(truth, predicted, k);
  e.metrics = evalreport::metrics(e.confusion);
  return e;
}

// ---------------------------------------------------------------------------
// Stage commands

namespace {

struct Layout {
  fs::path root;

  fs::path split() const { return root / "split.json"; }
  fs::path vocab() const { return root / "vocab.json"; }
  fs::path drops() const { return root / "drop_report.json"; }
  fs::path hmm_dir() const { return root / "hmm"; }
  fs::path hmm_index() const { return root / "hmm" / "index.json"; }
  fs::path features(const char* split) const { return root / "features" / (std::string(split) + ".hmf"); }
  fs::path index(const char* split) const { return root / "features" / (std::string(split) + ".index.csv"); }
  fs::path feature_meta() const { return root / "features" / "meta.json"; }
  fs::path scaler() const { return root / "features" / "scaler.json"; }
  fs::path skips() const { return root / "features" / "skip_report.json"; }
  fs::path classifier() const { return root / "classifier" / "model.json"; }
  fs::path cnn_weights() const { return root / "classifier" / "cnn.weights"; }
  fs::path history() const { return root / "classifier" / "history.json"; }
};

void write_split(const Layout& layout, const PreparedCorpus& prepared) {
  auto split = corpus::to_json(prepared.split);
  write_json(layout.split(), split);
  write_json(layout.vocab(), corpus::to_json(prepared.vocab));
  write_json(layout.drops(), corpus::to_json(prepared.drops));
}

// Rebuilds the encoded split recorded in work_dir from the original corpus.
PreparedCorpus load_split(const PipelineConfig& config, const Layout& layout) {
  const auto split = read_json(layout.split());
  PreparedCorpus out;
  out.vocab = corpus::vocabulary_from_json(read_json(layout.vocab()));
  const auto all = corpus::load_corpus(config.manifest, data_root_of(config));
  auto train = select(all, split.at("train").get<std::vector<std::string>>(), out.vocab);
  auto test = select(all, split.at("test").get<std::vector<std::string>>(), out.vocab);
  const auto families = split.at("families").get<std::vector<std::string>>();
  auto [kept_train, train_drops] = corpus::drop_short(std::move(train), config.l);
  auto [kept_test, test_drops] = corpus::drop_short(std::move(test), config.l);
  out.split.train = std::move(kept_train);
  out.split.test = std::move(kept_test);
  out.split.train.families = families;
  out.split.test.families = families;
  out.split.seed = split.at("seed").get<std::uint64_t>();
  out.drops = train_drops;
  merge_drops(out.drops, test_drops);
  return out;
}

FamilyModels load_hmms(const PipelineConfig& config, const Layout& layout) {
  const auto index = read_json(layout.hmm_index());
  if (index.at("n").get<std::size_t>() != config.n) {
    throw Error(ErrorKind::ModelMismatch, "work_dir holds HMMs with N=" + index.at("n").dump() +
                                              " but the config asks for N=" + std::to_string(config.n));
  }
  FamilyModels models;
  for (const auto& family : index.at("families")) {
    const auto name = family.get<std::string>();
    models.emplace(name, hmm::model_from_json(read_json(layout.hmm_dir() / (name + ".json"))));
  }
  return models;
}

std::vector<std::string> training_families(const Layout& layout) {
  return read_json(layout.split()).at("families").get<std::vector<std::string>>();
}

void check_command_paths(const PipelineConfig& config) {
  config.validate();
  require_path(config.manifest, "manifest");
  require_path(data_root_of(config), "data_root");
}

}  // namespace

void run_train_hmms(const PipelineConfig& config) {
  check_command_paths(config);
  const Layout layout{config.work_dir};
  evalreport::Stopwatch clock;
  const auto prepared = prepare_corpus(config);
  write_split(layout, prepared);
  const auto models = train_hmms(config, prepared.split.train);
  std::vector<std::string> vocab_tokens = prepared.vocab.tokens();
  vocab_tokens.push_back("<UNK>");
  json families = json::array();
  for (const auto& [family, model] : models) {
    write_json(layout.hmm_dir() / (family + ".json"), hmm::to_json(model, vocab_tokens));
    families.push_back(family);
  }
  write_json(layout.hmm_index(), {{"n", config.n}, {"seed", config.seed}, {"families", families}});
  record_stage(config, "train_hmms", clock.seconds(), false);
}

void run_features(const PipelineConfig& config) {
  check_command_paths(config);
  const Layout layout{config.work_dir};
  if (!fs::exists(layout.split())) {
    // Raw features do not need HMMs; create the split on demand.
    if (config.featurizer == FeaturizerKind::hmm) {
      throw Error(ErrorKind::Io, "no split in " + config.work_dir.string() + "; run train-hmms first");
    }
    write_split(layout, prepare_corpus(config));
  }
  evalreport::Stopwatch clock;
  const auto prepared = load_split(config, layout);
  std::optional<FamilyModels> models;
  if (config.featurizer == FeaturizerKind::hmm) models = load_hmms(config, layout);

  auto extract = [&](const corpus::Corpus& c) {
    return config.featurizer == FeaturizerKind::raw ? features::extract_all_raw(c, config.l)
                                                    : features::extract_all_hidden(c, *models, config.l);
  };
  fs::create_directories(layout.features("train").parent_path());
  auto train = extract(prepared.split.train);
  const auto scaler = features::fit_scaler(train.vectors);
  for (auto& v : train.vectors) v = features::apply_scaler(scaler, v);
  features::write_feature_file(layout.features("train"), train.vectors);
  features::write_feature_index(layout.index("train"), train.vectors);
  write_json(layout.scaler(), features::to_json(scaler));
  record_stage(config, "features_train", clock.seconds(), false);

  evalreport::Stopwatch test_clock;
  auto test = extract(prepared.split.test);
  for (auto& v : test.vectors) v = features::apply_scaler(scaler, v);
  features::write_feature_file(layout.features("test"), test.vectors);
  features::write_feature_index(layout.index("test"), test.vectors);
  record_stage(config, "features_test", test_clock.seconds(), true);

  json skipped = train.skipped;
  for (const auto& id : test.skipped) skipped.push_back(id);
  write_json(layout.skips(), {{"l", config.l}, {"skipped", skipped}, {"short_samples", corpus::to_json(prepared.drops)}});
  write_json(layout.feature_meta(), {{"featurizer", std::string(to_string(config.featurizer))},
                                     {"l", config.l},
                                     {"n", config.featurizer == FeaturizerKind::hmm ? json(config.n) : json()},
                                     {"dim", scaler.dims()},
                                     {"train", train.vectors.size()},
                                     {"test", test.vectors.size()}});
}

void run_train(const PipelineConfig& config) {
  config.validate();
  const Layout layout{config.work_dir};
  require_path(layout.features("train"), "training features");
  evalreport::Stopwatch clock;
  const auto families = training_families(layout);
  const auto train = features::load_feature_set(layout.features("train"), layout.index("train"));
  const auto trained = train_classifier(config, train, families);
  json model = {{"classifier", std::string(to_string(trained.kind))}, {"families", families}};
  switch (trained.kind) {
    case ClassifierKind::cnn:
      fs::create_directories(layout.cnn_weights().parent_path());
      nn::save_cnn(*trained.cnn, layout.root / "classifier" / "cnn.json", layout.cnn_weights());
      model["cnn"] = "cnn.json";
      break;
    case ClassifierKind::rf: model["rf"] = baselines::to_json(*trained.rf); break;
    case ClassifierKind::svm: model["svm"] = baselines::to_json(*trained.svm); break;
  }
  write_json(layout.classifier(), model);
  write_json(layout.history(), {{"loss", trained.history.loss}, {"accuracy", trained.history.accuracy}});
  record_stage(config, "train_classifier", clock.seconds(), false);
}

std::string run_evaluate(const PipelineConfig& config) {
  config.validate();
  const Layout layout{config.work_dir};
  require_path(layout.classifier(), "classifier model");
  require_path(layout.features("test"), "test features");
  evalreport::Stopwatch clock;
  const auto model = read_json(layout.classifier());
  TrainedClassifier classifier;
  classifier.kind = parse_classifier(model.at("classifier").get<std::string>());
  const auto families = model.at("families").get<std::vector<std::string>>();
  switch (classifier.kind) {
    case ClassifierKind::cnn:
      classifier.cnn = nn::load_cnn(layout.root / "classifier" / model.at("cnn").get<std::string>(),
                                    layout.cnn_weights());
      if (classifier.cnn->spec.input_side != config.image_side) {
        throw Error(ErrorKind::ModelMismatch, "CNN was trained on a different image side");
      }
      break;
    case ClassifierKind::rf: classifier.rf = baselines::forest_from_json(model.at("rf")); break;
    case ClassifierKind::svm: classifier.svm = baselines::svm_from_json(model.at("svm")); break;
  }
  const auto test = features::load_feature_set(layout.features("test"), layout.index("test"));
  if (test.empty()) throw Error(ErrorKind::EmptyInput, "no test vectors");
  const auto truth = label_indices(test, families);
  const auto predicted = predict(config, classifier, test);
  const double predict_seconds = clock.seconds();
  record_stage(config, "predict", predict_seconds, true);

  auto effective = config;
  effective.classifier = classifier.kind;
  const auto result = evaluate(truth, predicted, families.size());
  write_json(layout.root / "report.json",
             evalreport::report_json(result.metrics, result.confusion, families, hyperparameters_json(effective),
                                     config.seed));
  const auto table = evalreport::report_table(result.metrics, result.confusion, families);
  write_text(layout.root / "report.txt", table);

  std::vector<evalreport::StageClock> stages;
  for (const char* name : {"train_hmms", "features_train", "train_classifier", "features_test", "predict"}) {
    const auto path = layout.root / "timings" / (std::string(name) + ".json");
    if (!fs::exists(path)) continue;
    const auto j = read_json(path);
    stages.push_back({j.at("name").get<std::string>(), j.at("seconds").get<double>(), j.at("test").get<bool>()});
  }
  write_json(layout.root / "timing.json", evalreport::to_json(evalreport::timing_report(stages, test.size())));
  return table;
}

const FamilyModels& HmmCache::get(const PipelineConfig& config, const corpus::Corpus& train, std::size_t n) {
  const auto key = std::make_pair(n, config.seed);
  auto it = models_.find(key);
  if (it != models_.end()) return it->second;
  evalreport::Stopwatch clock;
  auto models = hmm::train_family_models(train, n, config.seed, bw_options(config), config.hmm.jitter);
  seconds_ += clock.seconds();
  ++trainings_;
  return models_.emplace(key, std::move(models)).first->second;
}

evalreport::GridResult grid_in_memory(const PipelineConfig& config, const evalreport::GridSpec& grid,
                                      HmmCache& cache) {
  if (grid.size() == 0) throw Error(ErrorKind::EmptyGrid, "grid has no cells");
  // HMMs are shared across every L, so they are trained on the samples long
  // enough for the smallest L in the grid.
  auto base_config = config;
  base_config.l = *std::min_element(grid.l.begin(), grid.l.end());
  const auto hmm_corpus = prepare_corpus(base_config);

  auto runner = [&](const evalreport::GridConfig& cell) {
    auto cell_config = config;
    cell_config.n = cell.n;
    cell_config.l = cell.l;
    cell_config.base = cell.base;
    cell_config.optimizer = cell.optimizer;
    cell_config.learning_rate = cell.learning_rate;
    cell_config.loss = cell.loss;

    evalreport::Stopwatch clock;
    const FamilyModels* models = nullptr;
    if (cell_config.featurizer == FeaturizerKind::hmm) {
      models = &cache.get(cell_config, hmm_corpus.split.train, cell.n);
    }
    const auto prepared = prepare_corpus(cell_config);
    const auto feats = build_features(cell_config, prepared, models);
    const auto classifier = train_classifier(cell_config, feats.train, prepared.families());
    evalreport::CellOutcome outcome;
    outcome.train_seconds = clock.seconds();

    evalreport::Stopwatch test_clock;
    const auto predicted = predict(cell_config, classifier, feats.test);
    if (!feats.test.empty()) {
      outcome.test_seconds_per_sample = test_clock.seconds() / static_cast<double>(feats.test.size());
      const auto result = evaluate(label_indices(feats.test, prepared.families()), predicted,
                                   prepared.families().size());
      outcome.accuracy = result.metrics.accuracy;
      outcome.weighted_f1 = result.metrics.weighted_f1;
    }
    return outcome;
  };
  return evalreport::grid_search(grid, runner);
}

std::string run_grid(const PipelineConfig& config) {
  check_command_paths(config);
  if (!config.grid) throw Error(ErrorKind::EmptyGrid, "config has no grid section");
  HmmCache cache;
  const auto result = grid_in_memory(config, *config.grid, cache);
  const Layout layout{config.work_dir};
  write_json(layout.root / "grid.json", evalreport::to_json(result));
  const auto table = evalreport::grid_table(result);
  write_text(layout.root / "grid.txt", table);
  return table;
}

}  // namespace hmmcnn::pipeline
