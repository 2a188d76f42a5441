// Command-line front-end: synth, train-hmms, features, train, evaluate, grid.
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "hmmcnn/error.hpp"
#include "hmmcnn/pipeline.hpp"
#include "hmmcnn/synth.hpp"

namespace {

using namespace hmmcnn;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> work_dir;
  std::optional<std::string> manifest;
  std::optional<std::string> data_root;
  std::optional<std::size_t> n;
  std::optional<std::size_t> l;
  std::optional<std::string> classifier;
  std::optional<std::string> featurizer;
  std::optional<std::string> optimizer;
  std::optional<std::string> loss;
  std::optional<double> learning_rate;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> n_trees;
  std::optional<double> svm_lambda;
};

void add_pipeline_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON config file");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--work-dir", o.work_dir, "stage output directory");
  cmd->add_option("--manifest", o.manifest, "corpus manifest CSV");
  cmd->add_option("--data-root", o.data_root, "directory the manifest paths are relative to");
  cmd->add_option("--n", o.n, "hidden states per family HMM");
  cmd->add_option("--l", o.l, "truncation length");
  cmd->add_option("--classifier", o.classifier, "cnn | rf | svm");
  cmd->add_option("--featurizer", o.featurizer, "hmm | raw");
  cmd->add_option("--optimizer", o.optimizer, "sgd_momentum | adam | nadam | rmsprop");
  cmd->add_option("--loss", o.loss, "categorical_crossentropy | kullback_leibler_divergence | poisson");
  cmd->add_option("--learning-rate", o.learning_rate, "CNN learning rate");
  cmd->add_option("--epochs", o.epochs, "CNN epochs");
  cmd->add_option("--batch-size", o.batch_size, "CNN minibatch size");
  cmd->add_option("--rf-trees", o.n_trees, "random forest size");
  cmd->add_option("--svm-lambda", o.svm_lambda, "SVM regularization");
}

pipeline::PipelineConfig resolve(const Overrides& o) {
  pipeline::PipelineConfig c = o.config.empty() ? pipeline::PipelineConfig{} : pipeline::load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.work_dir) c.work_dir = *o.work_dir;
  if (o.manifest) c.manifest = *o.manifest;
  if (o.data_root) c.data_root = *o.data_root;
  if (o.n) c.n = *o.n;
  if (o.l) c.l = *o.l;
  if (o.classifier) c.classifier = pipeline::parse_classifier(*o.classifier);
  if (o.featurizer) c.featurizer = pipeline::parse_featurizer(*o.featurizer);
  if (o.optimizer) c.optimizer = nn::parse_optimizer(*o.optimizer);
  if (o.loss) c.loss = nn::parse_loss(*o.loss);
  if (o.learning_rate) c.learning_rate = *o.learning_rate;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.batch_size) c.batch_size = *o.batch_size;
  if (o.n_trees) c.rf.n_trees = *o.n_trees;
  if (o.svm_lambda) c.svm_lambda = *o.svm_lambda;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HMM hidden-state features + CNN family classifier"};
  app.require_subcommand(1);

  synth::SynthSpec spec;
  std::string synth_out = "corpus";
  auto* synth_cmd = app.add_subcommand("synth", "generate a planted-Markov opcode corpus");
  synth_cmd->add_option("--out", synth_out, "output directory");
  synth_cmd->add_option("--k", spec.k_families, "families");
  synth_cmd->add_option("--vocab", spec.vocab_size, "mnemonic vocabulary size");
  synth_cmd->add_option("--states", spec.states_per_source, "hidden states per planted source");
  synth_cmd->add_option("--samples", spec.samples_per_family, "samples per family");
  synth_cmd->add_option("--length", spec.sample_length, "opcodes per sample");
  synth_cmd->add_option("--separation", spec.separation, "0 = shared source, 1 = disjoint emissions");
  synth_cmd->add_option("--seed", spec.seed, "generator seed");

  Overrides o;
  auto* hmms_cmd = app.add_subcommand("train-hmms", "train one HMM per family");
  auto* features_cmd = app.add_subcommand("features", "extract and scale feature vectors");
  auto* train_cmd = app.add_subcommand("train", "train the classifier");
  auto* eval_cmd = app.add_subcommand("evaluate", "score the test split");
  auto* grid_cmd = app.add_subcommand("grid", "hyperparameter grid search");
  for (auto* cmd : {hmms_cmd, features_cmd, train_cmd, eval_cmd, grid_cmd}) add_pipeline_flags(cmd, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth_cmd->parsed()) {
      const auto generated = synth::generate(spec, synth_out);
      std::cout << "wrote " << generated.manifest.string() << '\n';
      return 0;
    }
    const auto config = resolve(o);
    if (hmms_cmd->parsed()) {
      pipeline::run_train_hmms(config);
      std::cout << "trained HMMs into " << (config.work_dir / "hmm").string() << '\n';
    } else if (features_cmd->parsed()) {
      pipeline::run_features(config);
      std::cout << "wrote features into " << (config.work_dir / "features").string() << '\n';
    } else if (train_cmd->parsed()) {
      pipeline::run_train(config);
      std::cout << "wrote classifier into " << (config.work_dir / "classifier").string() << '\n';
    } else if (eval_cmd->parsed()) {
      std::cout << pipeline::run_evaluate(config);
    } else if (grid_cmd->parsed()) {
      std::cout << pipeline::run_grid(config);
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed file: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}
