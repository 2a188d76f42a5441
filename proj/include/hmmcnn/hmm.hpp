#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hmmcnn/corpus.hpp"
#include "hmmcnn/matrix.hpp"
#include "json.hpp"

namespace hmmcnn::hmm {

using corpus::Symbol;

inline constexpr double kEmissionFloor = 1e-10;

struct TrainLog {
  std::size_t iterations = 0;
  // Per-symbol mean log-likelihood (nats); entry 0 is the initial model.
  std::vector<double> history;
  bool converged = false;
};

// Discrete HMM lambda = (A, B, pi).
struct HmmModel {
  std::size_t n = 0;
  std::size_t m = 0;
  Matrix a;  // n x n transitions
  Matrix b;  // n x m emissions
  std::vector<double> pi;
  std::string family;
  std::uint64_t seed = 0;
  TrainLog train_log;
};

struct Lattice {
  Matrix alpha;  // T x n, each row normalized
  Matrix beta;   // T x n, scaled by the same factors as alpha
  // scales[t] = 1 / sum_i alpha_t(i) before normalization.
  std::vector<double> scales;
  double log_likelihood = 0.0;
};

struct StateSequence {
  std::vector<std::uint32_t> states;
};

struct BaumWelchOptions {
  std::size_t min_iterations = 10;
  double epsilon = 1e-3;
  std::size_t max_iterations = 500;
};

HmmModel init_model(std::size_t n, std::size_t m, std::uint64_t seed, double jitter = 0.02);

// Throws SymbolOutOfRange / DegenerateSequence / InvalidDimension when the
// model or observation sequence is unusable.
void validate(const HmmModel& model, std::span<const Symbol> obs);

Lattice forward_backward(const HmmModel& model, std::span<const Symbol> obs);

// Forward pass only; log P(O | lambda).
double log_likelihood(const HmmModel& model, std::span<const Symbol> obs);

// gamma_t(i), rows normalized.
Matrix posteriors(const Lattice& lattice);

// Per-position argmax of gamma, ties toward the lowest state index.
StateSequence posterior_decode(const HmmModel& model, std::span<const Symbol> obs);

HmmModel baum_welch(HmmModel model, std::span<const Symbol> obs,
                    const BaumWelchOptions& options = {});

// One HMM per family trained on that family's concatenated training
// sequences. Families train concurrently; results follow canonical order.
std::map<std::string, HmmModel> train_family_models(const corpus::Corpus& train, std::size_t n,
                                                    std::uint64_t seed,
                                                    const BaumWelchOptions& options = {},
                                                    double jitter = 0.02);

std::uint64_t family_seed(std::uint64_t seed, const std::string& family);

nlohmann::json to_json(const HmmModel& model, const std::vector<std::string>& vocab);
HmmModel model_from_json(const nlohmann::json& j);

}  // namespace hmmcnn::hmm
