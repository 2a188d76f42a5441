#include "hmmcnn/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "hmmcnn/error.hpp"
#include "hmmcnn/random.hpp"

namespace hmmcnn::hmm {

namespace {

void fill_near_uniform(std::span<double> row, Rng& rng, double jitter) {
  const double base = 1.0 / static_cast<double>(row.size());
  double total = 0.0;
  for (auto& v : row) {
    v = base * (1.0 + rng.uniform(-jitter, jitter));
    total += v;
  }
  for (auto& v : row) v /= total;
}

// Clamp entries to the floor and rescale the rest so the row sums to one
// with every entry still at or above the floor.
void apply_floor(std::span<double> row, double floor) {
  double floored = 0.0;
  double rest = 0.0;
  std::size_t n_floored = 0;
  for (double v : row) {
    if (v < floor) {
      ++n_floored;
    } else {
      rest += v;
    }
  }
  if (n_floored == 0) return;
  floored = floor * static_cast<double>(n_floored);
  const double scale = (1.0 - floored) / rest;
  for (auto& v : row) v = v < floor ? floor : v * scale;
}

}  // namespace

HmmModel init_model(std::size_t n, std::size_t m, std::uint64_t seed, double jitter) {
  if (n < 1 || m < 1) throw Error(ErrorKind::InvalidDimension, "n and m must be positive");
  if (!(jitter >= 0.0 && jitter < 1.0)) throw Error(ErrorKind::InvalidDimension, "jitter must lie in [0, 1)");
  HmmModel model;
  model.n = n;
  model.m = m;
  model.seed = seed;
  model.a = Matrix(n, n);
  model.b = Matrix(n, m);
  model.pi.assign(n, 0.0);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) fill_near_uniform(model.a.row(i), rng, jitter);
  for (std::size_t i = 0; i < n; ++i) fill_near_uniform(model.b.row(i), rng, jitter);
  fill_near_uniform(model.pi, rng, jitter);
  return model;
}

void validate(const HmmModel& model, std::span<const Symbol> obs) {
  if (model.n == 0 || model.a.rows() != model.n || model.a.cols() != model.n ||
      model.b.rows() != model.n || model.b.cols() != model.m || model.pi.size() != model.n) {
    throw Error(ErrorKind::InvalidDimension, "inconsistent model shapes");
  }
  if (obs.empty()) throw Error(ErrorKind::DegenerateSequence, "empty observation sequence");
  for (Symbol s : obs) {
    if (s >= model.m) {
      throw Error(ErrorKind::SymbolOutOfRange,
                  "symbol " + std::to_string(s) + " >= m=" + std::to_string(model.m));
    }
  }
}

namespace {

// Scaled forward recursion; returns log P(O | lambda).
double forward_pass(const HmmModel& model, std::span<const Symbol> obs, Matrix& alpha,
                    std::vector<double>& scales) {
  const std::size_t n = model.n;
  const std::size_t T = obs.size();
  alpha = Matrix(T, n);
  scales.assign(T, 0.0);
  double log_lik = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    auto cur = alpha.row(t);
    if (t == 0) {
      for (std::size_t i = 0; i < n; ++i) cur[i] = model.pi[i] * model.b(i, obs[0]);
    } else {
      auto prev = alpha.row(t - 1);
      std::fill(cur.begin(), cur.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double p = prev[i];
        if (p == 0.0) continue;
        auto arow = model.a.row(i);
        for (std::size_t j = 0; j < n; ++j) cur[j] += p * arow[j];
      }
      for (std::size_t j = 0; j < n; ++j) cur[j] *= model.b(j, obs[t]);
    }
    double sum = 0.0;
    for (double v : cur) sum += v;
    if (!(sum > 0.0) || !std::isfinite(sum)) {
      throw Error(ErrorKind::NumericFailure,
                  "observation sequence has zero probability at t=" + std::to_string(t));
    }
    scales[t] = 1.0 / sum;
    for (auto& v : cur) v *= scales[t];
    log_lik += std::log(sum);
  }
  return log_lik;
}

}  // namespace

double log_likelihood(const HmmModel& model, std::span<const Symbol> obs) {
  validate(model, obs);
  Matrix alpha;
  std::vector<double> scales;
  return forward_pass(model, obs, alpha, scales);
}

Lattice forward_backward(const HmmModel& model, std::span<const Symbol> obs) {
  validate(model, obs);
  Lattice out;
  out.log_likelihood = forward_pass(model, obs, out.alpha, out.scales);

  const std::size_t n = model.n;
  const std::size_t T = obs.size();
  out.beta = Matrix(T, n);
  for (std::size_t i = 0; i < n; ++i) out.beta(T - 1, i) = out.scales[T - 1];
  std::vector<double> w(n);
  for (std::size_t t = T - 1; t-- > 0;) {
    auto next = out.beta.row(t + 1);
    for (std::size_t j = 0; j < n; ++j) w[j] = model.b(j, obs[t + 1]) * next[j];
    auto cur = out.beta.row(t);
    for (std::size_t i = 0; i < n; ++i) {
      auto arow = model.a.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += arow[j] * w[j];
      cur[i] = s * out.scales[t];
    }
  }
  return out;
}

Matrix posteriors(const Lattice& lattice) {
  const std::size_t T = lattice.alpha.rows();
  const std::size_t n = lattice.alpha.cols();
  Matrix gamma(T, n);
  for (std::size_t t = 0; t < T; ++t) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      gamma(t, i) = lattice.alpha(t, i) * lattice.beta(t, i);
      sum += gamma(t, i);
    }
    if (sum > 0.0) {
      for (std::size_t i = 0; i < n; ++i) gamma(t, i) /= sum;
    }
  }
  return gamma;
}

StateSequence posterior_decode(const HmmModel& model, std::span<const Symbol> obs) {
  const Matrix gamma = posteriors(forward_backward(model, obs));
  StateSequence out;
  out.states.resize(gamma.rows());
  for (std::size_t t = 0; t < gamma.rows(); ++t) {
    auto row = gamma.row(t);
    // max_element returns the first maximum, which is the tie rule we want.
    out.states[t] = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

namespace {

HmmModel reestimate(const HmmModel& model, std::span<const Symbol> obs, const Lattice& lat) {
  const std::size_t n = model.n;
  const std::size_t m = model.m;
  const std::size_t T = obs.size();

  Matrix xi_sum(n, n);
  std::vector<double> gamma_head(n, 0.0);  // sum over t < T-1
  Matrix emit(n, m);
  std::vector<double> gamma_row(n);
  std::vector<double> w(n);
  HmmModel next = model;

  for (std::size_t t = 0; t < T; ++t) {
    double g_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      gamma_row[i] = lat.alpha(t, i) * lat.beta(t, i);
      g_sum += gamma_row[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      gamma_row[i] /= g_sum;
      emit(i, obs[t]) += gamma_row[i];
    }
    if (t == 0) next.pi = gamma_row;
    if (t + 1 == T) break;

    for (std::size_t i = 0; i < n; ++i) gamma_head[i] += gamma_row[i];
    for (std::size_t j = 0; j < n; ++j) w[j] = model.b(j, obs[t + 1]) * lat.beta(t + 1, j);
    double xi_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ai = lat.alpha(t, i);
      auto arow = model.a.row(i);
      for (std::size_t j = 0; j < n; ++j) xi_total += ai * arow[j] * w[j];
    }
    const double inv = 1.0 / xi_total;
    for (std::size_t i = 0; i < n; ++i) {
      const double ai = lat.alpha(t, i) * inv;
      auto arow = model.a.row(i);
      auto xrow = xi_sum.row(i);
      for (std::size_t j = 0; j < n; ++j) xrow[j] += ai * arow[j] * w[j];
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (gamma_head[i] > 0.0) {
      double row_total = 0.0;
      for (std::size_t j = 0; j < n; ++j) row_total += xi_sum(i, j);
      for (std::size_t j = 0; j < n; ++j) next.a(i, j) = xi_sum(i, j) / row_total;
    }
    double e_total = 0.0;
    for (std::size_t k = 0; k < m; ++k) e_total += emit(i, k);
    if (e_total > 0.0) {
      for (std::size_t k = 0; k < m; ++k) next.b(i, k) = emit(i, k) / e_total;
    }
    apply_floor(next.b.row(i), kEmissionFloor);
  }
  return next;
}

}  // namespace

HmmModel baum_welch(HmmModel model, std::span<const Symbol> obs, const BaumWelchOptions& options) {
  if (obs.size() < 2) throw Error(ErrorKind::DegenerateSequence, "Baum-Welch needs at least 2 symbols");
  validate(model, obs);
  const double T = static_cast<double>(obs.size());

  TrainLog log;
  Lattice lat = forward_backward(model, obs);
  log.history.push_back(lat.log_likelihood / T);
  while (log.iterations < options.max_iterations) {
    model = reestimate(model, obs, lat);
    lat = forward_backward(model, obs);
    log.history.push_back(lat.log_likelihood / T);
    ++log.iterations;
    const double gain = log.history.back() - log.history[log.history.size() - 2];
    if (log.iterations >= options.min_iterations && gain < options.epsilon) {
      log.converged = true;
      break;
    }
  }
  model.train_log = std::move(log);
  return model;
}

std::uint64_t family_seed(std::uint64_t seed, const std::string& family) {
  return seed ^ fnv1a(family);
}

std::map<std::string, HmmModel> train_family_models(const corpus::Corpus& train, std::size_t n,
                                                    std::uint64_t seed,
                                                    const BaumWelchOptions& options,
                                                    double jitter) {
  if (train.samples.empty() || train.families.empty()) {
    throw Error(ErrorKind::EmptyCorpus, "no training samples");
  }
  if (!train.vocabulary) throw Error(ErrorKind::InvalidConfig, "training corpus is not encoded");
  const std::size_t m = train.vocabulary->symbol_count();
  const std::size_t k = train.families.size();

  std::vector<std::vector<Symbol>> sequences(k);
  for (const auto& s : train.samples) {
    auto& seq = sequences[train.family_index(s.family)];
    seq.insert(seq.end(), s.tokens.begin(), s.tokens.end());
  }
  for (std::size_t f = 0; f < k; ++f) {
    if (sequences[f].empty()) throw Error(ErrorKind::EmptyCorpus, "family " + train.families[f] + " has no samples");
  }

  std::vector<HmmModel> models(k);
  std::vector<std::exception_ptr> errors(k);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t f = 0; f < k; ++f) {
    try {
      const auto s = family_seed(seed, train.families[f]);
      auto model = init_model(n, m, s, jitter);
      model.family = train.families[f];
      models[f] = baum_welch(std::move(model), sequences[f], options);
    } catch (...) {
      errors[f] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::map<std::string, HmmModel> out;
  for (std::size_t f = 0; f < k; ++f) out.emplace(train.families[f], std::move(models[f]));
  return out;
}

namespace {

nlohmann::json matrix_json(const Matrix& mat) {
  auto j = nlohmann::json::array();
  for (std::size_t r = 0; r < mat.rows(); ++r) {
    auto row = mat.row(r);
    j.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return j;
}

Matrix matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols) {
  if (j.size() != rows) throw Error(ErrorKind::InvalidDimension, "matrix row count mismatch");
  Matrix mat(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = j[r].get<std::vector<double>>();
    if (row.size() != cols) throw Error(ErrorKind::InvalidDimension, "matrix column count mismatch");
    std::copy(row.begin(), row.end(), mat.row(r).begin());
  }
  return mat;
}

}  // namespace

nlohmann::json to_json(const HmmModel& model, const std::vector<std::string>& vocab) {
  return {{"family", model.family},
          {"n", model.n},
          {"m", model.m},
          {"seed", model.seed},
          {"pi", model.pi},
          {"a", matrix_json(model.a)},
          {"b", matrix_json(model.b)},
          {"vocab", vocab},
          {"train_log",
           {{"iterations", model.train_log.iterations},
            {"history", model.train_log.history},
            {"converged", model.train_log.converged}}}};
}

HmmModel model_from_json(const nlohmann::json& j) {
  HmmModel model;
  model.family = j.at("family").get<std::string>();
  model.n = j.at("n").get<std::size_t>();
  model.m = j.at("m").get<std::size_t>();
  model.seed = j.at("seed").get<std::uint64_t>();
  model.pi = j.at("pi").get<std::vector<double>>();
  model.a = matrix_from_json(j.at("a"), model.n, model.n);
  model.b = matrix_from_json(j.at("b"), model.n, model.m);
  const auto& log = j.at("train_log");
  model.train_log.iterations = log.at("iterations").get<std::size_t>();
  model.train_log.history = log.at("history").get<std::vector<double>>();
  model.train_log.converged = log.at("converged").get<bool>();
  return model;
}

}  // namespace hmmcnn::hmm
