#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hmmcnn/matrix.hpp"
#include "hmmcnn/nn/cnn.hpp"
#include "json.hpp"

namespace hmmcnn::evalreport {

struct ConfusionMatrix {
  std::size_t k = 0;
  std::vector<std::size_t> counts;  // k x k, rows = true, columns = predicted

  std::size_t operator()(std::size_t truth, std::size_t pred) const { return counts[truth * k + pred]; }
  std::size_t total() const;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct Metrics {
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
};

ConfusionMatrix confusion(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                          std::size_t k);
Matrix normalize_rows(const ConfusionMatrix& cm);
Metrics metrics(const ConfusionMatrix& cm);

// One cell of the hyperparameter grid.
struct GridConfig {
  std::size_t n = 20;
  std::size_t l = 112;
  std::vector<nn::ConvBlockSpec> base = nn::CnnSpec::default_base();
  nn::OptimizerKind optimizer = nn::OptimizerKind::nadam;
  double learning_rate = 1e-3;
  nn::LossKind loss = nn::LossKind::categorical_crossentropy;
};

nlohmann::json to_json(const GridConfig& config);
// Canonical serialization used for tie-breaking.
std::string serialize(const GridConfig& config);

struct GridSpec {
  std::vector<std::size_t> n{20};
  std::vector<std::size_t> l{112};
  std::vector<std::vector<nn::ConvBlockSpec>> base{nn::CnnSpec::default_base()};
  std::vector<nn::OptimizerKind> optimizer{nn::OptimizerKind::nadam};
  std::vector<double> learning_rate{1e-3};
  std::vector<nn::LossKind> loss{nn::LossKind::categorical_crossentropy};

  std::size_t size() const;
  // Cartesian product, n outermost and loss innermost.
  std::vector<GridConfig> cells() const;
};

struct CellOutcome {
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  double train_seconds = 0.0;
  std::optional<double> test_seconds_per_sample;
};

struct GridRow {
  GridConfig config;
  CellOutcome outcome;
};

struct GridResult {
  std::vector<GridRow> rows;  // evaluation order
  std::size_t best = 0;
};

using GridRunner = std::function<CellOutcome(const GridConfig&)>;

GridResult grid_search(const GridSpec& grid, const GridRunner& runner);
nlohmann::json to_json(const GridResult& result);
// Rows ranked by accuracy, best first.
std::string grid_table(const GridResult& result);

struct StageClock {
  std::string name;
  double seconds = 0.0;
  bool test = false;  // counts toward test time rather than training time
};

struct TimingReport {
  std::vector<StageClock> stages;
  double total_train_seconds = 0.0;
  double total_test_seconds = 0.0;
  std::optional<double> test_seconds_per_sample;
};

TimingReport timing_report(const std::vector<StageClock>& stage_clocks, std::size_t test_count);
nlohmann::json to_json(const TimingReport& report);

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Report body: metrics, both confusion forms, config and seed.
nlohmann::json report_json(const Metrics& m, const ConfusionMatrix& cm, const std::vector<std::string>& families,
                           const nlohmann::json& config, std::uint64_t seed);
// Aligned plain-text rendering of metrics and both confusion matrices.
std::string report_table(const Metrics& m, const ConfusionMatrix& cm, const std::vector<std::string>& families);

}  // namespace hmmcnn::evalreport
