#include "hmmcnn/evalreport.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "hmmcnn/error.hpp"

namespace hmmcnn::evalreport {

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

ConfusionMatrix confusion(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                          std::size_t k) {
  if (truth.size() != predicted.size()) throw Error(ErrorKind::LengthMismatch, "label sequences differ in length");
  ConfusionMatrix cm{k, std::vector<std::size_t>(k * k, 0)};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= k || predicted[i] >= k) {
      throw Error(ErrorKind::LabelOutOfRange, "label at position " + std::to_string(i) + " >= " + std::to_string(k));
    }
    ++cm.counts[truth[i] * k + predicted[i]];
  }
  return cm;
}

Matrix normalize_rows(const ConfusionMatrix& cm) {
  Matrix out(cm.k, cm.k);
  for (std::size_t r = 0; r < cm.k; ++r) {
    std::size_t sum = 0;
    for (std::size_t c = 0; c < cm.k; ++c) sum += cm(r, c);
    if (sum == 0) continue;
    for (std::size_t c = 0; c < cm.k; ++c) out(r, c) = static_cast<double>(cm(r, c)) / static_cast<double>(sum);
  }
  return out;
}

Metrics metrics(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) throw Error(ErrorKind::EmptyMatrix, "confusion matrix has no samples");
  Metrics m;
  std::size_t trace = 0;
  double weighted = 0.0;
  for (std::size_t i = 0; i < cm.k; ++i) {
    std::size_t row = 0, col = 0;
    for (std::size_t j = 0; j < cm.k; ++j) {
      row += cm(i, j);
      col += cm(j, i);
    }
    const std::size_t tp = cm(i, i);
    trace += tp;
    ClassMetrics c;
    c.support = row;
    c.precision = col == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(col);
    c.recall = row == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(row);
    c.f1 = c.precision + c.recall == 0.0 ? 0.0 : 2.0 * c.precision * c.recall / (c.precision + c.recall);
    weighted += static_cast<double>(c.support) * c.f1;
    m.per_class.push_back(c);
  }
  m.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  m.weighted_f1 = weighted / static_cast<double>(total);
  return m;
}

nlohmann::json to_json(const GridConfig& config) {
  return {{"n", config.n},
          {"l", config.l},
          {"base", nn::to_json(config.base)},
          {"optimizer", std::string(nn::to_string(config.optimizer))},
          {"learning_rate", config.learning_rate},
          {"loss", std::string(nn::to_string(config.loss))}};
}

std::string serialize(const GridConfig& config) { return to_json(config).dump(); }

std::size_t GridSpec::size() const {
  return n.size() * l.size() * base.size() * optimizer.size() * learning_rate.size() * loss.size();
}

std::vector<GridConfig> GridSpec::cells() const {
  std::vector<GridConfig> out;
  out.reserve(size());
  for (auto vn : n)
    for (auto vl : l)
      for (const auto& vb : base)
        for (auto vo : optimizer)
          for (auto vr : learning_rate)
            for (auto vloss : loss) out.push_back({vn, vl, vb, vo, vr, vloss});
  return out;
}

GridResult grid_search(const GridSpec& grid, const GridRunner& runner) {
  if (grid.size() == 0) throw Error(ErrorKind::EmptyGrid, "grid has an empty axis");
  GridResult result;
  for (const auto& cell : grid.cells()) result.rows.push_back({cell, runner(cell)});
  for (std::size_t i = 1; i < result.rows.size(); ++i) {
    const auto& cand = result.rows[i];
    const auto& best = result.rows[result.best];
    if (cand.outcome.accuracy > best.outcome.accuracy ||
        (cand.outcome.accuracy == best.outcome.accuracy && serialize(cand.config) < serialize(best.config))) {
      result.best = i;
    }
  }
  return result;
}

nlohmann::json to_json(const GridResult& result) {
  auto rows = nlohmann::json::array();
  for (const auto& r : result.rows) {
    nlohmann::json row = {{"config", to_json(r.config)},
                          {"accuracy", r.outcome.accuracy},
                          {"weighted_f1", r.outcome.weighted_f1},
                          {"train_seconds", r.outcome.train_seconds}};
    row["test_seconds_per_sample"] =
        r.outcome.test_seconds_per_sample ? nlohmann::json(*r.outcome.test_seconds_per_sample) : nlohmann::json();
    rows.push_back(row);
  }
  return {{"rows", rows}, {"best", result.best}};
}

std::string grid_table(const GridResult& result) {
  std::vector<std::size_t> order(result.rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return result.rows[a].outcome.accuracy > result.rows[b].outcome.accuracy;
  });
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-4s %4s %5s %-14s %-10s %-28s %8s %8s %10s\n", "rank", "N", "L", "base",
                "optimizer", "loss", "lr", "acc", "f1");
  out << line;
  std::size_t rank = 1;
  for (auto i : order) {
    const auto& r = result.rows[i];
    std::string base;
    for (const auto& b : r.config.base) base += (base.empty() ? "" : "-") + std::to_string(b.filters);
    std::snprintf(line, sizeof line, "%-4zu %4zu %5zu %-14s %-10s %-28s %8.4g %8.4f %10.4f%s\n", rank++, r.config.n,
                  r.config.l, base.c_str(), std::string(nn::to_string(r.config.optimizer)).c_str(),
                  std::string(nn::to_string(r.config.loss)).c_str(), r.config.learning_rate, r.outcome.accuracy,
                  r.outcome.weighted_f1, i == result.best ? "  *" : "");
    out << line;
  }
  return out.str();
}

TimingReport timing_report(const std::vector<StageClock>& stage_clocks, std::size_t test_count) {
  TimingReport report;
  report.stages = stage_clocks;
  for (const auto& s : stage_clocks) (s.test ? report.total_test_seconds : report.total_train_seconds) += s.seconds;
  if (test_count > 0) report.test_seconds_per_sample = report.total_test_seconds / static_cast<double>(test_count);
  return report;
}

nlohmann::json to_json(const TimingReport& report) {
  auto stages = nlohmann::json::array();
  for (const auto& s : report.stages) {
    stages.push_back({{"name", s.name}, {"seconds", s.seconds}, {"kind", s.test ? "test" : "train"}});
  }
  nlohmann::json j = {{"stages", stages},
                      {"total_train_seconds", report.total_train_seconds},
                      {"total_test_seconds", report.total_test_seconds}};
  j["test_seconds_per_sample"] =
      report.test_seconds_per_sample ? nlohmann::json(*report.test_seconds_per_sample) : nlohmann::json();
  return j;
}

nlohmann::json report_json(const Metrics& m, const ConfusionMatrix& cm, const std::vector<std::string>& families,
                           const nlohmann::json& config, std::uint64_t seed) {
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t i = 0; i < m.per_class.size(); ++i) {
    const auto& c = m.per_class[i];
    per_class[families.at(i)] = {{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
  }
  auto counts = nlohmann::json::array();
  auto normalized = nlohmann::json::array();
  const auto norm = normalize_rows(cm);
  for (std::size_t r = 0; r < cm.k; ++r) {
    counts.push_back(std::vector<std::size_t>(cm.counts.begin() + static_cast<std::ptrdiff_t>(r * cm.k),
                                              cm.counts.begin() + static_cast<std::ptrdiff_t>((r + 1) * cm.k)));
    auto row = norm.row(r);
    normalized.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return {{"accuracy", m.accuracy},
          {"weighted_f1", m.weighted_f1},
          {"per_class", per_class},
          {"confusion", {{"families", families}, {"counts", counts}, {"normalized", normalized}}},
          {"config", config},
          {"seed", seed}};
}

std::string report_table(const Metrics& m, const ConfusionMatrix& cm, const std::vector<std::string>& families) {
  std::size_t width = 8;
  for (const auto& f : families) width = std::max(width, f.size() + 1);
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "accuracy     %.4f\nweighted F1  %.4f\n\n", m.accuracy, m.weighted_f1);
  out << buf;
  const int w = static_cast<int>(width);
  std::snprintf(buf, sizeof buf, "%-*s %9s %9s %9s %8s\n", w, "family", "precision", "recall", "f1", "support");
  out << buf;
  for (std::size_t i = 0; i < m.per_class.size(); ++i) {
    const auto& c = m.per_class[i];
    std::snprintf(buf, sizeof buf, "%-*s %9.4f %9.4f %9.4f %8zu\n", w, families[i].c_str(), c.precision, c.recall,
                  c.f1, c.support);
    out << buf;
  }
  auto header = [&](const char* title) {
    out << '\n' << title << '\n';
    std::snprintf(buf, sizeof buf, "%-*s", w, "actual");
    out << buf;
    for (const auto& f : families) {
      std::snprintf(buf, sizeof buf, " %*s", w, f.c_str());
      out << buf;
    }
    out << '\n';
  };
  header("confusion (counts)");
  for (std::size_t r = 0; r < cm.k; ++r) {
    std::snprintf(buf, sizeof buf, "%-*s", w, families[r].c_str());
    out << buf;
    for (std::size_t c = 0; c < cm.k; ++c) {
      std::snprintf(buf, sizeof buf, " %*zu", w, cm(r, c));
      out << buf;
    }
    out << '\n';
  }
  header("confusion (scaled)");
  const auto norm = normalize_rows(cm);
  for (std::size_t r = 0; r < cm.k; ++r) {
    std::snprintf(buf, sizeof buf, "%-*s", w, families[r].c_str());
    out << buf;
    for (std::size_t c = 0; c < cm.k; ++c) {
      std::snprintf(buf, sizeof buf, " %*.3f", w, norm(r, c));
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace hmmcnn::evalreport
