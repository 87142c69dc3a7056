#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "ltsm/backbone.hpp"
#include "ltsm/prompt.hpp"
#include "ltsm/series.hpp"

namespace ltsm {

double mae(const Matrix& pred, const Matrix& target);
double mse(const Matrix& pred, const Matrix& target);

/// Anything that maps a window (plus its dataset's prompt) to a Q x d forecast.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual std::size_t horizon() const = 0;
  virtual Matrix predict(const Window& window, const PromptMatrix* prompt) const = 0;
};

/// Repeats the last observed row across the horizon.
class PersistenceForecaster final : public Forecaster {
 public:
  explicit PersistenceForecaster(std::size_t horizon) : horizon_(horizon) {}
  std::size_t horizon() const override { return horizon_; }
  Matrix predict(const Window& window, const PromptMatrix* prompt) const override;

 private:
  std::size_t horizon_;
};

/// Channel-independent ridge regression from the instance-normalized lookback
/// to the normalized horizon, fitted in closed form.
class DirectLinearForecaster final : public Forecaster {
 public:
  static DirectLinearForecaster fit(const Corpus& corpus, std::size_t lookback_len, std::size_t horizon,
                                    double ridge = 1e-4);
  std::size_t horizon() const override { return static_cast<std::size_t>(weights_.cols()); }
  Matrix predict(const Window& window, const PromptMatrix* prompt) const override;

 private:
  Matrix weights_;  // (E + 1) x Q, last row is the bias
};

class BackboneForecaster final : public Forecaster {
 public:
  explicit BackboneForecaster(const Backbone& model) : model_(model) {}
  std::size_t horizon() const override { return model_.config().horizon; }
  Matrix predict(const Window& window, const PromptMatrix* prompt) const override;

 private:
  const Backbone& model_;
};

struct MetricCell {
  double mse = 0.0;
  double mae = 0.0;
};

/// Flat mean over every window, step and channel.
MetricCell evaluate_windows(const Forecaster& model, const std::vector<Window>& windows,
                            const PromptMatrix* prompt = nullptr);

/// MSE/MAE keyed by (dataset, horizon) rows and method columns. The average
/// row is derived from the horizon rows on demand, never stored.
class MetricTable {
 public:
  void set(const std::string& dataset, std::size_t horizon, const std::string& method, MetricCell cell);
  std::optional<MetricCell> get(const std::string& dataset, std::size_t horizon, const std::string& method) const;
  /// Mean over the dataset's horizon rows for one method.
  MetricCell average(const std::string& dataset, const std::string& method) const;
  void merge(const MetricTable& other);

  const std::vector<std::string>& datasets() const noexcept { return datasets_; }
  const std::vector<std::string>& methods() const noexcept { return methods_; }
  std::vector<std::size_t> horizons(const std::string& dataset) const;
  bool empty() const noexcept { return cells_.empty(); }

  /// dataset,horizon,method,mse,mae with 17 significant digits; avg rows included.
  std::string to_csv() const;
  nlohmann::json to_json() const;

 private:
  std::vector<std::string> datasets_;
  std::vector<std::string> methods_;
  std::map<std::tuple<std::string, std::size_t, std::string>, MetricCell> cells_;
};

/// Evaluates one forecaster per horizon on the test split of one dataset and
/// records the cells under `method`.
void evaluate(MetricTable& table, const std::string& dataset, const std::string& method,
              const std::vector<const Forecaster*>& per_horizon, const TimeSeries& test_split,
              std::size_t lookback_len, const PromptMatrix* prompt = nullptr, std::size_t stride = 1);

enum class Mark { None, Best, Second };

/// Dense ranking of a row: every cell equal to the lowest value is Best, every
/// cell equal to the next distinct value is Second.
std::vector<Mark> mark_row(const std::vector<double>& values);

struct Report {
  std::string markdown;
  std::string csv;
};

Report render_report(const std::vector<std::pair<std::string, MetricTable>>& tables);

}  // namespace ltsm
