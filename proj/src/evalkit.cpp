#include "ltsm/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "ltsm/error.hpp"

namespace ltsm {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(Errc::ShapeError, "shapes " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                      " and " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) +
                                      " differ");
  if (a.size() == 0) throw Error(Errc::ShapeError, "empty matrices");
}

constexpr double kNormEps = 1e-5;

}  // namespace

double mae(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target);
  return (pred - target).cwiseAbs().sum() / static_cast<double>(pred.size());
}

double mse(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target);
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

Matrix PersistenceForecaster::predict(const Window& window, const PromptMatrix*) const {
  return window.lookback.row(window.lookback.rows() - 1).replicate(static_cast<Eigen::Index>(horizon_), 1);
}

DirectLinearForecaster DirectLinearForecaster::fit(const Corpus& corpus, std::size_t lookback_len,
                                                   std::size_t horizon, double ridge) {
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, "no windows to fit the linear baseline");
  const auto e = static_cast<Eigen::Index>(lookback_len);
  const auto q = static_cast<Eigen::Index>(horizon);
  Matrix xtx = Matrix::Zero(e + 1, e + 1);
  Matrix xty = Matrix::Zero(e + 1, q);
  Vector x(e + 1);
  std::size_t samples = 0;
  for (const auto& entry : corpus.entries()) {
    const auto& w = entry.window;
    if (w.lookback.rows() != e || w.target.rows() != q)
      throw Error(Errc::ShapeError, "window does not match lookback/horizon");
    for (Eigen::Index ch = 0; ch < w.lookback.cols(); ++ch) {
      const double mu = w.lookback.col(ch).mean();
      const double sigma = std::sqrt((w.lookback.col(ch).array() - mu).square().mean() + kNormEps);
      x.head(e) = (w.lookback.col(ch).array() - mu) / sigma;
      x(e) = 1.0;
      const RowVector y = ((w.target.col(ch).array() - mu) / sigma).matrix().transpose();
      xtx.selfadjointView<Eigen::Lower>().rankUpdate(x);
      xty.noalias() += x * y;
      ++samples;
    }
  }
  xtx.triangularView<Eigen::StrictlyUpper>() = xtx.transpose();
  xtx.diagonal().head(e).array() += ridge * static_cast<double>(samples);
  DirectLinearForecaster f;
  f.weights_ = xtx.ldlt().solve(xty);
  if (!f.weights_.allFinite()) throw NumericalError(0, "linear baseline solve failed");
  return f;
}

Matrix DirectLinearForecaster::predict(const Window& window, const PromptMatrix*) const {
  const Eigen::Index e = weights_.rows() - 1;
  if (window.lookback.rows() != e) throw Error(Errc::ShapeError, "lookback length mismatch");
  Matrix out(weights_.cols(), window.lookback.cols());
  Vector x(e + 1);
  for (Eigen::Index ch = 0; ch < window.lookback.cols(); ++ch) {
    const double mu = window.lookback.col(ch).mean();
    const double sigma = std::sqrt((window.lookback.col(ch).array() - mu).square().mean() + kNormEps);
    x.head(e) = (window.lookback.col(ch).array() - mu) / sigma;
    x(e) = 1.0;
    out.col(ch) = ((weights_.transpose() * x).array() * sigma + mu).matrix();
  }
  return out;
}

Matrix BackboneForecaster::predict(const Window& window, const PromptMatrix* prompt) const {
  if (prompt == nullptr || prompt->rows() == 0) {
    if (model_.config().prompt_len != 0) throw Error(Errc::ShapeError, "model expects prompt rows");
    return model_.forward(window.lookback);
  }
  return model_.forward(assemble_input(*prompt, window.lookback));
}

MetricCell evaluate_windows(const Forecaster& model, const std::vector<Window>& windows,
                            const PromptMatrix* prompt) {
  if (windows.empty()) throw Error(Errc::SeriesTooShort, "no evaluation windows");
  double se = 0.0, ae = 0.0;
  std::size_t n = 0;
  for (const auto& w : windows) {
    const Matrix pred = model.predict(w, prompt);
    require_same_shape(pred, w.target);
    const Matrix diff = pred - w.target;
    se += diff.squaredNorm();
    ae += diff.cwiseAbs().sum();
    n += static_cast<std::size_t>(diff.size());
  }
  return MetricCell{se / static_cast<double>(n), ae / static_cast<double>(n)};
}

void MetricTable::set(const std::string& dataset, std::size_t horizon, const std::string& method,
                      MetricCell cell) {
  if (!(std::isfinite(cell.mse) && std::isfinite(cell.mae) && cell.mse >= 0.0 && cell.mae >= 0.0))
    throw Error(Errc::NumericalError, "metric cell for " + dataset + "/" + std::to_string(horizon) + "/" +
                                          method + " is not finite and non-negative");
  if (std::find(datasets_.begin(), datasets_.end(), dataset) == datasets_.end()) datasets_.push_back(dataset);
  if (std::find(methods_.begin(), methods_.end(), method) == methods_.end()) methods_.push_back(method);
  cells_[{dataset, horizon, method}] = cell;
}

std::optional<MetricCell> MetricTable::get(const std::string& dataset, std::size_t horizon,
                                           const std::string& method) const {
  const auto it = cells_.find({dataset, horizon, method});
  if (it == cells_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> MetricTable::horizons(const std::string& dataset) const {
  std::set<std::size_t> hs;
  for (const auto& [key, cell] : cells_)
    if (std::get<0>(key) == dataset) hs.insert(std::get<1>(key));
  return {hs.begin(), hs.end()};
}

MetricCell MetricTable::average(const std::string& dataset, const std::string& method) const {
  MetricCell avg;
  std::size_t n = 0;
  for (std::size_t h : horizons(dataset)) {
    const auto cell = get(dataset, h, method);
    if (!cell) continue;
    avg.mse += cell->mse;
    avg.mae += cell->mae;
    ++n;
  }
  if (n == 0) throw Error(Errc::InvalidArgument, "no cells for " + dataset + "/" + method);
  avg.mse /= static_cast<double>(n);
  avg.mae /= static_cast<double>(n);
  return avg;
}

void MetricTable::merge(const MetricTable& other) {
  for (const auto& [key, cell] : other.cells_) set(std::get<0>(key), std::get<1>(key), std::get<2>(key), cell);
}

std::string MetricTable::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "dataset,horizon,method,mse,mae\n";
  for (const auto& ds : datasets_) {
    for (std::size_t h : horizons(ds))
      for (const auto& m : methods_)
        if (const auto c = get(ds, h, m)) out << ds << ',' << h << ',' << m << ',' << c->mse << ',' << c->mae << '\n';
    for (const auto& m : methods_) {
      const auto hs = horizons(ds);
      if (std::none_of(hs.begin(), hs.end(), [&](std::size_t h) { return get(ds, h, m).has_value(); })) continue;
      const auto a = average(ds, m);
      out << ds << ",avg," << m << ',' << a.mse << ',' << a.mae << '\n';
    }
  }
  return out.str();
}

nlohmann::json MetricTable::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [key, cell] : cells_)
    rows.push_back({{"dataset", std::get<0>(key)},
                    {"horizon", std::get<1>(key)},
                    {"method", std::get<2>(key)},
                    {"mse", cell.mse},
                    {"mae", cell.mae}});
  return {{"datasets", datasets_}, {"methods", methods_}, {"cells", rows}};
}

void evaluate(MetricTable& table, const std::string& dataset, const std::string& method,
              const std::vector<const Forecaster*>& per_horizon, const TimeSeries& test_split,
              std::size_t lookback_len, const PromptMatrix* prompt, std::size_t stride) {
  for (const Forecaster* f : per_horizon) {
    const auto windows = make_windows(test_split, lookback_len, f->horizon(), stride);
    table.set(dataset, f->horizon(), method, evaluate_windows(*f, windows, prompt));
  }
}

std::vector<Mark> mark_row(const std::vector<double>& values) {
  std::vector<double> distinct(values);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<Mark> marks(values.size(), Mark::None);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!distinct.empty() && values[i] == distinct[0]) marks[i] = Mark::Best;
    else if (distinct.size() > 1 && values[i] == distinct[1]) marks[i] = Mark::Second;
  }
  return marks;
}

namespace {

std::string fmt_cell(double v, Mark m) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  switch (m) {
    case Mark::Best: return std::string("**") + buf + "**";
    case Mark::Second: return std::string("<u>") + buf + "</u>";
    case Mark::None: break;
  }
  return buf;
}

}  // namespace

Report render_report(const std::vector<std::pair<std::string, MetricTable>>& tables) {
  std::ostringstream md, csv;
  csv.precision(17);
  csv << "table,dataset,horizon,method,mse,mae\n";
  md << "# Forecasting results\n\nLowest error per row in **bold**, second lowest <u>underlined</u>.\n";
  for (const auto& [title, table] : tables) {
    const auto& methods = table.methods();
    md << "\n## " << title << "\n\n| Dataset | Horizon |";
    for (const auto& m : methods) md << ' ' << m << " MSE | " << m << " MAE |";
    md << "\n|---|---|";
    for (std::size_t i = 0; i < methods.size(); ++i) md << "---|---|";
    md << '\n';
    std::vector<std::size_t> first_count(methods.size(), 0);
    auto emit_row = [&](const std::string& ds, const std::string& label, const std::vector<MetricCell>& cells) {
      std::vector<double> mses, maes;
      for (const auto& c : cells) {
        mses.push_back(c.mse);
        maes.push_back(c.mae);
      }
      const auto mm = mark_row(mses), am = mark_row(maes);
      md << "| " << ds << " | " << label << " |";
      for (std::size_t i = 0; i < cells.size(); ++i) {
        md << ' ' << fmt_cell(cells[i].mse, mm[i]) << " | " << fmt_cell(cells[i].mae, am[i]) << " |";
        first_count[i] += (mm[i] == Mark::Best) + (am[i] == Mark::Best);
        csv << title << ',' << ds << ',' << label << ',' << methods[i] << ',' << cells[i].mse << ','
            << cells[i].mae << '\n';
      }
      md << '\n';
    };
    for (const auto& ds : table.datasets()) {
      for (std::size_t h : table.horizons(ds)) {
        std::vector<MetricCell> cells;
        bool complete = true;
        for (const auto& m : methods) {
          const auto c = table.get(ds, h, m);
          complete = complete && c.has_value();
          cells.push_back(c.value_or(MetricCell{}));
        }
        if (complete) emit_row(ds, std::to_string(h), cells);
      }
      std::vector<MetricCell> avg;
      for (const auto& m : methods) avg.push_back(table.average(ds, m));
      emit_row(ds, "avg", avg);
    }
    md << "| 1st Count | |";
    for (std::size_t c : first_count) md << ' ' << c << " | |";
    md << '\n';
  }
  return Report{md.str(), csv.str()};
}

}  // namespace ltsm
