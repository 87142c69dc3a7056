#include "ltsm/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <unordered_map>

#include "ltsm/error.hpp"

namespace ltsm {

namespace {

double mean_of(std::span<const double> s) {
  return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

double variance_of(std::span<const double> s) {
  const double m = mean_of(s);
  double acc = 0.0;
  for (double v : s) acc += (v - m) * (v - m);
  return acc / static_cast<double>(s.size());
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Linear interpolation between order statistics (inclusive method).
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<double> diffs(std::span<const double> s) {
  std::vector<double> d(s.size() - 1);
  for (std::size_t i = 0; i + 1 < s.size(); ++i) d[i] = s[i + 1] - s[i];
  return d;
}

std::vector<double> abs_diffs(std::span<const double> s) {
  auto d = diffs(s);
  for (double& v : d) v = std::abs(v);
  return d;
}

std::vector<double> haar_detail(std::span<const double> s) {
  std::vector<double> d(s.size() / 2);
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = (s[2 * k] - s[2 * k + 1]) / std::sqrt(2.0);
  return d;
}

double sum_squares(std::span<const double> s) {
  double acc = 0.0;
  for (double v : s) acc += v * v;
  return acc;
}

double histogram_entropy(std::span<const double> s, std::size_t bins) {
  const auto [lo_it, hi_it] = std::minmax_element(s.begin(), s.end());
  const double lo = *lo_it, width = *hi_it - *lo_it;
  if (width == 0.0) return 0.0;
  std::vector<std::size_t> counts(bins, 0);
  for (double v : s) {
    auto b = static_cast<std::size_t>(std::floor((v - lo) / width * static_cast<double>(bins)));
    ++counts[std::min(b, bins - 1)];
  }
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(s.size());
    h -= p * std::log2(p);
  }
  return h;
}

using FeatureFn = std::function<double(std::span<const double>, const FeatureParams&)>;

struct FeatureDef {
  std::string name;
  std::size_t min_length;  // before the lag adjustment for autocorrelation
  FeatureFn fn;
};

const std::vector<FeatureDef>& registry() {
  static const std::vector<FeatureDef> defs = {
      {"autocorrelation", 2,
       [](std::span<const double> s, const FeatureParams& p) {
         double acc = 0.0;
         for (std::size_t i = p.lag; i < s.size(); ++i) acc += s[i] * s[i - p.lag];
         return acc;
       }},
      {"centroid", 1,
       [](std::span<const double> s, const FeatureParams&) {
         double num = 0.0, den = 0.0;
         for (std::size_t i = 0; i < s.size(); ++i) {
           num += static_cast<double>(i) * s[i] * s[i];
           den += s[i] * s[i];
         }
         return den == 0.0 ? 0.0 : num / den;
       }},
      {"max_diff", 2,
       [](std::span<const double> s, const FeatureParams&) {
         const auto d = diffs(s);
         return *std::max_element(d.begin(), d.end());
       }},
      {"mean_diff", 2,
       [](std::span<const double> s, const FeatureParams&) { return mean_of(diffs(s)); }},
      {"median_diff", 2,
       [](std::span<const double> s, const FeatureParams&) { return median_of(diffs(s)); }},
      {"max_abs_diff", 2,
       [](std::span<const double> s, const FeatureParams&) {
         const auto d = abs_diffs(s);
         return *std::max_element(d.begin(), d.end());
       }},
      {"mean_abs_diff", 2,
       [](std::span<const double> s, const FeatureParams&) { return mean_of(abs_diffs(s)); }},
      {"median_abs_diff", 2,
       [](std::span<const double> s, const FeatureParams&) { return median_of(abs_diffs(s)); }},
      {"distance", 2,
       [](std::span<const double> s, const FeatureParams&) {
         double acc = 0.0;
         for (double d : diffs(s)) acc += std::sqrt(1.0 + d * d);
         return acc;
       }},
      {"sum_abs_diff", 2,
       [](std::span<const double> s, const FeatureParams&) {
         const auto d = abs_diffs(s);
         return std::accumulate(d.begin(), d.end(), 0.0);
       }},
      {"total_energy", 1,
       [](std::span<const double> s, const FeatureParams&) {
         // Unit-spaced timestamps: t_T - t_0 = T - 1.
         return sum_squares(s) * static_cast<double>(s.size() - 1);
       }},
      {"entropy", 1,
       [](std::span<const double> s, const FeatureParams& p) { return histogram_entropy(s, p.bins); }},
      {"peak_to_peak", 1,
       [](std::span<const double> s, const FeatureParams&) {
         const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
         return std::abs(*hi - *lo);
       }},
      {"area_under_curve", 2,
       [](std::span<const double> s, const FeatureParams&) {
         double acc = 0.0;
         for (std::size_t i = 0; i + 1 < s.size(); ++i) acc += 0.5 * (s[i + 1] + s[i]);
         return acc;
       }},
      {"absolute_energy", 1,
       [](std::span<const double> s, const FeatureParams&) { return sum_squares(s); }},
      {"iqr", 1,
       [](std::span<const double> s, const FeatureParams&) {
         std::vector<double> v(s.begin(), s.end());
         std::sort(v.begin(), v.end());
         return quantile_sorted(v, 0.75) - quantile_sorted(v, 0.25);
       }},
      {"mean_abs_deviation", 1,
       [](std::span<const double> s, const FeatureParams&) {
         const double m = mean_of(s);
         double acc = 0.0;
         for (double v : s) acc += std::abs(v - m);
         return acc / static_cast<double>(s.size());
       }},
      {"median_abs_deviation", 1,
       [](std::span<const double> s, const FeatureParams&) {
         const double med = median_of(std::vector<double>(s.begin(), s.end()));
         std::vector<double> dev(s.size());
         for (std::size_t i = 0; i < s.size(); ++i) dev[i] = std::abs(s[i] - med);
         return median_of(std::move(dev));
       }},
      {"rms", 1,
       [](std::span<const double> s, const FeatureParams&) {
         return std::sqrt(sum_squares(s) / static_cast<double>(s.size()));
       }},
      {"std", 1, [](std::span<const double> s, const FeatureParams&) { return std::sqrt(variance_of(s)); }},
      {"var", 1, [](std::span<const double> s, const FeatureParams&) { return variance_of(s); }},
      {"wavelet_abs_mean", 2,
       [](std::span<const double> s, const FeatureParams&) { return std::abs(mean_of(haar_detail(s))); }},
      {"wavelet_std", 2,
       [](std::span<const double> s, const FeatureParams&) {
         return std::sqrt(variance_of(haar_detail(s)));
       }},
      {"wavelet_var", 2,
       [](std::span<const double> s, const FeatureParams&) { return variance_of(haar_detail(s)); }},
      {"skewness", 1,
       [](std::span<const double> s, const FeatureParams&) {
         const double m = mean_of(s);
         const double sd = std::sqrt(variance_of(s));
         if (sd == 0.0) return 0.0;
         double acc = 0.0;
         for (double v : s) acc += (v - m) * (v - m) * (v - m);
         return acc / (static_cast<double>(s.size()) * sd * sd * sd);
       }},
  };
  return defs;
}

bool is_pad(const std::string& name) { return name.rfind("pad_", 0) == 0; }

const FeatureDef& lookup(const std::string& name) {
  for (const auto& def : registry())
    if (def.name == name) return def;
  throw Error(Errc::UnknownFeature, "unknown feature '" + name + "'");
}

}  // namespace

std::vector<std::string> feature_names() {
  std::vector<std::string> names;
  for (const auto& def : registry()) names.push_back(def.name);
  return names;
}

std::size_t feature_min_length(const std::string& name, const FeatureParams& params) {
  if (is_pad(name)) return 1;
  const auto& def = lookup(name);
  if (def.name == "autocorrelation") return std::max<std::size_t>(2, params.lag + 1);
  return def.min_length;
}

double feature_value(const std::string& name, std::span<const double> s, const FeatureParams& params) {
  if (is_pad(name)) {
    if (s.empty()) throw Error(Errc::SeriesTooShort, name + " needs at least 1 sample");
    return 0.0;
  }
  const auto& def = lookup(name);
  const std::size_t need = feature_min_length(name, params);
  if (s.size() < need)
    throw Error(Errc::SeriesTooShort, name + " needs at least " + std::to_string(need) +
                                          " samples, got " + std::to_string(s.size()));
  if (name == "entropy" && params.bins < 1) throw Error(Errc::InvalidArgument, "entropy needs >= 1 bin");
  return def.fn(s, params);
}

FeatureCatalog::FeatureCatalog(std::string version, std::vector<FeatureDescriptor> features)
    : version_(std::move(version)), features_(std::move(features)) {
  std::set<std::string> seen;
  for (const auto& f : features_) {
    if (!is_pad(f.name)) lookup(f.name);
    if (!seen.insert(f.name).second)
      throw Error(Errc::InvalidArgument, "duplicate feature '" + f.name + "' in catalog");
  }
}

FeatureCatalog FeatureCatalog::canonical() {
  std::vector<FeatureDescriptor> f;
  for (const auto& def : registry()) f.push_back({def.name, {}});
  return FeatureCatalog("canonical-v1", std::move(f));
}

FeatureCatalog FeatureCatalog::padded(std::size_t slots) {
  auto base = canonical().features_;
  if (slots < base.size())
    throw Error(Errc::InvalidArgument, "cannot pad catalog to fewer than " +
                                           std::to_string(base.size()) + " slots");
  char buf[16];
  for (std::size_t k = base.size(); k < slots; ++k) {
    std::snprintf(buf, sizeof buf, "pad_%03zu", k);
    base.push_back({buf, {}});
  }
  return FeatureCatalog("canonical-v1-pad" + std::to_string(slots), std::move(base));
}

FeatureCatalog FeatureCatalog::preset(const std::string& name) {
  if (name == "canonical") return canonical();
  if (name == "prompt133") return padded(133);
  throw Error(Errc::InvalidArgument, "unknown catalog preset '" + name + "'");
}

nlohmann::json FeatureCatalog::to_json() const {
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& f : features_)
    feats.push_back({{"name", f.name}, {"params", {{"lag", f.params.lag}, {"bins", f.params.bins}}}});
  return {{"version", version_}, {"features", feats}};
}

FeatureCatalog FeatureCatalog::from_json(const nlohmann::json& j) {
  std::vector<FeatureDescriptor> feats;
  for (const auto& f : j.at("features")) {
    FeatureDescriptor d{f.at("name").get<std::string>(), {}};
    if (f.contains("params")) {
      d.params.lag = f["params"].value("lag", std::size_t{1});
      d.params.bins = f["params"].value("bins", std::size_t{10});
    }
    feats.push_back(std::move(d));
  }
  return FeatureCatalog(j.at("version").get<std::string>(), std::move(feats));
}

Matrix extract_features(const TimeSeries& ts, const FeatureCatalog& catalog) {
  const auto& values = ts.values();
  Matrix out(static_cast<Eigen::Index>(catalog.size()), values.cols());
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    const Vector column = values.col(j);
    const std::span<const double> s(column.data(), static_cast<std::size_t>(column.size()));
    for (std::size_t k = 0; k < catalog.size(); ++k) {
      const auto& f = catalog.features()[k];
      try {
        out(static_cast<Eigen::Index>(k), j) = feature_value(f.name, s, f.params);
      } catch (const Error& e) {
        throw Error(e.code(), "feature '" + f.name + "', variate '" + ts.variate_names()[j] +
                                  "' of '" + ts.name() + "': " + e.what());
      }
    }
  }
  return out;
}

StandardizationStats fit_standardizer(const std::vector<Matrix>& raw_features) {
  if (raw_features.empty()) throw Error(Errc::InvalidArgument, "no training features to pool");
  const Eigen::Index m = raw_features.front().rows();
  std::size_t n = 0;
  for (const auto& r : raw_features) {
    if (r.rows() != m) throw Error(Errc::ShapeError, "feature matrices disagree on slot count");
    n += static_cast<std::size_t>(r.cols());
  }
  if (n == 0) throw Error(Errc::InvalidArgument, "no training variates to pool");

  StandardizationStats st;
  st.mean = Vector::Zero(m);
  st.std = Vector::Zero(m);
  st.degenerate.assign(static_cast<std::size_t>(m), false);
  st.population = n;
  for (Eigen::Index k = 0; k < m; ++k) {
    double sum = 0.0, lo = raw_features.front()(k, 0), hi = lo;
    for (const auto& r : raw_features)
      for (Eigen::Index j = 0; j < r.cols(); ++j) {
        sum += r(k, j);
        lo = std::min(lo, r(k, j));
        hi = std::max(hi, r(k, j));
      }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& r : raw_features)
      for (Eigen::Index j = 0; j < r.cols(); ++j) ss += (r(k, j) - mean) * (r(k, j) - mean);
    st.mean(k) = mean;
    // Identical values are forced to std 0 so rounding in the mean cannot leak
    // a tiny nonzero spread into the prompt.
    st.std(k) = lo == hi ? 0.0 : std::sqrt(ss / static_cast<double>(n));
    st.degenerate[static_cast<std::size_t>(k)] =
        st.std(k) <= 1e-12 * std::max(1.0, std::abs(mean));
  }
  return st;
}

nlohmann::json StandardizationStats::to_json() const {
  nlohmann::json slots = nlohmann::json::array();
  for (Eigen::Index k = 0; k < mean.size(); ++k)
    slots.push_back({{"mean", mean(k)}, {"std", std(k)}, {"degenerate", bool(degenerate[k])}});
  return {{"population", population}, {"slots", slots}};
}

StandardizationStats StandardizationStats::from_json(const nlohmann::json& j) {
  StandardizationStats st;
  const auto& slots = j.at("slots");
  const auto m = static_cast<Eigen::Index>(slots.size());
  st.mean = Vector(m);
  st.std = Vector(m);
  st.population = j.value("population", std::size_t{0});
  for (Eigen::Index k = 0; k < m; ++k) {
    st.mean(k) = slots[k].at("mean").get<double>();
    st.std(k) = slots[k].at("std").get<double>();
    st.degenerate.push_back(slots[k].at("degenerate").get<bool>());
  }
  return st;
}

PromptMatrix standardize(const Matrix& raw, const StandardizationStats& stats,
                         const std::string& catalog_version) {
  if (static_cast<std::size_t>(raw.rows()) != stats.size())
    throw Error(Errc::ShapeError, "raw features have " + std::to_string(raw.rows()) +
                                      " slots, stats have " + std::to_string(stats.size()));
  Matrix out(raw.rows(), raw.cols());
  for (Eigen::Index k = 0; k < raw.rows(); ++k)
    for (Eigen::Index j = 0; j < raw.cols(); ++j)
      out(k, j) = stats.degenerate[static_cast<std::size_t>(k)]
                      ? 0.0
                      : (raw(k, j) - stats.mean(k)) / stats.std(k);
  return PromptMatrix{std::move(out), catalog_version};
}

Matrix assemble_input(const PromptMatrix& prompt, const Matrix& lookback) {
  if (prompt.features.rows() > 0 && prompt.features.cols() != lookback.cols())
    throw Error(Errc::ShapeError, "prompt has " + std::to_string(prompt.features.cols()) +
                                      " channels, lookback has " + std::to_string(lookback.cols()));
  Matrix out(prompt.features.rows() + lookback.rows(), lookback.cols());
  out.topRows(prompt.features.rows()) = prompt.features;
  out.bottomRows(lookback.rows()) = lookback;
  return out;
}

PromptMatrix constant_prompt(std::span<const double> prefix, std::size_t channels) {
  Matrix m(static_cast<Eigen::Index>(prefix.size()), static_cast<Eigen::Index>(channels));
  for (std::size_t k = 0; k < prefix.size(); ++k) m.row(static_cast<Eigen::Index>(k)).setConstant(prefix[k]);
  return PromptMatrix{std::move(m), "text-prefix"};
}

}  // namespace ltsm

namespace ltsm {

Matrix PromptBook::augment(const std::string& dataset_id, const Matrix& lookback) const {
  const auto it = prompts.find(dataset_id);
  if (it == prompts.end()) return lookback;
  return assemble_input(it->second, lookback);
}

}  // namespace ltsm
