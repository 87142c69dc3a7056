#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ltsm/series.hpp"
#include "ltsm/types.hpp"

namespace ltsm {

struct FeatureParams {
  std::size_t lag = 1;    // autocorrelation
  std::size_t bins = 10;  // entropy histogram
};

struct FeatureDescriptor {
  std::string name;
  FeatureParams params;
};

/// Ordered feature list. Prompt rows are positional, so the order is part of
/// the on-disk contract and is identified by `version()`.
class FeatureCatalog {
 public:
  FeatureCatalog(std::string version, std::vector<FeatureDescriptor> features);

  /// The 25 canonical global features.
  static FeatureCatalog canonical();
  /// Canonical features followed by zero-valued pad slots up to `slots`.
  static FeatureCatalog padded(std::size_t slots);
  static FeatureCatalog preset(const std::string& name);  // "canonical" | "prompt133"

  const std::string& version() const noexcept { return version_; }
  const std::vector<FeatureDescriptor>& features() const noexcept { return features_; }
  std::size_t size() const noexcept { return features_.size(); }

  nlohmann::json to_json() const;
  static FeatureCatalog from_json(const nlohmann::json& j);

 private:
  std::string version_;
  std::vector<FeatureDescriptor> features_;
};

std::vector<std::string> feature_names();
/// Minimum series length the named feature accepts.
std::size_t feature_min_length(const std::string& name, const FeatureParams& params = {});

/// Evaluates one global feature on a single variate.
double feature_value(const std::string& name, std::span<const double> s,
                     const FeatureParams& params = {});

/// M x d matrix; column j holds every catalog feature of variate j.
Matrix extract_features(const TimeSeries& ts, const FeatureCatalog& catalog);

struct StandardizationStats {
  Vector mean;              // per feature slot
  Vector std;               // population std, >= 0
  std::vector<bool> degenerate;
  std::size_t population = 0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(mean.size()); }
  nlohmann::json to_json() const;
  static StandardizationStats from_json(const nlohmann::json& j);
};

/// Pools every column of every matrix into one population per feature slot.
StandardizationStats fit_standardizer(const std::vector<Matrix>& raw_features);

struct PromptMatrix {
  Matrix features;  // M x d, standardized
  std::string catalog_version;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(features.rows()); }
};

/// (x - mean) / std per slot; degenerate slots map to exactly 0.
PromptMatrix standardize(const Matrix& raw, const StandardizationStats& stats,
                         const std::string& catalog_version = "");

/// Prompt rows first, then the unmodified lookback rows.
Matrix assemble_input(const PromptMatrix& prompt, const Matrix& lookback);

/// Text-prompt arm: a constant prefix broadcast to all d channels.
PromptMatrix constant_prompt(std::span<const double> prefix, std::size_t channels);

}  // namespace ltsm

namespace ltsm {

/// Prompt per dataset id; datasets without an entry get no prompt rows.
struct PromptBook {
  std::map<std::string, PromptMatrix> prompts;

  Matrix augment(const std::string& dataset_id, const Matrix& lookback) const;
};

}  // namespace ltsm
