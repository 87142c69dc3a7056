#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ltsm/config.hpp"
#include "ltsm/series.hpp"

namespace ltsm {

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::size_t> jobs;
};

struct RunSummary {
  std::filesystem::path output_dir;
  MetricTable results;
  std::vector<std::filesystem::path> artifacts;
};

/// Ingests every dataset, runs the configured experiment and writes
/// results.csv, report.md, report.json, manifest.json, one checkpoint and one
/// training-curve CSV per trained model. Nothing is written unless every
/// dataset loads.
RunSummary run(RunConfig config, const RunOverrides& overrides = {});

std::vector<Dataset> load_datasets(const RunConfig& config);

enum class SynthPattern { Sine, TrendSeasonal, Ar1 };
SynthPattern parse_synth_pattern(const std::string& name);

struct SynthSpec {
  SynthPattern pattern = SynthPattern::Sine;
  std::size_t length = 2000;
  std::size_t channels = 1;
  std::uint64_t seed = 0;
  double ar_coef = 0.5;
  double noise = 0.05;
  /// Scale multiplier applied to every channel (lets fixtures differ in level).
  double amplitude = 1.0;
};

TimeSeries generate_synthetic(const SynthSpec& spec, const std::string& name = "synthetic");
void gen_synth(const SynthSpec& spec, const std::filesystem::path& out);

std::string sha256_file(const std::filesystem::path& path);

}  // namespace ltsm
