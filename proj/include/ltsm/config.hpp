#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ltsm/experiment.hpp"

namespace ltsm {

struct DatasetRef {
  std::string id;
  std::filesystem::path path;
  std::string frequency = "1h";
};

enum class ExperimentMode { Standard, FewShot, ZeroShot, Diversity };
const char* experiment_mode_name(ExperimentMode mode);

struct ExperimentSpec {
  ExperimentMode mode = ExperimentMode::Standard;
  std::size_t rate = 20;               // few_shot
  std::string source, target;          // zero_shot
  std::vector<std::size_t> first_m;    // diversity
};

/// Fully validated run description. Relative paths are resolved against the
/// config file's directory at parse time.
struct RunConfig {
  std::vector<DatasetRef> datasets;
  PipelineConfig pipeline;
  std::filesystem::path prefix_file;  // text_prompt only
  ExperimentSpec experiment;
  std::filesystem::path output_dir;

  nlohmann::json to_json() const;
  bool operator==(const RunConfig& other) const { return to_json() == other.to_json(); }
};

/// Strict parse: unknown keys and missing required keys raise ConfigError
/// naming the offending key path.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir);
RunConfig parse_config(const std::filesystem::path& path);

}  // namespace ltsm
