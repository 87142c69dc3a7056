#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "ltsm/backbone.hpp"
#include "ltsm/evalkit.hpp"
#include "ltsm/prompt.hpp"
#include "ltsm/series.hpp"
#include "ltsm/trainer.hpp"

namespace ltsm {

struct Dataset {
  std::string id;
  TimeSeries series;
};

enum class PromptMode { None, TsPrompt, TextPrompt };
const char* prompt_mode_name(PromptMode mode);
PromptMode parse_prompt_mode(const std::string& name);

enum class ParadigmKind { FromScratch, FullFinetune, Lora };
const char* paradigm_name(ParadigmKind kind);
ParadigmKind parse_paradigm(const std::string& name);

/// Everything needed to go from raw datasets to trained, evaluated models.
struct PipelineConfig {
  SplitSpec split{};
  std::size_t lookback_len = 336;
  std::size_t train_stride = 1;
  std::size_t eval_stride = 1;
  std::vector<std::size_t> horizons{96, 192, 336, 720};

  PromptMode prompt_mode = PromptMode::TsPrompt;
  std::string catalog = "canonical";
  std::vector<double> text_prefix;

  /// Architecture template; horizon, prompt_len and lookback_len are filled per run.
  BackboneConfig backbone{};
  double clip_q = 0.01;  // quantized tokenizer

  ParadigmKind paradigm = ParadigmKind::FromScratch;
  /// Per-horizon checkpoint path; "{horizon}" is substituted.
  std::string checkpoint;
  LoraSpec lora{};

  TrainConfig train{};
  bool baselines = true;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

/// Models trained for one experiment plus the prompt state needed to feed
/// new datasets to them without leaking their test data.
struct TrainedModels {
  std::map<std::size_t, Backbone> by_horizon;
  std::map<std::size_t, TrainReport> reports;
  std::map<std::size_t, DirectLinearForecaster> linear_baselines;
  PromptMode prompt_mode = PromptMode::None;
  std::optional<FeatureCatalog> catalog;
  std::optional<StandardizationStats> prompt_stats;
  std::vector<double> text_prefix;
  std::size_t downsample_rate = 1;
  std::vector<std::string> train_datasets;
  std::map<std::size_t, std::size_t> train_windows;  // per horizon

  /// Prompt of a dataset computed from its (downsampled) training split.
  std::optional<PromptMatrix> prompt_for(const TimeSeries& train_split) const;
};

struct ExperimentResult {
  MetricTable table;
  TrainedModels models;
  nlohmann::json provenance;
};

/// Shared core: train on `train_ids`, evaluate on `eval_ids`.
ExperimentResult train_and_evaluate(const std::vector<Dataset>& datasets, const std::vector<std::string>& train_ids,
                                    const std::vector<std::string>& eval_ids, std::size_t downsample_rate,
                                    const PipelineConfig& cfg);

/// Train on every dataset, evaluate on every dataset.
ExperimentResult run_standard(const std::vector<Dataset>& datasets, const PipelineConfig& cfg);

/// Standard protocol with each training split downsampled by `rate` after splitting.
ExperimentResult run_few_shot(const std::vector<Dataset>& datasets, std::size_t rate, const PipelineConfig& cfg);

/// Evaluates source-trained models on `target` without any optimizer step.
MetricTable run_zero_shot(const TrainedModels& source, const Dataset& target, const PipelineConfig& cfg);

struct DiversityPoint {
  std::size_t first_m = 0;
  ExperimentResult result;
};

/// For each m: train on the first m datasets, evaluate on all of them.
std::vector<DiversityPoint> run_diversity_sweep(const std::vector<Dataset>& datasets,
                                                const std::vector<std::size_t>& first_m, const PipelineConfig& cfg);

}  // namespace ltsm
