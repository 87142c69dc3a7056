#include "ltsm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <set>
#include <thread>

#include "ltsm/error.hpp"
#include "ltsm/rng.hpp"

namespace ltsm {

const char* prompt_mode_name(PromptMode mode) {
  switch (mode) {
    case PromptMode::None: return "none";
    case PromptMode::TsPrompt: return "ts_prompt";
    case PromptMode::TextPrompt: return "text_prompt";
  }
  return "none";
}

PromptMode parse_prompt_mode(const std::string& name) {
  if (name == "none") return PromptMode::None;
  if (name == "ts_prompt") return PromptMode::TsPrompt;
  if (name == "text_prompt") return PromptMode::TextPrompt;
  throw Error(Errc::InvalidArgument, "unknown prompt mode '" + name + "'");
}

const char* paradigm_name(ParadigmKind kind) {
  switch (kind) {
    case ParadigmKind::FromScratch: return "from_scratch";
    case ParadigmKind::FullFinetune: return "full_finetune";
    case ParadigmKind::Lora: return "lora";
  }
  return "from_scratch";
}

ParadigmKind parse_paradigm(const std::string& name) {
  if (name == "from_scratch") return ParadigmKind::FromScratch;
  if (name == "full_finetune") return ParadigmKind::FullFinetune;
  if (name == "lora") return ParadigmKind::Lora;
  throw Error(Errc::InvalidArgument, "unknown paradigm '" + name + "'");
}

std::optional<PromptMatrix> TrainedModels::prompt_for(const TimeSeries& train_split) const {
  switch (prompt_mode) {
    case PromptMode::None: return std::nullopt;
    case PromptMode::TextPrompt: return constant_prompt(text_prefix, train_split.channels());
    case PromptMode::TsPrompt:
      return standardize(extract_features(train_split, *catalog), *prompt_stats, catalog->version());
  }
  return std::nullopt;
}

namespace {

const Dataset& find_dataset(const std::vector<Dataset>& datasets, const std::string& id) {
  for (const auto& d : datasets)
    if (d.id == id) return d;
  throw Error(Errc::InvalidArgument, "unknown dataset '" + id + "'");
}

std::string checkpoint_path(const std::string& pattern, std::size_t horizon) {
  std::string out = pattern;
  const std::string key = "{horizon}";
  for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key))
    out.replace(pos, key.size(), std::to_string(horizon));
  return out;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first error.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  for (std::size_t start = 0; start < n; start += jobs) {
    std::vector<std::thread> pool;
    for (std::size_t i = start; i < std::min(n, start + jobs); ++i)
      pool.emplace_back([&, i] {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct HorizonRun {
  std::optional<Backbone> model;
  TrainReport report;
  std::optional<DirectLinearForecaster> linear;
  std::size_t windows = 0;
  std::uint64_t init_seed = 0, train_seed = 0, mix_seed = 0;
};

Paradigm make_paradigm(const PipelineConfig& cfg, std::size_t horizon, std::uint64_t init_seed) {
  switch (cfg.paradigm) {
    case ParadigmKind::FromScratch: return FromScratch{init_seed};
    case ParadigmKind::FullFinetune:
      return FullFinetune{Checkpoint::read(checkpoint_path(cfg.checkpoint, horizon))};
    case ParadigmKind::Lora: {
      LoraSpec lora = cfg.lora;
      lora.seed = init_seed;
      return LoraFinetune{Checkpoint::read(checkpoint_path(cfg.checkpoint, horizon)), lora};
    }
  }
  return FromScratch{init_seed};
}

}  // namespace

ExperimentResult train_and_evaluate(const std::vector<Dataset>& datasets, const std::vector<std::string>& train_ids,
                                    const std::vector<std::string>& eval_ids, std::size_t downsample_rate,
                                    const PipelineConfig& cfg) {
  if (datasets.empty() || train_ids.empty()) throw Error(Errc::EmptyCorpus, "no training datasets");
  if (cfg.horizons.empty()) throw Error(Errc::InvalidArgument, "no horizons configured");
  if (downsample_rate == 0) throw Error(Errc::InvalidRate, "downsampling rate must be >= 1");
  const auto started = std::chrono::steady_clock::now();

  std::vector<std::string> used = train_ids;
  for (const auto& id : eval_ids)
    if (std::find(used.begin(), used.end(), id) == used.end()) used.push_back(id);
  std::map<std::string, Splits> splits;
  std::map<std::string, TimeSeries> train_series;
  for (const auto& id : used) {
    auto s = chronological_split(find_dataset(datasets, id).series, cfg.split);
    train_series.emplace(id, downsample_rate == 1 ? s.train : downsample(s.train, downsample_rate));
    splits.emplace(id, std::move(s));
  }

  ExperimentResult result;
  TrainedModels& models = result.models;
  models.prompt_mode = cfg.prompt_mode;
  models.downsample_rate = downsample_rate;
  models.train_datasets = train_ids;
  if (cfg.prompt_mode == PromptMode::TsPrompt) {
    models.catalog = FeatureCatalog::preset(cfg.catalog);
    std::vector<Matrix> raw;
    for (const auto& id : train_ids) raw.push_back(extract_features(train_series.at(id), *models.catalog));
    models.prompt_stats = fit_standardizer(raw);
  } else if (cfg.prompt_mode == PromptMode::TextPrompt) {
    if (cfg.text_prefix.empty()) throw Error(Errc::InvalidArgument, "text prompt mode needs a non-empty prefix");
    models.text_prefix = cfg.text_prefix;
  }
  PromptBook book;
  for (const auto& id : used)
    if (auto p = models.prompt_for(train_series.at(id))) book.prompts.emplace(id, std::move(*p));
  const std::size_t prompt_len = book.prompts.empty() ? 0 : book.prompts.begin()->second.rows();

  std::vector<HorizonRun> runs(cfg.horizons.size());
  parallel_for(cfg.horizons.size(), cfg.jobs, [&](std::size_t hi) {
    const std::size_t q = cfg.horizons[hi];
    HorizonRun& run = runs[hi];
    const std::string tag = "h" + std::to_string(q);
    run.mix_seed = derive_seed(cfg.seed, "mix-" + tag);
    run.init_seed = derive_seed(cfg.seed, "init-" + tag);
    run.train_seed = derive_seed(cfg.seed, "train-" + tag);

    std::vector<DatasetWindows> train_windows, val_windows;
    for (const auto& id : train_ids) {
      train_windows.emplace_back(id, make_windows(train_series.at(id), cfg.lookback_len, q, cfg.train_stride));
      const auto& val = splits.at(id).val;
      if (val.length() >= cfg.lookback_len + q)
        val_windows.emplace_back(id, make_windows(val, cfg.lookback_len, q, cfg.eval_stride));
    }
    const Corpus corpus = mix_corpus(train_windows, run.mix_seed);
    std::optional<Corpus> validation;
    if (!val_windows.empty()) validation = mix_corpus(val_windows, run.mix_seed);
    run.windows = corpus.size();

    BackboneConfig bcfg = cfg.backbone;
    bcfg.horizon = q;
    bcfg.prompt_len = prompt_len;
    bcfg.lookback_len = cfg.lookback_len;
    std::optional<Quantizer> quantizer;
    if (bcfg.tokenizer == TokenizerKind::Quantized && cfg.paradigm == ParadigmKind::FromScratch) {
      std::vector<double> values;
      for (const auto& e : corpus.entries()) {
        const Matrix x = normalized_channels(bcfg, book.augment(e.dataset_id, e.window.lookback));
        values.insert(values.end(), x.data(), x.data() + x.size());
      }
      quantizer = fit_quantizer(values, bcfg.num_bins, cfg.clip_q);
    }
    Backbone model = build(bcfg, make_paradigm(cfg, q, run.init_seed), quantizer);
    TrainConfig tcfg = cfg.train;
    tcfg.seed = run.train_seed;
    auto trained = train(std::move(model), corpus, tcfg, book, validation ? &*validation : nullptr);
    run.model.emplace(std::move(trained.model));
    run.report = std::move(trained.report);
    if (cfg.baselines) run.linear = DirectLinearForecaster::fit(corpus, cfg.lookback_len, q);
  });

  nlohmann::json per_horizon = nlohmann::json::array();
  for (std::size_t hi = 0; hi < cfg.horizons.size(); ++hi) {
    const std::size_t q = cfg.horizons[hi];
    HorizonRun& run = runs[hi];
    per_horizon.push_back({{"horizon", q},
                           {"train_windows", run.windows},
                           {"config_hash", run.model->config().hash()},
                           {"parameters", run.model->num_parameters()},
                           {"trainable_parameters", run.model->num_trainable()},
                           {"payload_sha256", payload_sha256(*run.model)},
                           {"mix_seed", run.mix_seed},
                           {"init_seed", run.init_seed},
                           {"train_seed", run.train_seed},
                           {"optimizer_steps", run.report.steps},
                           {"wall_seconds", run.report.wall_seconds}});
    models.train_windows[q] = run.windows;
    models.reports.emplace(q, run.report);
    if (run.linear) models.linear_baselines.emplace(q, *run.linear);
    models.by_horizon.emplace(q, std::move(*run.model));
  }

  for (const auto& id : eval_ids) {
    const auto& test = splits.at(id).test;
    const auto it = book.prompts.find(id);
    const PromptMatrix* prompt = it == book.prompts.end() ? nullptr : &it->second;
    std::vector<BackboneForecaster> nets;
    std::vector<PersistenceForecaster> persist;
    for (const auto& [q, m] : models.by_horizon) {
      nets.emplace_back(m);
      persist.emplace_back(q);
    }
    std::vector<const Forecaster*> net_ptrs, persist_ptrs, linear_ptrs;
    for (const auto& n : nets) net_ptrs.push_back(&n);
    for (const auto& p : persist) persist_ptrs.push_back(&p);
    for (const auto& [q, l] : models.linear_baselines) linear_ptrs.push_back(&l);
    evaluate(result.table, id, "ltsm", net_ptrs, test, cfg.lookback_len, prompt, cfg.eval_stride);
    if (cfg.baselines) {
      evaluate(result.table, id, "persistence", persist_ptrs, test, cfg.lookback_len, nullptr, cfg.eval_stride);
      evaluate(result.table, id, "dlinear", linear_ptrs, test, cfg.lookback_len, nullptr, cfg.eval_stride);
    }
  }

  nlohmann::json prompt_json = {{"mode", prompt_mode_name(cfg.prompt_mode)}, {"rows", prompt_len}};
  if (models.catalog) prompt_json["catalog"] = models.catalog->to_json();
  if (models.prompt_stats) prompt_json["stats"] = models.prompt_stats->to_json();
  result.provenance = {{"train_datasets", train_ids},
                       {"eval_datasets", eval_ids},
                       {"downsample_rate", downsample_rate},
                       {"seed", cfg.seed},
                       {"paradigm", paradigm_name(cfg.paradigm)},
                       {"prompt", prompt_json},
                       {"horizons", per_horizon},
                       {"wall_seconds",
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()}};
  return result;
}

namespace {

std::vector<std::string> all_ids(const std::vector<Dataset>& datasets) {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& d : datasets) {
    if (!seen.insert(d.id).second) throw Error(Errc::InvalidArgument, "duplicate dataset id '" + d.id + "'");
    ids.push_back(d.id);
  }
  return ids;
}

}  // namespace

ExperimentResult run_standard(const std::vector<Dataset>& datasets, const PipelineConfig& cfg) {
  const auto ids = all_ids(datasets);
  return train_and_evaluate(datasets, ids, ids, 1, cfg);
}

ExperimentResult run_few_shot(const std::vector<Dataset>& datasets, std::size_t rate, const PipelineConfig& cfg) {
  if (rate == 0) throw Error(Errc::InvalidRate, "downsampling rate must be >= 1");
  const auto ids = all_ids(datasets);
  return train_and_evaluate(datasets, ids, ids, rate, cfg);
}

MetricTable run_zero_shot(const TrainedModels& source, const Dataset& target, const PipelineConfig& cfg) {
  if (std::find(source.train_datasets.begin(), source.train_datasets.end(), target.id) !=
      source.train_datasets.end())
    throw Error(Errc::InvalidArgument, "zero-shot target '" + target.id + "' was part of the source training set");
  for (std::size_t q : cfg.horizons) {
    const auto it = source.by_horizon.find(q);
    if (it == source.by_horizon.end())
      throw Error(Errc::HorizonMismatch, "no source model for horizon " + std::to_string(q));
    if (it->second.config().horizon != q || it->second.config().lookback_len != cfg.lookback_len)
      throw Error(Errc::HorizonMismatch, "source model for horizon " + std::to_string(q) +
                                             " was built for a different horizon or lookback");
  }
  std::map<std::size_t, std::string> before;
  for (const auto& [q, m] : source.by_horizon) before[q] = payload_sha256(m);

  const auto splits = chronological_split(target.series, cfg.split);
  const auto prompt = source.prompt_for(splits.train);
  MetricTable table;
  std::vector<BackboneForecaster> nets;
  std::vector<PersistenceForecaster> persist;
  std::vector<const Forecaster*> net_ptrs, persist_ptrs, linear_ptrs;
  for (std::size_t q : cfg.horizons) {
    nets.emplace_back(source.by_horizon.at(q));
    persist.emplace_back(q);
  }
  for (const auto& n : nets) net_ptrs.push_back(&n);
  for (const auto& p : persist) persist_ptrs.push_back(&p);
  for (std::size_t q : cfg.horizons)
    if (const auto it = source.linear_baselines.find(q); it != source.linear_baselines.end())
      linear_ptrs.push_back(&it->second);
  evaluate(table, target.id, "ltsm", net_ptrs, splits.test, cfg.lookback_len, prompt ? &*prompt : nullptr,
           cfg.eval_stride);
  if (cfg.baselines) {
    evaluate(table, target.id, "persistence", persist_ptrs, splits.test, cfg.lookback_len, nullptr, cfg.eval_stride);
    if (!linear_ptrs.empty())
      evaluate(table, target.id, "dlinear", linear_ptrs, splits.test, cfg.lookback_len, nullptr, cfg.eval_stride);
  }

  for (const auto& [q, m] : source.by_horizon)
    if (payload_sha256(m) != before.at(q))
      throw Error(Errc::NumericalError, "zero-shot evaluation modified the horizon " + std::to_string(q) + " model");
  return table;
}

std::vector<DiversityPoint> run_diversity_sweep(const std::vector<Dataset>& datasets,
                                                const std::vector<std::size_t>& first_m, const PipelineConfig& cfg) {
  if (datasets.empty()) throw Error(Errc::EmptyCorpus, "diversity sweep needs at least one dataset");
  const auto ids = all_ids(datasets);
  std::vector<DiversityPoint> points;
  for (std::size_t m : first_m) {
    if (m < 1 || m > ids.size())
      throw Error(Errc::InvalidArgument, "first_m " + std::to_string(m) + " outside [1, " + std::to_string(ids.size()) + "]");
    const std::vector<std::string> train_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(m));
    points.push_back(DiversityPoint{m, train_and_evaluate(datasets, train_ids, ids, 1, cfg)});
  }
  return points;
}

}  // namespace ltsm
