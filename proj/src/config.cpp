#include "ltsm/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "ltsm/error.hpp"

namespace ltsm {

const char* experiment_mode_name(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::Standard: return "standard";
    case ExperimentMode::FewShot: return "few_shot";
    case ExperimentMode::ZeroShot: return "zero_shot";
    case ExperimentMode::Diversity: return "diversity";
  }
  return "standard";
}

namespace {

using json = nlohmann::json;

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where.empty() ? "<root>" : where, "expected an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw ConfigError(where.empty() ? key : where + "." + key, "unknown key");
}

std::string path_of(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

template <typename T>
T get_or(const json& obj, const std::string& where, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path_of(where, key), std::string("wrong type: ") + e.what());
  }
}

template <typename T>
T required(const json& obj, const std::string& where, const std::string& key) {
  if (!obj.contains(key)) throw ConfigError(path_of(where, key), "missing required key");
  return get_or<T>(obj, where, key, T{});
}

std::filesystem::path existing_file(const std::string& key, const std::string& raw,
                                    const std::filesystem::path& base) {
  std::filesystem::path p(raw);
  if (p.is_relative()) p = base / p;
  p = p.lexically_normal();
  if (!std::filesystem::is_regular_file(p)) throw ConfigError(key, "file not found: " + p.string());
  return p;
}

template <typename Fn>
auto wrap(const std::string& key, Fn fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key, e.what());
  }
}

std::vector<double> read_prefix(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  for (char& c : text)
    if (c == ',' || c == ';') c = ' ';
  std::istringstream values(text);
  std::vector<double> out;
  std::string tok;
  while (values >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("prompt.prefix_file", "non-numeric entry '" + tok + "'");
    }
  }
  if (out.empty()) throw ConfigError("prompt.prefix_file", "prefix file is empty");
  return out;
}

}  // namespace

RunConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j, "", {"datasets", "split", "lookback_len", "train_stride", "eval_stride", "horizons", "prompt",
                     "tokenizer", "backbone", "paradigm", "train", "experiment", "baselines", "output_dir", "seed",
                     "jobs"});
  RunConfig rc;
  PipelineConfig& p = rc.pipeline;

  if (!j.contains("datasets")) throw ConfigError("datasets", "missing required key");
  const json& ds = j.at("datasets");
  if (!ds.is_array() || ds.empty()) throw ConfigError("datasets", "expected a non-empty list");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::string where = "datasets[" + std::to_string(i) + "]";
    check_keys(ds[i], where, {"id", "path", "frequency"});
    DatasetRef ref;
    ref.id = required<std::string>(ds[i], where, "id");
    if (!ids.insert(ref.id).second) throw ConfigError(where + ".id", "duplicate dataset id '" + ref.id + "'");
    ref.path = existing_file(where + ".path", required<std::string>(ds[i], where, "path"), base_dir);
    ref.frequency = get_or<std::string>(ds[i], where, "frequency", "1h");
    rc.datasets.push_back(std::move(ref));
  }

  if (j.contains("split")) {
    const json& s = j["split"];
    check_keys(s, "split", {"train", "val", "test"});
    p.split.train_frac = get_or(s, "split", "train", p.split.train_frac);
    p.split.val_frac = get_or(s, "split", "val", p.split.val_frac);
    p.split.test_frac = get_or(s, "split", "test", p.split.test_frac);
    wrap("split", [&] { p.split.validate(); return 0; });
  }
  p.lookback_len = get_or(j, "", "lookback_len", p.lookback_len);
  p.train_stride = get_or(j, "", "train_stride", p.train_stride);
  p.eval_stride = get_or(j, "", "eval_stride", p.eval_stride);
  p.horizons = get_or(j, "", "horizons", p.horizons);
  if (p.horizons.empty()) throw ConfigError("horizons", "expected at least one horizon");
  if (p.lookback_len < 1) throw ConfigError("lookback_len", "must be >= 1");
  if (p.train_stride < 1) throw ConfigError("train_stride", "must be >= 1");
  if (p.eval_stride < 1) throw ConfigError("eval_stride", "must be >= 1");
  for (std::size_t h : p.horizons)
    if (h < 1) throw ConfigError("horizons", "horizons must be >= 1");

  if (j.contains("prompt")) {
    const json& pr = j["prompt"];
    check_keys(pr, "prompt", {"mode", "catalog", "prefix_file"});
    p.prompt_mode = wrap("prompt.mode", [&] { return parse_prompt_mode(get_or<std::string>(pr, "prompt", "mode", "ts_prompt")); });
    p.catalog = get_or<std::string>(pr, "prompt", "catalog", p.catalog);
    wrap("prompt.catalog", [&] { return FeatureCatalog::preset(p.catalog).size(); });
    if (pr.contains("prefix_file")) {
      rc.prefix_file = existing_file("prompt.prefix_file", get_or<std::string>(pr, "prompt", "prefix_file", ""), base_dir);
      p.text_prefix = read_prefix(rc.prefix_file);
    }
    if (p.prompt_mode == PromptMode::TextPrompt && p.text_prefix.empty())
      throw ConfigError("prompt.prefix_file", "required for text_prompt mode");
  }

  if (j.contains("tokenizer")) {
    const json& t = j["tokenizer"];
    check_keys(t, "tokenizer", {"kind", "patch_len", "stride", "num_bins", "clip_q"});
    p.backbone.tokenizer = wrap("tokenizer.kind", [&] { return parse_tokenizer_kind(get_or<std::string>(t, "tokenizer", "kind", "linear")); });
    p.backbone.patch.patch_len = get_or(t, "tokenizer", "patch_len", p.backbone.patch.patch_len);
    p.backbone.patch.stride = get_or(t, "tokenizer", "stride", p.backbone.patch.stride);
    p.backbone.num_bins = get_or(t, "tokenizer", "num_bins", p.backbone.num_bins);
    p.clip_q = get_or(t, "tokenizer", "clip_q", p.clip_q);
    if (!(p.clip_q >= 0.0 && p.clip_q < 0.5)) throw ConfigError("tokenizer.clip_q", "must lie in [0, 0.5)");
  }

  if (j.contains("backbone")) {
    const json& b = j["backbone"];
    check_keys(b, "backbone", {"num_layers", "model_dim", "num_heads", "ff_dim", "instance_norm"});
    p.backbone.num_layers = get_or(b, "backbone", "num_layers", p.backbone.num_layers);
    p.backbone.model_dim = get_or(b, "backbone", "model_dim", p.backbone.model_dim);
    p.backbone.num_heads = get_or(b, "backbone", "num_heads", p.backbone.num_heads);
    p.backbone.ff_dim = get_or(b, "backbone", "ff_dim", p.backbone.ff_dim);
    p.backbone.instance_norm = get_or(b, "backbone", "instance_norm", p.backbone.instance_norm);
  }
  {
    BackboneConfig probe = p.backbone;
    probe.lookback_len = p.lookback_len;
    wrap("backbone", [&] { probe.validate(); return 0; });
  }

  if (j.contains("paradigm")) {
    const json& pa = j["paradigm"];
    check_keys(pa, "paradigm", {"kind", "checkpoint", "lora_rank", "lora_alpha", "lora_targets"});
    p.paradigm = wrap("paradigm.kind", [&] { return parse_paradigm(get_or<std::string>(pa, "paradigm", "kind", "from_scratch")); });
    p.checkpoint = get_or<std::string>(pa, "paradigm", "checkpoint", "");
    p.lora.rank = get_or(pa, "paradigm", "lora_rank", p.lora.rank);
    p.lora.alpha = get_or(pa, "paradigm", "lora_alpha", p.lora.alpha);
    p.lora.targets = get_or(pa, "paradigm", "lora_targets", p.lora.targets);
    if (p.paradigm != ParadigmKind::FromScratch) {
      if (p.checkpoint.empty()) throw ConfigError("paradigm.checkpoint", "required for checkpoint paradigms");
      std::filesystem::path cp(p.checkpoint);
      if (cp.is_relative()) cp = base_dir / cp;
      p.checkpoint = cp.lexically_normal().string();
      for (std::size_t h : p.horizons) {
        std::string resolved = p.checkpoint;
        for (auto pos = resolved.find("{horizon}"); pos != std::string::npos; pos = resolved.find("{horizon}"))
          resolved.replace(pos, 9, std::to_string(h));
        if (!std::filesystem::is_regular_file(resolved))
          throw ConfigError("paradigm.checkpoint", "file not found: " + resolved);
      }
    }
    if (p.lora.rank < 1) throw ConfigError("paradigm.lora_rank", "must be >= 1");
  }

  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t, "train", {"learning_rate", "epochs", "grad_accum_steps", "batch_size", "lr_min"});
    p.train.learning_rate = get_or(t, "train", "learning_rate", p.train.learning_rate);
    p.train.epochs = get_or(t, "train", "epochs", p.train.epochs);
    p.train.grad_accum_steps = get_or(t, "train", "grad_accum_steps", p.train.grad_accum_steps);
    p.train.batch_size = get_or(t, "train", "batch_size", p.train.batch_size);
    p.train.lr_min = get_or(t, "train", "lr_min", p.train.lr_min);
    wrap("train", [&] { p.train.validate(); return 0; });
  }

  if (j.contains("experiment")) {
    const json& e = j["experiment"];
    check_keys(e, "experiment", {"mode", "rate", "source", "target", "first_m"});
    const auto mode = get_or<std::string>(e, "experiment", "mode", "standard");
    auto& ex = rc.experiment;
    if (mode == "standard") ex.mode = ExperimentMode::Standard;
    else if (mode == "few_shot") ex.mode = ExperimentMode::FewShot;
    else if (mode == "zero_shot") ex.mode = ExperimentMode::ZeroShot;
    else if (mode == "diversity") ex.mode = ExperimentMode::Diversity;
    else throw ConfigError("experiment.mode", "unknown mode '" + mode + "'");
    ex.rate = get_or(e, "experiment", "rate", ex.rate);
    ex.source = get_or<std::string>(e, "experiment", "source", "");
    ex.target = get_or<std::string>(e, "experiment", "target", "");
    ex.first_m = get_or(e, "experiment", "first_m", ex.first_m);
    if (ex.mode == ExperimentMode::FewShot && ex.rate < 1) throw ConfigError("experiment.rate", "must be >= 1");
    if (ex.mode == ExperimentMode::ZeroShot) {
      if (!ids.count(ex.source)) throw ConfigError("experiment.source", "unknown dataset '" + ex.source + "'");
      if (!ids.count(ex.target)) throw ConfigError("experiment.target", "unknown dataset '" + ex.target + "'");
      if (ex.source == ex.target) throw ConfigError("experiment.target", "must differ from the source");
    }
    if (ex.mode == ExperimentMode::Diversity) {
      if (ex.first_m.empty())
        for (std::size_t m = 1; m <= rc.datasets.size(); ++m) ex.first_m.push_back(m);
      for (std::size_t m : ex.first_m)
        if (m < 1 || m > rc.datasets.size()) throw ConfigError("experiment.first_m", "value out of range");
    }
  }

  p.baselines = get_or(j, "", "baselines", p.baselines);
  p.seed = get_or(j, "", "seed", p.seed);
  p.jobs = get_or(j, "", "jobs", p.jobs);
  if (j.contains("output_dir")) {
    std::filesystem::path out(get_or<std::string>(j, "", "output_dir", ""));
    if (out.is_relative()) out = base_dir / out;
    rc.output_dir = out.lexically_normal();
  }
  return rc;
}

RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError("<root>", std::string("not valid JSON: ") + e.what());
  }
  return parse_config(j, base_dir);
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

nlohmann::json RunConfig::to_json() const {
  const PipelineConfig& p = pipeline;
  json datasets_json = json::array();
  for (const auto& d : datasets)
    datasets_json.push_back({{"id", d.id}, {"path", d.path.string()}, {"frequency", d.frequency}});
  json prompt = {{"mode", prompt_mode_name(p.prompt_mode)}, {"catalog", p.catalog}};
  if (!prefix_file.empty()) prompt["prefix_file"] = prefix_file.string();
  json experiment_json = {{"mode", experiment_mode_name(experiment.mode)},
                          {"rate", experiment.rate},
                          {"source", experiment.source},
                          {"target", experiment.target},
                          {"first_m", experiment.first_m}};
  json out = {
      {"datasets", datasets_json},
      {"split", {{"train", p.split.train_frac}, {"val", p.split.val_frac}, {"test", p.split.test_frac}}},
      {"lookback_len", p.lookback_len},
      {"train_stride", p.train_stride},
      {"eval_stride", p.eval_stride},
      {"horizons", p.horizons},
      {"prompt", prompt},
      {"tokenizer",
       {{"kind", tokenizer_kind_name(p.backbone.tokenizer)},
        {"patch_len", p.backbone.patch.patch_len},
        {"stride", p.backbone.patch.stride},
        {"num_bins", p.backbone.num_bins},
        {"clip_q", p.clip_q}}},
      {"backbone",
       {{"num_layers", p.backbone.num_layers},
        {"model_dim", p.backbone.model_dim},
        {"num_heads", p.backbone.num_heads},
        {"ff_dim", p.backbone.ff_dim},
        {"instance_norm", p.backbone.instance_norm}}},
      {"paradigm",
       {{"kind", paradigm_name(p.paradigm)},
        {"checkpoint", p.checkpoint},
        {"lora_rank", p.lora.rank},
        {"lora_alpha", p.lora.alpha},
        {"lora_targets", p.lora.targets}}},
      {"train",
       {{"learning_rate", p.train.learning_rate},
        {"epochs", p.train.epochs},
        {"grad_accum_steps", p.train.grad_accum_steps},
        {"batch_size", p.train.batch_size},
        {"lr_min", p.train.lr_min}}},
      {"experiment", experiment_json},
      {"baselines", p.baselines},
      {"seed", p.seed},
      {"jobs", p.jobs}};
  if (!output_dir.empty()) out["output_dir"] = output_dir.string();
  return out;
}

}  // namespace ltsm
