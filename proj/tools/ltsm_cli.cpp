// Command-line front end: run experiments, generate fixtures, and dump
// intermediate artifacts (prompt matrices, token streams, metrics).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "ltsm/ltsm.hpp"

namespace {

using nlohmann::json;

json matrix_json(const ltsm::Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

void emit(const json& doc, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << doc.dump(2) << '\n';
    return;
  }
  const std::filesystem::path target(out);
  if (target.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(target.parent_path(), ec);
  }
  std::ofstream f(target, std::ios::binary);
  if (!f) throw ltsm::Error(ltsm::Errc::IoError, "cannot write " + out);
  f << doc.dump(2) << '\n';
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out,
            std::optional<std::size_t> jobs) {
  const auto config = ltsm::parse_config(std::filesystem::path(config_path));
  ltsm::RunOverrides ov;
  ov.seed = seed;
  ov.jobs = jobs;
  if (!out.empty()) ov.output_dir = out;
  const auto summary = ltsm::run(config, ov);
  std::cout << "wrote " << summary.artifacts.size() << " artifacts to " << summary.output_dir.string() << '\n';
  std::cout << summary.results.to_csv();
  return 0;
}

int cmd_features(const std::string& config_path, const std::string& input, const std::string& catalog_name,
                 const std::string& out) {
  std::vector<ltsm::Dataset> datasets;
  ltsm::SplitSpec split;
  std::string catalog_preset = catalog_name;
  bool use_split = false;
  if (!config_path.empty()) {
    const auto config = ltsm::parse_config(std::filesystem::path(config_path));
    datasets = ltsm::load_datasets(config);
    split = config.pipeline.split;
    catalog_preset = config.pipeline.catalog;
    use_split = true;
  } else {
    auto ts = ltsm::load_csv(input);
    datasets.push_back(ltsm::Dataset{ts.name(), ts});
  }
  const auto catalog = ltsm::FeatureCatalog::preset(catalog_preset);
  std::vector<ltsm::Matrix> raw;
  std::vector<std::vector<std::string>> names;
  for (const auto& d : datasets) {
    // Prompts are computed from training data only when a split is configured.
    const auto& series = use_split ? ltsm::chronological_split(d.series, split).train : d.series;
    raw.push_back(ltsm::extract_features(series, catalog));
    names.push_back(series.variate_names());
  }
  const auto stats = ltsm::fit_standardizer(raw);
  json doc = {{"catalog", catalog.to_json()}, {"stats", stats.to_json()}, {"datasets", json::array()}};
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const auto prompt = ltsm::standardize(raw[i], stats, catalog.version());
    doc["datasets"].push_back({{"id", datasets[i].id},
                               {"variates", names[i]},
                               {"raw", matrix_json(raw[i])},
                               {"prompt", matrix_json(prompt.features)}});
  }
  emit(doc, out);
  return 0;
}

struct TokenizeArgs {
  std::string input, kind = "quantized", out;
  std::size_t patch_len = 16, stride = 8, model_dim = 16, bins = 256;
  double clip_q = 0.01;
  std::uint64_t seed = 0;
};

int cmd_tokenize(const TokenizeArgs& a) {
  const auto ts = ltsm::load_csv(a.input);
  const auto& v = ts.values();
  json doc = {{"input", a.input}, {"tokenizer", a.kind}, {"channels", json::array()}};
  if (a.kind == "quantized") {
    std::vector<double> all(v.data(), v.data() + v.size());
    const auto q = ltsm::fit_quantizer(all, a.bins, a.clip_q);
    doc["quantizer"] = q.to_json();
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      const ltsm::Vector col = v.col(c);
      doc["channels"].push_back({{"name", ts.variate_names()[static_cast<std::size_t>(c)]},
                                 {"ids", q.quantize(std::span<const double>(col.data(), col.size()))}});
    }
  } else if (a.kind == "linear") {
    const ltsm::PatchConfig cfg{a.patch_len, a.stride};
    const auto tok = ltsm::LinearTokenizer::random(a.model_dim, a.patch_len, a.seed);
    doc["patch"] = {{"patch_len", a.patch_len}, {"stride", a.stride}, {"model_dim", a.model_dim}, {"seed", a.seed}};
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      const ltsm::Vector col = v.col(c);
      const auto padded = ltsm::pad_to_grid(std::span<const double>(col.data(), col.size()), cfg);
      const auto tokens = ltsm::linear_embed(ltsm::patchify(padded, cfg), tok);
      json tj = json::array();
      for (const auto& t : tokens) tj.push_back(std::vector<double>(t.data(), t.data() + t.size()));
      doc["channels"].push_back({{"name", ts.variate_names()[static_cast<std::size_t>(c)]},
                                 {"padded_length", padded.size()},
                                 {"tokens", tj}});
    }
  } else {
    throw ltsm::Error(ltsm::Errc::InvalidArgument, "unknown tokenizer '" + a.kind + "'");
  }
  emit(doc, a.out);
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& target_path, const std::string& out) {
  const auto pred = ltsm::load_csv(pred_path);
  const auto target = ltsm::load_csv(target_path);
  const json doc = {{"mse", ltsm::mse(pred.values(), target.values())},
                    {"mae", ltsm::mae(pred.values(), target.values())},
                    {"rows", pred.length()},
                    {"channels", pred.channels()}};
  emit(doc, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ltsm: time-series prompt, tokenization and training-paradigm benchmark toolkit"};
  app.require_subcommand(1);

  std::string config, out, input, catalog = "canonical", pred, target;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;

  auto* run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "override the global seed");
  run->add_option("--out", out, "override the output directory");
  run->add_option("--jobs", jobs, "parallel (dataset, horizon) runs");

  ltsm::SynthSpec synth;
  std::string pattern = "sine";
  auto* gen = app.add_subcommand("gen-synth", "write a deterministic synthetic CSV fixture");
  gen->add_option("--pattern", pattern, "sine | trend_seasonal | ar1");
  gen->add_option("--length", synth.length, "number of rows");
  gen->add_option("--channels", synth.channels, "number of variates");
  gen->add_option("--seed", synth.seed, "generator seed");
  gen->add_option("--ar-coef", synth.ar_coef, "AR(1) coefficient");
  gen->add_option("--noise", synth.noise, "noise standard deviation");
  gen->add_option("--amplitude", synth.amplitude, "overall scale");
  gen->add_option("--out", out, "output CSV path")->required();

  auto* feat = app.add_subcommand("features", "dump raw and standardized prompt matrices");
  auto* feat_src = feat->add_option_group("source");
  feat_src->add_option("--config", config, "use the datasets and split of a config");
  feat_src->add_option("--input", input, "single CSV file");
  feat_src->require_option(1);
  feat->add_option("--catalog", catalog, "canonical | prompt133 (with --input)");
  feat->add_option("--out", out, "output JSON (default stdout)");

  TokenizeArgs tk;
  auto* tok = app.add_subcommand("tokenize", "dump the token stream of a CSV file");
  tok->add_option("--input", tk.input, "CSV file")->required();
  tok->add_option("--tokenizer", tk.kind, "linear | quantized");
  tok->add_option("--patch-len", tk.patch_len);
  tok->add_option("--stride", tk.stride);
  tok->add_option("--model-dim", tk.model_dim);
  tok->add_option("--bins", tk.bins);
  tok->add_option("--clip", tk.clip_q);
  tok->add_option("--seed", tk.seed);
  tok->add_option("--out", tk.out, "output JSON (default stdout)");

  auto* ev = app.add_subcommand("eval", "MSE/MAE between a prediction CSV and a target CSV");
  ev->add_option("--pred", pred)->required();
  ev->add_option("--target", target)->required();
  ev->add_option("--out", out, "output JSON (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, seed, out, jobs);
    if (*gen) {
      synth.pattern = ltsm::parse_synth_pattern(pattern);
      ltsm::gen_synth(synth, out);
      return 0;
    }
    if (*feat) return cmd_features(config, input, catalog, out);
    if (*tok) return cmd_tokenize(tk);
    if (*ev) return cmd_eval(pred, target, out);
  } catch (const ltsm::Error& e) {
    std::cerr << "ltsm: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "ltsm: unexpected error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
