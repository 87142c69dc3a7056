#include "ltsm/runner.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <openssl/evp.h>

#include "ltsm/error.hpp"
#include "ltsm/rng.hpp"

namespace ltsm {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << text;
}

Error in_stage(const std::string& stage, const Error& e) { return Error(e.code(), stage + ": " + e.what()); }

std::string hex(const unsigned char* data, unsigned len) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += digits[data[i] >> 4];
    out += digits[data[i] & 0xF];
  }
  return out;
}

}  // namespace

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  return hex(digest, len);
}

std::vector<Dataset> load_datasets(const RunConfig& config) {
  std::vector<Dataset> out;
  for (const auto& ref : config.datasets) {
    CsvOptions opts;
    opts.name = ref.id;
    opts.frequency = ref.frequency;
    try {
      out.push_back(Dataset{ref.id, load_csv(ref.path, opts)});
    } catch (const Error& e) {
      throw in_stage("series-core: dataset '" + ref.id + "'", e);
    }
  }
  return out;
}

RunSummary run(RunConfig config, const RunOverrides& overrides) {
  if (overrides.seed) config.pipeline.seed = *overrides.seed;
  if (overrides.jobs) config.pipeline.jobs = *overrides.jobs;
  if (overrides.output_dir) config.output_dir = *overrides.output_dir;
  if (config.output_dir.empty()) throw ConfigError("output_dir", "no output directory given");
  const auto datasets = load_datasets(config);

  const PipelineConfig& cfg = config.pipeline;
  const auto& ex = config.experiment;
  std::vector<std::pair<std::string, MetricTable>> tables;
  std::vector<std::pair<std::string, const TrainedModels*>> trained;
  MetricTable results;
  nlohmann::json provenance;
  std::vector<ExperimentResult> keep;
  std::vector<DiversityPoint> sweep;
  try {
    switch (ex.mode) {
      case ExperimentMode::Standard:
        keep.push_back(run_standard(datasets, cfg));
        results = keep.back().table;
        tables.emplace_back("standard", results);
        trained.emplace_back("", &keep.back().models);
        provenance = keep.back().provenance;
        break;
      case ExperimentMode::FewShot:
        keep.push_back(run_few_shot(datasets, ex.rate, cfg));
        results = keep.back().table;
        tables.emplace_back("few_shot (rate " + std::to_string(ex.rate) + ")", results);
        trained.emplace_back("", &keep.back().models);
        provenance = keep.back().provenance;
        break;
      case ExperimentMode::ZeroShot: {
        keep.push_back(train_and_evaluate(datasets, {ex.source}, {ex.source}, 1, cfg));
        const Dataset* target = nullptr;
        for (const auto& d : datasets)
          if (d.id == ex.target) target = &d;
        results = run_zero_shot(keep.back().models, *target, cfg);
        tables.emplace_back("zero_shot " + ex.source + " -> " + ex.target, results);
        tables.emplace_back("in-domain " + ex.source, keep.back().table);
        trained.emplace_back("", &keep.back().models);
        provenance = keep.back().provenance;
        provenance["zero_shot_target"] = ex.target;
        break;
      }
      case ExperimentMode::Diversity: {
        sweep = run_diversity_sweep(datasets, ex.first_m, cfg);
        provenance = nlohmann::json::array();
        for (const auto& point : sweep) {
          const std::string tag = "m" + std::to_string(point.first_m);
          tables.emplace_back("diversity first " + std::to_string(point.first_m), point.result.table);
          trained.emplace_back(tag + "_", &point.result.models);
          auto prov = point.result.provenance;
          prov["first_m"] = point.first_m;
          provenance.push_back(prov);
          for (const auto& ds : point.result.table.datasets())
            for (std::size_t h : point.result.table.horizons(ds))
              for (const auto& m : point.result.table.methods())
                if (const auto c = point.result.table.get(ds, h, m)) results.set(ds, h, m + "@" + tag, *c);
        }
        break;
      }
    }
  } catch (const Error& e) {
    throw in_stage(std::string("experiment ") + experiment_mode_name(ex.mode), e);
  }

  RunSummary summary;
  summary.output_dir = config.output_dir;
  std::filesystem::create_directories(config.output_dir);
  auto emit = [&](const std::string& name, const std::string& text) {
    const auto path = config.output_dir / name;
    write_text(path, text);
    summary.artifacts.push_back(path);
  };
  emit("results.csv", results.to_csv());
  const Report report = render_report(tables);
  emit("report.md", report.markdown);

  nlohmann::json training = nlohmann::json::object();
  for (const auto& [prefix, models] : trained) {
    for (const auto& [q, model] : models->by_horizon) {
      const std::string stem = prefix + "h" + std::to_string(q);
      const auto ckpt_path = config.output_dir / ("checkpoint_" + stem + ".ltsm");
      save(model).write(ckpt_path);
      summary.artifacts.push_back(ckpt_path);
      const auto& rep = models->reports.at(q);
      emit("train_report_" + stem + ".csv", rep.to_csv());
      training[stem] = rep.to_json();
    }
  }

  nlohmann::json tables_json = nlohmann::json::array();
  for (const auto& [title, table] : tables) tables_json.push_back({{"title", title}, {"table", table.to_json()}});
  nlohmann::json report_json = {{"config", config.to_json()},
                                {"experiment", experiment_mode_name(ex.mode)},
                                {"tables", tables_json},
                                {"training", training},
                                {"provenance", provenance}};
  emit("report.json", report_json.dump(2));

  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& ref : config.datasets)
    inputs.push_back({{"id", ref.id}, {"path", ref.path.string()}, {"sha256", sha256_file(ref.path)}});
  nlohmann::json manifest = {{"inputs", inputs}, {"config_sha256", ""}, {"seed", cfg.seed}};
  manifest["config_sha256"] = [&] {
    const std::string text = config.to_json().dump();
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr);
    return hex(digest, len);
  }();
  if (!config.prefix_file.empty())
    manifest["prefix_file"] = {{"path", config.prefix_file.string()}, {"sha256", sha256_file(config.prefix_file)}};
  manifest["artifacts"] = nlohmann::json::array();
  for (const auto& a : summary.artifacts) manifest["artifacts"].push_back(a.filename().string());
  emit("manifest.json", manifest.dump(2));

  summary.results = std::move(results);
  return summary;
}

SynthPattern parse_synth_pattern(const std::string& name) {
  if (name == "sine") return SynthPattern::Sine;
  if (name == "trend_seasonal") return SynthPattern::TrendSeasonal;
  if (name == "ar1") return SynthPattern::Ar1;
  throw Error(Errc::InvalidArgument, "unknown pattern '" + name + "' (sine | trend_seasonal | ar1)");
}

namespace {

// Hourly timestamps starting at 2016-07-01 00:00:00.
std::string hourly_stamp(std::size_t i) {
  using namespace std::chrono;
  const sys_days start = year{2016} / July / 1;
  const auto t = start + hours(static_cast<long>(i));
  const sys_days day = floor<days>(t);
  const year_month_day ymd(day);
  const auto hour = duration_cast<hours>(t - day).count();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02ld:00:00", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<long>(hour));
  return buf;
}

}  // namespace

TimeSeries generate_synthetic(const SynthSpec& spec, const std::string& name) {
  if (spec.length < 1) throw Error(Errc::InvalidArgument, "length must be >= 1");
  if (spec.channels < 1) throw Error(Errc::InvalidArgument, "channels must be >= 1");
  SplitMix64 rng(spec.seed);
  const auto t_len = static_cast<Eigen::Index>(spec.length);
  Matrix values(t_len, static_cast<Eigen::Index>(spec.channels));
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    switch (spec.pattern) {
      case SynthPattern::Sine: {
        // Two sinusoids: a daily-like and a slower cycle.
        const double p1 = 24.0, p2 = 24.0 * (5.0 + 3.0 * rng.uniform());
        const double a1 = 1.0 + rng.uniform(), a2 = 0.5 + rng.uniform();
        const double ph1 = two_pi * rng.uniform(), ph2 = two_pi * rng.uniform();
        for (Eigen::Index t = 0; t < t_len; ++t) {
          const double x = static_cast<double>(t);
          values(t, c) = a1 * std::sin(two_pi * x / p1 + ph1) + a2 * std::sin(two_pi * x / p2 + ph2) +
                         spec.noise * rng.normal();
        }
        break;
      }
      case SynthPattern::TrendSeasonal: {
        const double slope = (rng.uniform() - 0.5) * 4.0 / static_cast<double>(spec.length);
        const double level = rng.normal();
        const double amp = 1.0 + rng.uniform();
        const double ph = two_pi * rng.uniform();
        for (Eigen::Index t = 0; t < t_len; ++t) {
          const double x = static_cast<double>(t);
          values(t, c) = level + slope * x + amp * std::sin(two_pi * x / 24.0 + ph) + spec.noise * rng.normal();
        }
        break;
      }
      case SynthPattern::Ar1: {
        double prev = 0.0;
        for (Eigen::Index t = 0; t < t_len; ++t) {
          prev = spec.ar_coef * prev + rng.normal();
          values(t, c) = prev;
        }
        break;
      }
    }
  }
  values *= spec.amplitude;
  std::vector<std::string> names, stamps;
  for (std::size_t c = 0; c < spec.channels; ++c) names.push_back("v" + std::to_string(c));
  for (std::size_t i = 0; i < spec.length; ++i) stamps.push_back(hourly_stamp(i));
  return TimeSeries(name, "1h", std::move(values), std::move(names), std::move(stamps));
}

void gen_synth(const SynthSpec& spec, const std::filesystem::path& out) {
  write_csv(generate_synthetic(spec, out.stem().string()), out);
}

}  // namespace ltsm
