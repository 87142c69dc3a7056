// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
// below. Criterion 8 is report-only and never fails the run.
//
// usage: ltsm_acceptance <path-to-ltsm-cli>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "helpers.hpp"
#include "oracle.hpp"

using namespace ltsm;
namespace fs = std::filesystem;

namespace tol {
constexpr double kFeatureRel = 1e-9;
constexpr double kFeatureSeconds = 5.0;
constexpr double kQuantSeconds = 1.0;
constexpr double kGradRel = 1e-4;
constexpr double kGradSeconds = 30.0;
constexpr double kLoraZeroInit = 1e-12;
constexpr double kLoraMerge = 1e-10;
constexpr double kAccum = 1e-10;
constexpr double kAvgRow = 1e-12;
constexpr double kSmokeSeconds = 300.0;
}  // namespace tol

namespace {

int failures = 0;

void report(int id, bool gating, bool ok, const std::string& title, const std::string& detail) {
  const char* tag = ok ? "PASS" : (gating ? "FAIL" : "SOFT-FAIL");
  std::printf("%-9s [%2d] %s :: %s\n", tag, id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (gating && !ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// Guard so that an unexpected exception marks the criterion failed instead of
// aborting the whole suite.
void criterion(int id, bool gating, const std::string& title, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, gating, false, title, std::string("exception: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

void c1_features() {
  criterion(1, true, "feature oracle suite", [] {
    const auto cat = FeatureCatalog::canonical();
    SplitMix64 rng(20240601);
    std::size_t checked = 0, bad = 0;
    double worst = 0;
    std::string worst_name;
    double lib_seconds = 0;
    for (int n = 0; n < 100; ++n) {
      const std::size_t T = 8 + rng.below(505);
      const double scale = std::exp(4.0 * rng.uniform() - 2.0), offset = 10.0 * rng.normal();
      Matrix m(T, 1);
      for (std::size_t i = 0; i < T; ++i) m(i, 0) = offset + scale * rng.normal();
      const auto t0 = std::chrono::steady_clock::now();
      const Matrix raw = extract_features(th::series_of(m), cat);
      lib_seconds += seconds_since(t0);
      const auto s = th::column(m, 0);
      for (std::size_t f = 0; f < cat.size(); ++f) {
        const auto& d = cat.features()[f];
        const double got = raw(f, 0), want = oracle::feature(d.name, s, d.params.lag, d.params.bins);
        const double rel = std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-300});
        if (rel > worst) worst = rel, worst_name = d.name;
        if (!oracle::close(got, want, tol::kFeatureRel)) ++bad;
        ++checked;
      }
    }
    report(1, true, bad == 0 && lib_seconds < tol::kFeatureSeconds, "feature oracle suite",
           std::to_string(checked) + " values, " + std::to_string(bad) + " outside rel " +
               fmt("%.0e; worst rel %.2e (", tol::kFeatureRel, worst) + worst_name +
               fmt("); extraction %.3f s (limit %.0f s)", lib_seconds, tol::kFeatureSeconds));
  });
}

void c2_quantizer() {
  criterion(2, true, "quantizer round trip", [] {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    for (std::size_t B : {16, 256, 1024}) {
      SplitMix64 rng(B);
      std::vector<double> train(5000);
      for (double& v : train) v = 3.0 + 2.0 * rng.normal();
      const auto q = fit_quantizer(train, B, 0.01);
      const double lo = q.edges().front(), hi = q.edges().back();
      std::vector<double> xs(1000);
      for (double& x : xs) x = (lo + (hi - lo) * rng.uniform()) * q.scale();
      std::sort(xs.begin(), xs.end());
      double worst_ratio = 0;
      bool monotone = true;
      TokenId prev = 0;
      for (double x : xs) {
        const TokenId id = q.quantize(x);
        monotone &= id >= prev;
        prev = id;
        const double err = std::abs(x / q.scale() - q.dequantize(id) / q.scale());
        worst_ratio = std::max(worst_ratio, err / (q.bin_width(id) / 2));
      }
      const bool ok_b = monotone && worst_ratio <= 1.0;
      ok &= ok_b;
      detail += "B=" + std::to_string(B) + fmt(" max err/half-width %.4f", worst_ratio) +
                (monotone ? " monotone; " : " NOT monotone; ");
    }
    const double secs = seconds_since(t0);
    report(2, true, ok && secs < tol::kQuantSeconds, "quantizer round trip",
           detail + fmt("%.3f s (limit %.0f s)", secs, tol::kQuantSeconds));
  });
}

void c3_gradcheck() {
  criterion(3, true, "gradient check, 1 layer, dim 8", [] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto m = build(th::tiny_config(1, 8, 2), FromScratch{31});
    const Matrix x = th::random_matrix(m.config().input_len(), 2, 32), y = th::random_matrix(4, 2, 33);
    const auto r = grad_check(m, x, y, 1e-5);
    const double secs = seconds_since(t0);
    report(3, true, r.max_rel_error < tol::kGradRel && secs < tol::kGradSeconds, "gradient check, 1 layer, dim 8",
           std::to_string(r.per_parameter.size()) + " tensors" +
               fmt(", max rel err %.2e (limit %.0e) at ", r.max_rel_error, tol::kGradRel) + r.worst_parameter +
               fmt("; %.2f s", secs));
  });
}

Corpus corpus_for(const BackboneConfig& c, std::size_t windows, std::uint64_t seed, std::size_t d = 1) {
  const auto ts = th::series_of(th::random_matrix(windows + c.lookback_len + c.horizon - 1, d, seed));
  return mix_corpus({{"A", make_windows(ts, c.lookback_len, c.horizon, 1)}}, seed);
}

PromptBook prompts_for(const BackboneConfig& c, std::size_t d = 1) {
  PromptBook book;
  book.prompts["A"] = PromptMatrix{th::random_matrix(c.prompt_len, d, 99), "acceptance"};
  return book;
}

void c4_lora() {
  criterion(4, true, "LoRA contracts", [] {
    const auto base = build(th::tiny_config(2, 8, 2), FromScratch{41});
    const auto& c = base.config();
    const auto adapted = build(c, LoraFinetune{save(base), LoraSpec{2, 8.0, {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}, 42}});
    double zero_diff = 0;
    for (std::uint64_t i = 0; i < 10; ++i) {
      const Matrix x = th::random_matrix(c.input_len(), 2, 400 + i);
      zero_diff = std::max(zero_diff, th::max_abs_diff(adapted.forward(x), base.forward(x)));
    }
    TrainConfig tc;
    tc.epochs = 1;
    tc.grad_accum_steps = 1;
    tc.batch_size = 1;
    tc.learning_rate = 1e-2;
    const auto trained = train(adapted, corpus_for(c, 50, 43), tc, prompts_for(c));
    std::vector<double> base_before, base_after;
    for (std::size_t i = 0; i < adapted.parameters().size(); ++i) {
      if (adapted.parameters()[i].trainable) continue;
      const auto& a = adapted.parameters()[i].value;
      const auto& b = trained.model.parameters()[i].value;
      base_before.insert(base_before.end(), a.data(), a.data() + a.size());
      base_after.insert(base_after.end(), b.data(), b.data() + b.size());
    }
    const bool frozen = std::memcmp(base_before.data(), base_after.data(), base_before.size() * sizeof(double)) == 0 &&
                        base_before.size() == base.num_parameters();
    const auto merged = merge_lora(trained.model);
    double merge_diff = 0;
    for (std::uint64_t i = 0; i < 10; ++i) {
      const Matrix x = th::random_matrix(c.input_len(), 2, 500 + i);
      merge_diff = std::max(merge_diff, th::max_abs_diff(merged.forward(x), trained.model.forward(x)));
    }
    const bool ok = zero_diff <= tol::kLoraZeroInit && merge_diff <= tol::kLoraMerge && frozen &&
                    trained.report.steps == 50;
    report(4, true, ok, "LoRA contracts",
           fmt("zero-init max diff %.1e (limit %.0e); merged vs adapted %.1e (limit %.0e); ", zero_diff,
               tol::kLoraZeroInit, merge_diff, tol::kLoraMerge) +
               "base payload after " + std::to_string(trained.report.steps) + " steps " +
               (frozen ? "bit-identical" : "CHANGED"));
  });
}

void c5_accumulation() {
  criterion(5, true, "accumulation equivalence", [] {
    const auto m = build(th::tiny_config(1, 8, 2), FromScratch{51});
    const auto& c = m.config();
    const auto full = corpus_for(c, 80, 52, 2);
    double worst = 0;
    std::size_t steps = 0;
    // every prefix length k gives a k-step trajectory; compare both schemes at each
    for (std::size_t k = 1; k <= 20; ++k) {
      std::vector<CorpusEntry> entries(full.entries().begin(), full.entries().begin() + 4 * k);
      const Corpus corpus(full.dataset_ids(), entries);
      TrainConfig acc, big;
      acc.epochs = big.epochs = 1;
      acc.learning_rate = big.learning_rate = 1e-2;
      acc.seed = big.seed = 53;
      acc.grad_accum_steps = 4;
      acc.batch_size = 1;
      big.grad_accum_steps = 1;
      big.batch_size = 4;
      const auto a = train(m, corpus, acc, prompts_for(c, 2)), b = train(m, corpus, big, prompts_for(c, 2));
      const auto pa = a.model.flat_payload(), pb = b.model.flat_payload();
      for (std::size_t i = 0; i < pa.size(); ++i) worst = std::max(worst, std::abs(pa[i] - pb[i]));
      steps = std::max(steps, std::min(a.report.steps, b.report.steps));
    }
    report(5, true, worst <= tol::kAccum && steps == 20, "accumulation equivalence",
           "trajectories of 1..20 steps" + fmt(", max |theta_a - theta_b| %.2e (limit %.0e)", worst, tol::kAccum));
  });
}

void c6_protocol() {
  criterion(6, true, "protocol arithmetic", [] {
    bool ok = true;
    std::string detail;
    for (std::size_t T : {100, 2000, 17420}) {
      const auto s = chronological_split(th::ramp(T), {});
      const std::size_t tr = static_cast<std::size_t>(std::floor(0.7 * T)), va = static_cast<std::size_t>(std::floor(0.1 * T));
      ok &= s.train.length() == tr && s.val.length() == va && s.test.length() == T - tr - va;
      detail += std::to_string(T) + "->" + std::to_string(s.train.length()) + "/" + std::to_string(s.val.length()) +
                "/" + std::to_string(s.test.length()) + " ";
    }
    const std::size_t T = 12194;  // a train split of 17420 rows
    std::vector<std::vector<std::size_t>> sets;
    for (std::size_t r : {40, 20, 10}) {
      const auto ds = downsample(th::ramp(T), r);
      ok &= ds.length() == (T + r - 1) / r;
      sets.push_back(downsample_indices(T, r));
      detail += "r" + std::to_string(r) + ":" + std::to_string(ds.length()) + " ";
    }
    const bool nested = std::includes(sets[1].begin(), sets[1].end(), sets[0].begin(), sets[0].end()) &&
                        std::includes(sets[2].begin(), sets[2].end(), sets[1].begin(), sets[1].end()) &&
                        sets[0].size() < sets[1].size() && sets[1].size() < sets[2].size();
    const std::size_t patches = patchify(std::vector<double>(336, 0.0), {16, 8}).size();
    ok &= nested && patches == 41;
    report(6, true, ok, "protocol arithmetic",
           detail + (nested ? "nested " : "NOT nested ") + "patches(336,16,8)=" + std::to_string(patches));
  });
}

PipelineConfig smoke_pipeline(std::uint64_t seed) {
  PipelineConfig p;
  // The 400-row test split of a 2000-step series cannot hold 336 + 96 rows,
  // so the lookback is shortened; the horizon stays at 96.
  p.lookback_len = 192;
  p.horizons = {96};
  p.prompt_mode = PromptMode::TsPrompt;
  p.backbone.tokenizer = TokenizerKind::Linear;
  p.backbone.num_layers = 2;
  p.backbone.model_dim = 16;
  p.backbone.num_heads = 2;
  p.backbone.ff_dim = 32;
  p.backbone.patch = {16, 8};
  p.paradigm = ParadigmKind::FromScratch;
  p.train.epochs = 10;
  p.train.grad_accum_steps = 8;
  p.train.learning_rate = 1e-3;
  p.train_stride = 2;
  p.eval_stride = 1;
  p.baselines = true;
  p.seed = seed;
  return p;
}

void c7_smoke() {
  criterion(7, true, "learning smoke test", [] {
    const auto t0 = std::chrono::steady_clock::now();
    SynthSpec s;
    s.length = 2000;
    s.seed = 7;
    const std::vector<Dataset> data{{"sines", generate_synthetic(s, "sines")}};
    const auto r = run_standard(data, smoke_pipeline(7));
    const double model = r.table.get("sines", 96, "ltsm")->mse;
    const double persist = r.table.get("sines", 96, "persistence")->mse;
    const double secs = seconds_since(t0);
    report(7, true, model < persist && secs < tol::kSmokeSeconds, "learning smoke test",
           fmt("test MSE %.4f vs persistence %.4f at horizon 96; %.1f s (limit %.0f s)", model, persist, secs,
               tol::kSmokeSeconds));
  });
}

void c8_prompt_axis() {
  criterion(8, false, "prompt axis (report-only)", [] {
    std::vector<Dataset> data;
    for (int i = 0; i < 3; ++i) {
      SynthSpec s;
      s.pattern = static_cast<SynthPattern>(i);
      s.length = 1200;
      s.seed = 80 + i;
      s.amplitude = std::pow(4.0, i);
      s.noise = 0.1;
      data.push_back({"d" + std::to_string(i), generate_synthetic(s, "d" + std::to_string(i))});
    }
    int wins = 0;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto p = smoke_pipeline(seed);
      p.lookback_len = 96;
      p.horizons = {48};
      p.train.epochs = 4;
      p.train_stride = 4;
      p.eval_stride = 4;
      p.baselines = false;
      auto mean_mse = [&](PromptMode mode) {
        p.prompt_mode = mode;
        const auto t = run_standard(data, p).table;
        double acc = 0;
        for (const auto& d : data) acc += t.get(d.id, 48, "ltsm")->mse;
        return acc / data.size();
      };
      const double with = mean_mse(PromptMode::TsPrompt), without = mean_mse(PromptMode::None);
      wins += with <= without;
      detail += fmt("%.4f/%.4f ", with, without);
    }
    report(8, false, wins >= 3, "prompt axis (report-only)",
           std::to_string(wins) + "/5 seeds with ts_prompt <= no prompt; mse prompt/none: " + detail);
  });
}

void c9_zero_shot() {
  criterion(9, true, "zero-shot harness", [] {
    std::vector<Dataset> data;
    for (int i = 0; i < 3; ++i) {
      SynthSpec s;
      s.pattern = static_cast<SynthPattern>(i);
      s.length = 700;
      s.channels = 1 + i % 2;
      s.seed = 90 + i;
      data.push_back({"z" + std::to_string(i), generate_synthetic(s, "z" + std::to_string(i))});
    }
    PipelineConfig p = smoke_pipeline(9);
    p.lookback_len = 48;
    p.horizons = {12, 24, 36, 48};
    p.train.epochs = 1;
    p.train_stride = 4;
    bool hashes_same = true, populated = true;
    double worst_avg = 0;
    int pairs = 0;
    for (int src = 0; src < 3; ++src) {
      const auto trained = train_and_evaluate(data, {data[src].id}, {data[src].id}, 1, p);
      std::map<std::size_t, std::string> before;
      for (const auto& [q, m] : trained.models.by_horizon) before[q] = payload_sha256(m);
      for (int tgt = 0; tgt < 3; ++tgt) {
        if (tgt == src) continue;
        const auto t = run_zero_shot(trained.models, data[tgt], p);
        ++pairs;
        for (const auto& [q, m] : trained.models.by_horizon) hashes_same &= payload_sha256(m) == before[q];
        populated &= t.methods().size() == 3;
        for (const auto& method : t.methods()) {
          double s = 0, a = 0;
          for (std::size_t q : p.horizons) {
            const auto cell = t.get(data[tgt].id, q, method);
            populated &= cell.has_value();
            if (!cell) continue;
            s += cell->mse;
            a += cell->mae;
          }
          const auto avg = t.average(data[tgt].id, method);
          worst_avg = std::max({worst_avg, std::abs(avg.mse - s / 4), std::abs(avg.mae - a / 4)});
        }
      }
    }
    report(9, true, hashes_same && populated && worst_avg <= tol::kAvgRow, "zero-shot harness",
           std::to_string(pairs) + " source/target pairs; payload hashes " + (hashes_same ? "unchanged" : "CHANGED") +
               "; tables " + (populated ? "populated" : "INCOMPLETE") +
               fmt("; avg-row max deviation %.1e (limit %.0e)", worst_avg, tol::kAvgRow));
  });
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void c10_determinism(const std::string& cli) {
  criterion(10, true, "end-to-end determinism", [&] {
    const fs::path dir = fs::temp_directory_path() / "ltsm_acceptance_e2e";
    fs::remove_all(dir);
    fs::create_directories(dir);
    SynthSpec a;
    a.length = 900;
    a.seed = 1;
    gen_synth(a, dir / "a.csv");
    SynthSpec b;
    b.pattern = SynthPattern::Ar1;
    b.length = 800;
    b.channels = 2;
    b.seed = 2;
    gen_synth(b, dir / "b.csv");
    std::ofstream(dir / "X.json") << R"({
      "datasets": [{"id": "a", "path": "a.csv"}, {"id": "b", "path": "b.csv"}],
      "lookback_len": 96, "horizons": [24, 48], "train_stride": 4,
      "backbone": {"num_layers": 1, "model_dim": 16, "num_heads": 2, "ff_dim": 32},
      "train": {"epochs": 2, "grad_accum_steps": 4},
      "output_dir": "out"
    })";
    const std::string base = "\"" + cli + "\" run --config \"" + (dir / "X.json").string() + "\" --seed 7";
    const int r1 = std::system((base + " --out \"" + (dir / "run1").string() + "\" --jobs 2 > /dev/null").c_str());
    const int r2 = std::system((base + " --out \"" + (dir / "run2").string() + "\" --jobs 1 > /dev/null").c_str());
    const std::string x = slurp(dir / "run1" / "results.csv"), y = slurp(dir / "run2" / "results.csv");
    const bool ok = r1 == 0 && r2 == 0 && !x.empty() && x == y;
    report(10, true, ok, "end-to-end determinism",
           "exit codes " + std::to_string(r1) + "/" + std::to_string(r2) + "; results.csv " +
               std::to_string(x.size()) + " bytes, " + (x == y ? "byte-identical" : "DIFFERENT"));
    fs::remove_all(dir);
  });
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <path-to-ltsm-cli>\n", argv[0]);
    return 2;
  }
  c1_features();
  c2_quantizer();
  c3_gradcheck();
  c4_lora();
  c5_accumulation();
  c6_protocol();
  c7_smoke();
  c8_prompt_axis();
  c9_zero_shot();
  c10_determinism(argv[1]);
  std::printf("%s: %d gating criterion(s) failed\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
