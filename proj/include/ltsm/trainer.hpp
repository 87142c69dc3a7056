#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "ltsm/backbone.hpp"
#include "ltsm/prompt.hpp"
#include "ltsm/series.hpp"

namespace ltsm {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 10;
  std::size_t grad_accum_steps = 64;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  double lr_min = 0.0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct TrainReport {
  std::vector<double> train_loss;  // one per epoch
  std::vector<double> val_loss;    // one per epoch; empty without a validation corpus
  std::vector<double> lr;          // lr of the last optimizer step in each epoch
  std::vector<double> step_lr;     // every optimizer step
  std::size_t steps = 0;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
  /// epoch,train_mse,val_mse,lr
  std::string to_csv() const;
};

double mse_loss(const Matrix& pred, const Matrix& target);

/// base at t = 0, floor at t = total.
double cosine_lr(std::size_t step, std::size_t total_steps, double base, double floor = 0.0);

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t step = 0;

  static AdamState zeros_like(const std::vector<Parameter>& params);
};

/// One bias-corrected Adam update of every trainable parameter.
void adam_step(std::vector<Parameter>& params, const Gradients& grads, AdamState& state,
               const AdamHyper& hyper);

struct TrainResult {
  Backbone model;
  TrainReport report;
};

/// Mini-batch Adam with gradient accumulation and a per-step cosine schedule.
/// Windows are reshuffled every epoch from `cfg.seed`; an incomplete trailing
/// micro-batch is dropped and a partial accumulation group is flushed at the
/// end of each epoch.
TrainResult train(Backbone model, const Corpus& corpus, const TrainConfig& cfg,
                  const PromptBook& prompts = {}, const Corpus* validation = nullptr);

/// Mean per-window MSE of the model over a corpus.
double corpus_loss(const Backbone& model, const Corpus& corpus, const PromptBook& prompts = {});

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::vector<std::pair<std::string, double>> per_parameter;
};

/// Analytic MSE gradients vs central differences, per trainable tensor.
/// The relative error of a tensor is |g_a - g_fd|_2 / max(|g_a|_2, |g_fd|_2).
/// Tensors whose gradient norms are both below 1e-8 report |g_a - g_fd|_2.
GradCheckResult grad_check(const Backbone& model, const Matrix& augmented, const Matrix& target,
                           double eps = 1e-5);

}  // namespace ltsm
