#include "ltsm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include "ltsm/error.hpp"
#include "ltsm/rng.hpp"

namespace ltsm {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw Error(Errc::InvalidArgument, "learning_rate must be finite and >= 0");
  if (epochs < 1) throw Error(Errc::InvalidArgument, "epochs must be >= 1");
  if (grad_accum_steps < 1) throw Error(Errc::InvalidArgument, "grad_accum_steps must be >= 1");
  if (batch_size < 1) throw Error(Errc::InvalidArgument, "batch_size must be >= 1");
  if (!(lr_min >= 0.0) || lr_min > learning_rate)
    throw Error(Errc::InvalidArgument, "lr_min must lie in [0, learning_rate]");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"epochs", epochs}, {"grad_accum_steps", grad_accum_steps},
          {"batch_size", batch_size},       {"seed", seed},     {"lr_min", lr_min}};
}

nlohmann::json TrainReport::to_json() const {
  return {{"train_loss", train_loss}, {"val_loss", val_loss}, {"lr", lr},
          {"steps", steps},           {"wall_seconds", wall_seconds}};
}

std::string TrainReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_mse,val_mse,lr\n";
  for (std::size_t e = 0; e < train_loss.size(); ++e) {
    out << e + 1 << ',' << train_loss[e] << ',';
    if (e < val_loss.size()) out << val_loss[e];
    out << ',' << lr[e] << '\n';
  }
  return out.str();
}

double mse_loss(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw Error(Errc::ShapeError, "prediction and target shapes differ");
  if (pred.size() == 0) throw Error(Errc::ShapeError, "empty prediction");
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base, double floor) {
  if (total_steps < 1) throw Error(Errc::InvalidArgument, "total_steps must be >= 1");
  if (step > total_steps)
    throw Error(Errc::InvalidStep, "step " + std::to_string(step) + " > total " + std::to_string(total_steps));
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * frac));
}

AdamState AdamState::zeros_like(const std::vector<Parameter>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    s.v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
  return s;
}

void adam_step(std::vector<Parameter>& params, const Gradients& grads, AdamState& state,
               const AdamHyper& hyper) {
  if (grads.values.size() != params.size() || state.m.size() != params.size())
    throw Error(Errc::ShapeError, "parameters, gradients and optimizer state are misaligned");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].trainable && !grads.values[i].allFinite())
      throw NumericalError(static_cast<long>(state.step), "non-finite gradient for '" + params[i].name + "'");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    const Matrix& g = grads.values[i];
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g.cwiseProduct(g);
    params[i].value.array() -=
        hyper.lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + hyper.eps);
  }
}

double corpus_loss(const Backbone& model, const Corpus& corpus, const PromptBook& prompts) {
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, "cannot evaluate an empty corpus");
  double acc = 0.0;
  for (const auto& e : corpus.entries())
    acc += mse_loss(model.forward(prompts.augment(e.dataset_id, e.window.lookback)), e.window.target);
  return acc / static_cast<double>(corpus.size());
}

TrainResult train(Backbone model, const Corpus& corpus, const TrainConfig& cfg, const PromptBook& prompts,
                  const Corpus* validation) {
  cfg.validate();
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, "training corpus is empty");
  const std::size_t micro_batches = corpus.size() / cfg.batch_size;
  if (micro_batches == 0)
    throw Error(Errc::InvalidArgument, "corpus of " + std::to_string(corpus.size()) +
                                           " windows is smaller than one batch");
  const std::size_t steps_per_epoch = (micro_batches + cfg.grad_accum_steps - 1) / cfg.grad_accum_steps;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  const auto started = std::chrono::steady_clock::now();

  TrainReport report;
  AdamState state = AdamState::zeros_like(model.parameters());
  Gradients grads = model.zero_gradients();
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = seeded_permutation(corpus.size(), derive_seed(cfg.seed, "epoch-" + std::to_string(epoch)));
    double epoch_loss = 0.0;
    std::size_t pending = 0;
    double last_lr = cfg.learning_rate;
    grads.set_zero();
    for (std::size_t mb = 0; mb < micro_batches; ++mb) {
      double batch_loss = 0.0;
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const auto& e = corpus.entries()[order[mb * cfg.batch_size + b]];
        batch_loss += model.accumulate_gradients(prompts.augment(e.dataset_id, e.window.lookback),
                                                 e.window.target, grads, inv_batch);
      }
      epoch_loss += batch_loss * inv_batch;
      ++pending;
      if (pending == cfg.grad_accum_steps || mb + 1 == micro_batches) {
        grads.scale(1.0 / static_cast<double>(pending));
        last_lr = cosine_lr(report.steps, total_steps, cfg.learning_rate, cfg.lr_min);
        try {
          adam_step(model.mutable_parameters(), grads, state, AdamHyper{last_lr});
        } catch (const NumericalError&) {
          throw NumericalError(static_cast<long>(report.steps), "non-finite gradient during training");
        }
        report.step_lr.push_back(last_lr);
        ++report.steps;
        grads.set_zero();
        pending = 0;
      }
    }
    const double mean_loss = epoch_loss / static_cast<double>(micro_batches);
    if (!std::isfinite(mean_loss)) throw NumericalError(static_cast<long>(report.steps), "non-finite training loss");
    report.train_loss.push_back(mean_loss);
    report.lr.push_back(last_lr);
    if (validation != nullptr && !validation->empty())
      report.val_loss.push_back(corpus_loss(model, *validation, prompts));
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return TrainResult{std::move(model), std::move(report)};
}

namespace {
constexpr double kZeroGradNorm = 1e-8;
}  // namespace

GradCheckResult grad_check(const Backbone& model, const Matrix& augmented, const Matrix& target, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw Error(Errc::InvalidArgument, "eps must be positive");
  Gradients analytic = model.zero_gradients();
  model.accumulate_gradients(augmented, target, analytic);

  Backbone probe = model;
  GradCheckResult result;
  auto& params = probe.mutable_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    Matrix numeric(params[i].value.rows(), params[i].value.cols());
    for (Eigen::Index k = 0; k < params[i].value.size(); ++k) {
      double& theta = params[i].value.data()[k];
      const double saved = theta;
      theta = saved + eps;
      const double up = mse_loss(probe.forward(augmented), target);
      theta = saved - eps;
      const double down = mse_loss(probe.forward(augmented), target);
      theta = saved;
      numeric.data()[k] = (up - down) / (2.0 * eps);
    }
    // Key biases, for instance, have an exactly zero gradient because they
    // shift a whole score row. Both sides are then pure rounding noise, so
    // such tensors are judged by their absolute error instead.
    const double scale = std::max(analytic.values[i].norm(), numeric.norm());
    const double diff = (analytic.values[i] - numeric).norm();
    const double rel = scale < kZeroGradNorm ? diff : diff / scale;
    result.per_parameter.emplace_back(params[i].name, rel);
    if (rel >= result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_parameter = params[i].name;
    }
  }
  return result;
}

}  // namespace ltsm
