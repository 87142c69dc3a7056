#include "ltsm/tokenizer.hpp"

#include <algorithm>
#include <cmath>

#include "ltsm/error.hpp"

namespace ltsm {

void PatchConfig::validate() const {
  if (patch_len < 1) throw Error(Errc::InvalidArgument, "patch_len must be >= 1");
  if (stride < 1 || stride > patch_len)
    throw Error(Errc::InvalidArgument, "stride must satisfy 1 <= stride <= patch_len");
}

std::size_t patch_count(std::size_t length, const PatchConfig& cfg) {
  cfg.validate();
  if (length < cfg.patch_len)
    throw Error(Errc::InputTooShort, "length " + std::to_string(length) + " < patch_len " +
                                         std::to_string(cfg.patch_len));
  return (length - cfg.patch_len) / cfg.stride + 1;
}

std::vector<Vector> patchify(std::span<const double> x, const PatchConfig& cfg) {
  const std::size_t n = patch_count(x.size(), cfg);
  std::vector<Vector> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k)
    out.emplace_back(Eigen::Map<const Vector>(x.data() + k * cfg.stride,
                                              static_cast<Eigen::Index>(cfg.patch_len)));
  return out;
}

Matrix patch_matrix(std::span<const double> x, const PatchConfig& cfg) {
  const std::size_t n = patch_count(x.size(), cfg);
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.patch_len));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < cfg.patch_len; ++i)
      out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = x[k * cfg.stride + i];
  return out;
}

std::size_t padded_length(std::size_t length, const PatchConfig& cfg) {
  cfg.validate();
  if (length <= cfg.patch_len) return cfg.patch_len;
  const std::size_t rem = (length - cfg.patch_len) % cfg.stride;
  return rem == 0 ? length : length + (cfg.stride - rem);
}

std::vector<double> pad_to_grid(std::span<const double> x, const PatchConfig& cfg) {
  if (x.empty()) throw Error(Errc::InputTooShort, "cannot pad an empty channel");
  const std::size_t target = padded_length(x.size(), cfg);
  std::vector<double> out(target - x.size(), x.front());
  out.insert(out.end(), x.begin(), x.end());
  return out;
}

LinearTokenizer LinearTokenizer::random(std::size_t model_dim, std::size_t patch_len,
                                        std::uint64_t seed) {
  if (model_dim < 1 || patch_len < 1) throw Error(Errc::InvalidArgument, "empty tokenizer shape");
  SplitMix64 rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(patch_len));
  LinearTokenizer tok;
  tok.weight = Matrix(static_cast<Eigen::Index>(model_dim), static_cast<Eigen::Index>(patch_len));
  for (Eigen::Index i = 0; i < tok.weight.size(); ++i) tok.weight.data()[i] = scale * rng.normal();
  tok.bias = Vector::Zero(static_cast<Eigen::Index>(model_dim));
  return tok;
}

std::vector<Vector> linear_embed(const std::vector<Vector>& patches, const LinearTokenizer& tok) {
  std::vector<Vector> out;
  out.reserve(patches.size());
  for (const auto& p : patches) {
    if (p.size() != tok.weight.cols())
      throw Error(Errc::ShapeError, "patch length " + std::to_string(p.size()) +
                                        " does not match tokenizer width " +
                                        std::to_string(tok.weight.cols()));
    out.push_back(tok.weight * p + tok.bias);
  }
  return out;
}

LinearTokenizerGrad linear_embed_backward(const std::vector<Vector>& patches,
                                          const std::vector<Vector>& grad_tokens,
                                          const LinearTokenizer& tok) {
  if (patches.size() != grad_tokens.size())
    throw Error(Errc::ShapeError, "one upstream gradient per patch required");
  LinearTokenizerGrad g{Matrix::Zero(tok.weight.rows(), tok.weight.cols()),
                        Vector::Zero(tok.bias.size())};
  for (std::size_t i = 0; i < patches.size(); ++i) {
    g.weight.noalias() += grad_tokens[i] * patches[i].transpose();
    g.bias += grad_tokens[i];
  }
  return g;
}

Quantizer::Quantizer(std::vector<double> edges, double scale) : edges_(std::move(edges)), scale_(scale) {
  if (edges_.size() < 3) throw Error(Errc::InvalidArgument, "quantizer needs at least 2 bins");
  for (std::size_t i = 0; i + 1 < edges_.size(); ++i)
    if (!(edges_[i] < edges_[i + 1]))
      throw Error(Errc::DegenerateRange, "bin edges must be strictly increasing");
  if (!(scale_ > 0.0) || !std::isfinite(scale_))
    throw Error(Errc::DegenerateRange, "quantizer scale must be positive and finite");
}

double Quantizer::bin_width(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= num_bins())
    throw Error(Errc::InvalidToken, "token " + std::to_string(id));
  return edges_[static_cast<std::size_t>(id) + 1] - edges_[static_cast<std::size_t>(id)];
}

double Quantizer::bin_center(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= num_bins())
    throw Error(Errc::InvalidToken, "token " + std::to_string(id) + " outside [0, " +
                                        std::to_string(num_bins()) + ")");
  const auto i = static_cast<std::size_t>(id);
  return 0.5 * (edges_[i] + edges_[i + 1]);
}

TokenId Quantizer::quantize(double value) const {
  const double x = value / scale_;
  // Half-open [e_i, e_{i+1}); the terminal bin is closed and both ends clamp.
  const auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
  const auto pos = static_cast<TokenId>(it - edges_.begin()) - 1;
  return std::clamp<TokenId>(pos, 0, static_cast<TokenId>(num_bins()) - 1);
}

double Quantizer::dequantize(TokenId id) const { return bin_center(id) * scale_; }

std::vector<TokenId> Quantizer::quantize(std::span<const double> values) const {
  std::vector<TokenId> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(), [this](double v) { return quantize(v); });
  return out;
}

std::vector<double> Quantizer::dequantize(std::span<const TokenId> ids) const {
  std::vector<double> out(ids.size());
  std::transform(ids.begin(), ids.end(), out.begin(), [this](TokenId id) { return dequantize(id); });
  return out;
}

nlohmann::json Quantizer::to_json() const {
  return {{"num_bins", num_bins()}, {"scale", scale_}, {"edges", edges_}};
}

Quantizer Quantizer::from_json(const nlohmann::json& j) {
  Quantizer q(j.at("edges").get<std::vector<double>>(), j.at("scale").get<double>());
  if (j.contains("num_bins") && j["num_bins"].get<std::size_t>() != q.num_bins())
    throw Error(Errc::ShapeError, "num_bins does not match edge count");
  return q;
}

Quantizer fit_quantizer(std::span<const double> values, std::size_t num_bins, double clip_q) {
  if (num_bins < 2) throw Error(Errc::InvalidArgument, "num_bins must be >= 2");
  if (!(clip_q >= 0.0 && clip_q < 0.5)) throw Error(Errc::InvalidArgument, "clip_q must lie in [0, 0.5)");
  if (values.size() < 2) throw Error(Errc::DegenerateRange, "need at least 2 values");
  double abs_sum = 0.0;
  for (double v : values) abs_sum += std::abs(v);
  const double scale = abs_sum / static_cast<double>(values.size());
  if (scale == 0.0) throw Error(Errc::DegenerateRange, "all values are zero");

  std::vector<double> scaled(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) scaled[i] = values[i] / scale;
  std::sort(scaled.begin(), scaled.end());
  auto quantile = [&](double p) {
    const double h = p * static_cast<double>(scaled.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, scaled.size() - 1);
    return scaled[lo] + (h - static_cast<double>(lo)) * (scaled[hi] - scaled[lo]);
  };
  const double lo = quantile(clip_q);
  const double hi = quantile(1.0 - clip_q);
  if (!(hi > lo)) throw Error(Errc::DegenerateRange, "values span an empty range");

  std::vector<double> edges(num_bins + 1);
  for (std::size_t i = 0; i <= num_bins; ++i)
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(num_bins);
  edges.back() = hi;
  return Quantizer(std::move(edges), scale);
}

}  // namespace ltsm
