#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

#include "ltsm/rng.hpp"
#include "ltsm/types.hpp"

namespace ltsm {

struct PatchConfig {
  std::size_t patch_len = 16;
  std::size_t stride = 8;

  void validate() const;
  bool operator==(const PatchConfig&) const = default;
};

std::size_t patch_count(std::size_t length, const PatchConfig& cfg);

/// Contiguous slices at offsets 0, stride, 2*stride, ...
std::vector<Vector> patchify(std::span<const double> x, const PatchConfig& cfg);
/// Same patches as rows of an (N x patch_len) matrix.
Matrix patch_matrix(std::span<const double> x, const PatchConfig& cfg);

/// Length after left-padding so the patch grid ends exactly on the last sample.
std::size_t padded_length(std::size_t length, const PatchConfig& cfg);
/// Left-pads by repeating the first value up to padded_length().
std::vector<double> pad_to_grid(std::span<const double> x, const PatchConfig& cfg);

/// Trainable affine map from a patch to a K-dimensional token.
struct LinearTokenizer {
  Matrix weight;  // K x patch_len
  Vector bias;    // K
  bool trainable = true;

  static LinearTokenizer random(std::size_t model_dim, std::size_t patch_len, std::uint64_t seed);
  std::size_t model_dim() const noexcept { return static_cast<std::size_t>(weight.rows()); }
};

std::vector<Vector> linear_embed(const std::vector<Vector>& patches, const LinearTokenizer& tok);

struct LinearTokenizerGrad {
  Matrix weight;
  Vector bias;
};

/// Gradients of sum_i <grad_tokens[i], token_i> with respect to W and b.
LinearTokenizerGrad linear_embed_backward(const std::vector<Vector>& patches,
                                          const std::vector<Vector>& grad_tokens,
                                          const LinearTokenizer& tok);

using TokenId = std::int64_t;

/// Mean-absolute scaling followed by uniform binning of the scaled values.
class Quantizer {
 public:
  Quantizer(std::vector<double> edges, double scale);

  std::size_t num_bins() const noexcept { return edges_.size() - 1; }
  const std::vector<double>& edges() const noexcept { return edges_; }
  double scale() const noexcept { return scale_; }
  double bin_width(TokenId id) const;
  double bin_center(TokenId id) const;  // in scaled space

  TokenId quantize(double value) const;
  double dequantize(TokenId id) const;
  std::vector<TokenId> quantize(std::span<const double> values) const;
  std::vector<double> dequantize(std::span<const TokenId> ids) const;

  nlohmann::json to_json() const;
  static Quantizer from_json(const nlohmann::json& j);

 private:
  std::vector<double> edges_;
  double scale_;
};

/// Edges span the [clip_q, 1 - clip_q] quantiles of values / mean|values|.
Quantizer fit_quantizer(std::span<const double> values, std::size_t num_bins, double clip_q);

}  // namespace ltsm
