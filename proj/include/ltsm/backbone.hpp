#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "ltsm/tokenizer.hpp"
#include "ltsm/types.hpp"

namespace ltsm {

enum class TokenizerKind { Linear, Quantized };

const char* tokenizer_kind_name(TokenizerKind kind);
TokenizerKind parse_tokenizer_kind(const std::string& name);

struct BackboneConfig {
  std::size_t num_layers = 3;
  std::size_t model_dim = 32;
  std::size_t num_heads = 4;
  std::size_t ff_dim = 64;
  std::size_t horizon = 96;
  std::size_t prompt_len = 0;    // M; rows of the prompt block
  std::size_t lookback_len = 336;  // E
  TokenizerKind tokenizer = TokenizerKind::Linear;
  PatchConfig patch{};
  std::size_t num_bins = 256;  // quantized tokenizer only
  bool instance_norm = true;

  void validate() const;
  std::size_t input_len() const { return prompt_len + lookback_len; }
  /// Tokens per channel after padding/patching (or one per sample when quantized).
  std::size_t num_tokens() const;
  /// Closed-form parameter count of the bare (adapter-free) model.
  std::size_t parameter_count() const;

  nlohmann::json to_json() const;
  static BackboneConfig from_json(const nlohmann::json& j);
  /// Hex FNV-1a of the canonical JSON; identifies architecture compatibility.
  std::string hash() const;

  bool operator==(const BackboneConfig&) const = default;
};

struct Parameter {
  std::string name;
  Matrix value;
  bool trainable = true;
};

struct LoraSpec {
  std::size_t rank = 4;
  double alpha = 8.0;
  /// Suffixes of the weight matrices that receive adapters.
  std::vector<std::string> targets{"attn.wq", "attn.wk", "attn.wv", "attn.wo"};
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static LoraSpec from_json(const nlohmann::json& j);
};

/// Manifest + flat little-endian f64 payload, in manifest order.
struct Checkpoint {
  nlohmann::json manifest;
  std::vector<double> payload;

  std::string to_bytes() const;
  static Checkpoint from_bytes(const std::string& bytes);
  void write(const std::filesystem::path& path) const;
  static Checkpoint read(const std::filesystem::path& path);
};

/// Per-parameter gradient buffers aligned with Backbone::parameters().
struct Gradients {
  std::vector<Matrix> values;

  void set_zero();
  void scale(double factor);
  void add(const Gradients& other);
};

struct FromScratch {
  std::uint64_t seed = 0;
};
struct FullFinetune {
  Checkpoint checkpoint;
};
struct LoraFinetune {
  Checkpoint checkpoint;
  LoraSpec lora;
};
using Paradigm = std::variant<FromScratch, FullFinetune, LoraFinetune>;

/// Decoder-style transformer forecaster. Each channel of the augmented input
/// is tokenized and processed independently with shared weights; a linear
/// head maps the flattened final token states to the horizon.
class Backbone {
 public:
  Backbone(BackboneConfig config, std::vector<Parameter> params,
           std::optional<Quantizer> quantizer = std::nullopt,
           std::optional<LoraSpec> lora = std::nullopt);

  const BackboneConfig& config() const noexcept { return config_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  std::vector<Parameter>& mutable_parameters() noexcept { return params_; }
  const Parameter& parameter(const std::string& name) const;
  std::size_t parameter_index(const std::string& name) const;
  std::size_t num_parameters() const;
  std::size_t num_trainable() const;
  const std::optional<Quantizer>& quantizer() const noexcept { return quantizer_; }
  const std::optional<LoraSpec>& lora() const noexcept { return lora_; }
  bool has_adapters() const noexcept { return lora_.has_value(); }

  Gradients zero_gradients() const;

  /// (M+E) x d augmented input -> Q x d prediction.
  Matrix forward(const Matrix& augmented) const;

  /// Adds weight * d(mse(forward(augmented), target))/d(theta) into `grads`
  /// for trainable parameters and returns the loss.
  double accumulate_gradients(const Matrix& augmented, const Matrix& target, Gradients& grads,
                              double weight = 1.0) const;

  /// Raw payload bytes in parameter order (used for hashing and checkpoints).
  std::vector<double> flat_payload() const;

 private:
  friend class BackboneKernel;
  BackboneConfig config_;
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
  std::optional<Quantizer> quantizer_;
  std::optional<LoraSpec> lora_;
};

Backbone build(const BackboneConfig& config, const Paradigm& paradigm,
               std::optional<Quantizer> quantizer = std::nullopt);

/// Folds every adapter into its base weight: W' = W + (alpha/r) B A.
Backbone merge_lora(const Backbone& model);

Checkpoint save(const Backbone& model);
Backbone load(const Checkpoint& checkpoint);

/// Normalized per-channel input as seen by the tokenizer: prompt rows copied,
/// lookback rows instance-normalized when enabled. Used to fit quantizers.
Matrix normalized_channels(const BackboneConfig& config, const Matrix& augmented);

/// Hex SHA-256 of the little-endian parameter payload.
std::string payload_sha256(const Backbone& model);

}  // namespace ltsm
