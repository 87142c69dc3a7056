#include "ltsm/backbone.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <openssl/evp.h>

#include "ltsm/error.hpp"
#include "ltsm/rng.hpp"

namespace ltsm {

const char* tokenizer_kind_name(TokenizerKind kind) {
  return kind == TokenizerKind::Linear ? "linear" : "quantized";
}

TokenizerKind parse_tokenizer_kind(const std::string& name) {
  if (name == "linear") return TokenizerKind::Linear;
  if (name == "quantized") return TokenizerKind::Quantized;
  throw Error(Errc::InvalidArgument, "unknown tokenizer '" + name + "'");
}

void BackboneConfig::validate() const {
  if (num_layers < 1) throw Error(Errc::InvalidArgument, "num_layers must be >= 1");
  if (model_dim < 1 || num_heads < 1 || model_dim % num_heads != 0)
    throw Error(Errc::InvalidArgument, "model_dim must be a positive multiple of num_heads");
  if (ff_dim < 1 || horizon < 1 || lookback_len < 1)
    throw Error(Errc::InvalidArgument, "ff_dim, horizon and lookback_len must be >= 1");
  patch.validate();
  if (tokenizer == TokenizerKind::Quantized && num_bins < 2)
    throw Error(Errc::InvalidArgument, "num_bins must be >= 2");
}

std::size_t BackboneConfig::num_tokens() const {
  if (tokenizer == TokenizerKind::Quantized) return input_len();
  return patch_count(padded_length(input_len(), patch), patch);
}

std::size_t BackboneConfig::parameter_count() const {
  const std::size_t k = model_dim, f = ff_dim, n = num_tokens();
  const std::size_t tok = tokenizer == TokenizerKind::Linear ? k * patch.patch_len + k : num_bins * k;
  const std::size_t layer = 4 * k * k + 9 * k + 2 * f * k + f;
  return tok + n * k + num_layers * layer + 2 * k + horizon * n * k + horizon;
}

nlohmann::json BackboneConfig::to_json() const {
  return {{"num_layers", num_layers},   {"model_dim", model_dim},
          {"num_heads", num_heads},     {"ff_dim", ff_dim},
          {"horizon", horizon},         {"prompt_len", prompt_len},
          {"lookback_len", lookback_len}, {"tokenizer", tokenizer_kind_name(tokenizer)},
          {"patch_len", patch.patch_len}, {"stride", patch.stride},
          {"num_bins", num_bins},       {"instance_norm", instance_norm},
          {"positional_encoding", "absolute"}};
}

BackboneConfig BackboneConfig::from_json(const nlohmann::json& j) {
  BackboneConfig c;
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.model_dim = j.at("model_dim").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.ff_dim = j.at("ff_dim").get<std::size_t>();
  c.horizon = j.at("horizon").get<std::size_t>();
  c.prompt_len = j.at("prompt_len").get<std::size_t>();
  c.lookback_len = j.at("lookback_len").get<std::size_t>();
  c.tokenizer = parse_tokenizer_kind(j.at("tokenizer").get<std::string>());
  c.patch.patch_len = j.at("patch_len").get<std::size_t>();
  c.patch.stride = j.at("stride").get<std::size_t>();
  c.num_bins = j.at("num_bins").get<std::size_t>();
  c.instance_norm = j.at("instance_norm").get<bool>();
  c.validate();
  return c;
}

std::string BackboneConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json().dump())));
  return buf;
}

nlohmann::json LoraSpec::to_json() const {
  return {{"rank", rank}, {"alpha", alpha}, {"targets", targets}, {"seed", seed}};
}

LoraSpec LoraSpec::from_json(const nlohmann::json& j) {
  LoraSpec s;
  s.rank = j.at("rank").get<std::size_t>();
  s.alpha = j.at("alpha").get<double>();
  s.targets = j.at("targets").get<std::vector<std::string>>();
  s.seed = j.value("seed", std::uint64_t{0});
  return s;
}

void Gradients::set_zero() {
  for (auto& g : values) g.setZero();
}

void Gradients::scale(double factor) {
  for (auto& g : values) g *= factor;
}

void Gradients::add(const Gradients& other) {
  if (other.values.size() != values.size()) throw Error(Errc::ShapeError, "gradient sets differ");
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += other.values[i];
}

namespace {

using Shape = std::pair<Eigen::Index, Eigen::Index>;
struct NamedShape {
  std::string name;
  Shape shape;
};

std::string layer_prefix(std::size_t l) { return "layers." + std::to_string(l) + "."; }

std::vector<NamedShape> base_shapes(const BackboneConfig& c) {
  const auto k = static_cast<Eigen::Index>(c.model_dim);
  const auto f = static_cast<Eigen::Index>(c.ff_dim);
  const auto n = static_cast<Eigen::Index>(c.num_tokens());
  const auto q = static_cast<Eigen::Index>(c.horizon);
  std::vector<NamedShape> s;
  if (c.tokenizer == TokenizerKind::Linear) {
    s.push_back({"tokenizer.weight", {k, static_cast<Eigen::Index>(c.patch.patch_len)}});
    s.push_back({"tokenizer.bias", {k, 1}});
  } else {
    s.push_back({"tokenizer.embedding", {static_cast<Eigen::Index>(c.num_bins), k}});
  }
  s.push_back({"pos_embedding", {n, k}});
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const std::string p = layer_prefix(l);
    s.push_back({p + "ln1.gain", {k, 1}});
    s.push_back({p + "ln1.bias", {k, 1}});
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      s.push_back({p + "attn." + w, {k, k}});
      s.push_back({p + "attn.b" + std::string(w + 1), {k, 1}});
    }
    s.push_back({p + "ln2.gain", {k, 1}});
    s.push_back({p + "ln2.bias", {k, 1}});
    s.push_back({p + "mlp.w1", {f, k}});
    s.push_back({p + "mlp.b1", {f, 1}});
    s.push_back({p + "mlp.w2", {k, f}});
    s.push_back({p + "mlp.b2", {k, 1}});
  }
  s.push_back({"ln_f.gain", {k, 1}});
  s.push_back({"ln_f.bias", {k, 1}});
  s.push_back({"head.weight", {q, n * k}});
  s.push_back({"head.bias", {q, 1}});
  return s;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Adapter shapes appended after the base parameters, in base order.
std::vector<NamedShape> adapter_shapes(const BackboneConfig& c, const LoraSpec& lora) {
  std::vector<NamedShape> s;
  for (const auto& base : base_shapes(c)) {
    if (base.shape.second == 1) continue;
    bool targeted = false;
    for (const auto& t : lora.targets) targeted = targeted || ends_with(base.name, t);
    if (!targeted) continue;
    const auto [out, in] = base.shape;
    const auto r = static_cast<Eigen::Index>(lora.rank);
    if (lora.rank < 1 || r > std::min(out, in))
      throw Error(Errc::InvalidRank, "rank " + std::to_string(lora.rank) + " invalid for " +
                                         base.name + " (" + std::to_string(out) + "x" +
                                         std::to_string(in) + ")");
    s.push_back({base.name + ".lora_a", {r, in}});
    s.push_back({base.name + ".lora_b", {out, r}});
  }
  if (s.empty()) throw Error(Errc::ShapeError, "LoRA targets match no weight matrix");
  return s;
}

std::vector<NamedShape> all_shapes(const BackboneConfig& c, const std::optional<LoraSpec>& lora) {
  auto s = base_shapes(c);
  if (lora) {
    auto a = adapter_shapes(c, *lora);
    s.insert(s.end(), a.begin(), a.end());
  }
  return s;
}

void fill_normal(Matrix& m, SplitMix64& rng, double stddev) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
}

std::vector<Parameter> init_parameters(const BackboneConfig& c, std::uint64_t seed) {
  SplitMix64 rng(seed);
  const double residual = 1.0 / std::sqrt(2.0 * static_cast<double>(c.num_layers));
  std::vector<Parameter> params;
  for (const auto& [name, shape] : base_shapes(c)) {
    Parameter p{name, Matrix::Zero(shape.first, shape.second), true};
    const double fan_in = static_cast<double>(shape.second);
    if (ends_with(name, ".gain")) {
      p.value.setOnes();
    } else if (name == "pos_embedding" || name == "tokenizer.embedding") {
      fill_normal(p.value, rng, 0.02);
    } else if (name == "head.weight") {
      fill_normal(p.value, rng, 0.1 / std::sqrt(fan_in));
    } else if (ends_with(name, "attn.wo") || ends_with(name, "mlp.w2")) {
      fill_normal(p.value, rng, residual / std::sqrt(fan_in));
    } else if (shape.second > 1) {
      fill_normal(p.value, rng, 1.0 / std::sqrt(fan_in));
    }
    params.push_back(std::move(p));
  }
  return params;
}

constexpr double kLnEps = 1e-5;
constexpr double kNormEps = 1e-5;

struct LnCache {
  Matrix xhat;
  Vector inv_sigma;
};

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LnCache& cache) {
  const Eigen::Index n = x.rows(), k = x.cols();
  cache.xhat.resize(n, k);
  cache.inv_sigma.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double mu = x.row(t).mean();
    const double var = (x.row(t).array() - mu).square().mean();
    cache.inv_sigma(t) = 1.0 / std::sqrt(var + kLnEps);
    cache.xhat.row(t) = (x.row(t).array() - mu) * cache.inv_sigma(t);
  }
  Matrix y = cache.xhat.array().rowwise() * gain.col(0).transpose().array();
  y.rowwise() += bias.col(0).transpose();
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& gain, const LnCache& cache,
                           Matrix& dgain, Matrix& dbias) {
  dgain.col(0) += (dy.array() * cache.xhat.array()).colwise().sum().transpose().matrix();
  dbias.col(0) += dy.colwise().sum().transpose();
  const Matrix dxhat = dy.array().rowwise() * gain.col(0).transpose().array();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index t = 0; t < dy.rows(); ++t) {
    const double m1 = dxhat.row(t).mean();
    const double m2 = (dxhat.row(t).array() * cache.xhat.row(t).array()).mean();
    dx.row(t) = cache.inv_sigma(t) *
                (dxhat.row(t).array() - m1 - cache.xhat.row(t).array() * m2).matrix();
  }
  return dx;
}

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = x * w.transpose();
  y.rowwise() += b.col(0).transpose();
  return y;
}

void affine_backward_params(const Matrix& dy, const Matrix& x, Matrix& dw, Matrix& db) {
  dw.noalias() += dy.transpose() * x;
  db.col(0) += dy.colwise().sum().transpose();
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

double gelu(double z) { return 0.5 * z * (1.0 + std::tanh(kGeluC * (z + 0.044715 * z * z * z))); }

double gelu_grad(double z) {
  const double t = std::tanh(kGeluC * (z + 0.044715 * z * z * z));
  return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * z * z);
}

}  // namespace

/// Resolved parameter indices plus effective (adapter-folded) weights.
class BackboneKernel {
 public:
  explicit BackboneKernel(const Backbone& model) : m_(model), c_(model.config_) {
    const auto idx = [&](const std::string& n) { return model.parameter_index(n); };
    quantized_ = c_.tokenizer == TokenizerKind::Quantized;
    if (quantized_) {
      tok_emb_ = idx("tokenizer.embedding");
    } else {
      tok_w_ = idx("tokenizer.weight");
      tok_b_ = idx("tokenizer.bias");
    }
    pos_ = idx("pos_embedding");
    for (std::size_t l = 0; l < c_.num_layers; ++l) {
      const std::string p = layer_prefix(l);
      layers_.push_back(LayerIdx{idx(p + "ln1.gain"), idx(p + "ln1.bias"), idx(p + "attn.wq"),
                                 idx(p + "attn.bq"), idx(p + "attn.wk"), idx(p + "attn.bk"),
                                 idx(p + "attn.wv"), idx(p + "attn.bv"), idx(p + "attn.wo"),
                                 idx(p + "attn.bo"), idx(p + "ln2.gain"), idx(p + "ln2.bias"),
                                 idx(p + "mlp.w1"), idx(p + "mlp.b1"), idx(p + "mlp.w2"),
                                 idx(p + "mlp.b2")});
    }
    lnf_g_ = idx("ln_f.gain");
    lnf_b_ = idx("ln_f.bias");
    head_w_ = idx("head.weight");
    head_b_ = idx("head.bias");

    weights_.resize(model.params_.size());
    for (std::size_t i = 0; i < weights_.size(); ++i) weights_[i] = &model.params_[i].value;
    if (model.lora_) {
      lora_scale_ = model.lora_->alpha / static_cast<double>(model.lora_->rank);
      for (const auto& p : model.params_) {
        if (!ends_with(p.name, ".lora_a")) continue;
        const std::string base = p.name.substr(0, p.name.size() - 7);
        adapters_.push_back(Adapter{idx(base), idx(base + ".lora_a"), idx(base + ".lora_b")});
      }
      effective_.reserve(adapters_.size());
      for (const auto& a : adapters_) {
        effective_.push_back(model.params_[a.base].value +
                             lora_scale_ * model.params_[a.b].value * model.params_[a.a].value);
        weights_[a.base] = &effective_.back();
      }
    }
  }

  struct LayerCache {
    LnCache ln1;
    Matrix a, q, k, v, o;
    std::vector<Matrix> probs;
    LnCache ln2;
    Matrix b, z, g;
  };

  struct ChannelCache {
    double mu = 0.0, sigma = 1.0;
    Matrix patches;
    std::vector<TokenId> ids;
    std::vector<LayerCache> layers;
    LnCache lnf;
    Vector flat;
  };

  /// Normalized channel (prompt rows untouched) plus instance statistics.
  Vector normalize(const Matrix& augmented, Eigen::Index ch, double& mu, double& sigma) const {
    Vector x = augmented.col(ch);
    mu = 0.0;
    sigma = 1.0;
    if (c_.instance_norm) {
      const auto m = static_cast<Eigen::Index>(c_.prompt_len);
      const auto e = static_cast<Eigen::Index>(c_.lookback_len);
      const auto look = x.segment(m, e);
      mu = look.mean();
      sigma = std::sqrt((look.array() - mu).square().mean() + kNormEps);
      x.segment(m, e) = (look.array() - mu) / sigma;
    }
    return x;
  }

  Vector forward_channel(const Matrix& augmented, Eigen::Index ch, ChannelCache& cache) const {
    const Vector x = normalize(augmented, ch, cache.mu, cache.sigma);
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    Matrix h;
    if (quantized_) {
      cache.ids = m_.quantizer_->quantize(xs);
      const Matrix& emb = *weights_[tok_emb_];
      h.resize(static_cast<Eigen::Index>(cache.ids.size()), emb.cols());
      for (std::size_t t = 0; t < cache.ids.size(); ++t)
        h.row(static_cast<Eigen::Index>(t)) = emb.row(static_cast<Eigen::Index>(cache.ids[t]));
    } else {
      const auto padded = pad_to_grid(xs, c_.patch);
      cache.patches = patch_matrix(padded, c_.patch);
      h = affine(cache.patches, *weights_[tok_w_], *weights_[tok_b_]);
    }
    h += *weights_[pos_];

    const auto n = h.rows();
    const auto heads = static_cast<Eigen::Index>(c_.num_heads);
    const auto dh = static_cast<Eigen::Index>(c_.model_dim / c_.num_heads);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    cache.layers.resize(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const LayerIdx& L = layers_[l];
      LayerCache& lc = cache.layers[l];
      lc.a = layer_norm(h, W(L.ln1_g), W(L.ln1_b), lc.ln1);
      lc.q = affine(lc.a, W(L.wq), W(L.bq));
      lc.k = affine(lc.a, W(L.wk), W(L.bk));
      lc.v = affine(lc.a, W(L.wv), W(L.bv));
      lc.o.resize(n, lc.v.cols());
      lc.probs.resize(static_cast<std::size_t>(heads));
      for (Eigen::Index hd = 0; hd < heads; ++hd) {
        const auto qh = lc.q.middleCols(hd * dh, dh);
        const auto kh = lc.k.middleCols(hd * dh, dh);
        const auto vh = lc.v.middleCols(hd * dh, dh);
        Matrix s = (qh * kh.transpose()) * inv_sqrt;
        Matrix& p = lc.probs[static_cast<std::size_t>(hd)];
        p = Matrix::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
          // Causal: token i attends to tokens 0..i.
          const double mx = s.row(i).head(i + 1).maxCoeff();
          double z = 0.0;
          for (Eigen::Index j = 0; j <= i; ++j) z += (p(i, j) = std::exp(s(i, j) - mx));
          p.row(i).head(i + 1) /= z;
        }
        lc.o.middleCols(hd * dh, dh) = p * vh;
      }
      h += affine(lc.o, W(L.wo), W(L.bo));
      lc.b = layer_norm(h, W(L.ln2_g), W(L.ln2_b), lc.ln2);
      lc.z = affine(lc.b, W(L.w1), W(L.b1));
      lc.g = lc.z.unaryExpr([](double v) { return gelu(v); });
      h += affine(lc.g, W(L.w2), W(L.b2));
      if (!h.allFinite()) throw NumericalError(static_cast<long>(l), "non-finite activation in layer");
    }
    const Matrix hf = layer_norm(h, W(lnf_g_), W(lnf_b_), cache.lnf);
    const Matrix hft = hf.transpose();  // column-major of hf^T == row-major flatten of hf
    cache.flat = Eigen::Map<const Vector>(hft.data(), hft.size());
    Vector out = W(head_w_) * cache.flat + W(head_b_).col(0);
    if (!out.allFinite()) throw NumericalError(static_cast<long>(layers_.size()), "non-finite head output");
    return out;
  }

  /// Back-propagates d(loss)/d(normalized output) of one channel into `eg`,
  /// which is indexed like the parameters but holds effective-weight grads.
  void backward_channel(const Vector& dout, const ChannelCache& cache, std::vector<Matrix>& eg) const {
    const auto n = static_cast<Eigen::Index>(c_.num_tokens());
    const auto k = static_cast<Eigen::Index>(c_.model_dim);
    const auto heads = static_cast<Eigen::Index>(c_.num_heads);
    const auto dh = k / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    eg[head_w_].noalias() += dout * cache.flat.transpose();
    eg[head_b_].col(0) += dout;
    const Vector dflat = W(head_w_).transpose() * dout;
    const Matrix dhf = Eigen::Map<const Matrix>(dflat.data(), k, n).transpose();
    Matrix dh_res = layer_norm_backward(dhf, W(lnf_g_), cache.lnf, eg[lnf_g_], eg[lnf_b_]);

    for (std::size_t li = layers_.size(); li-- > 0;) {
      const LayerIdx& L = layers_[li];
      const LayerCache& lc = cache.layers[li];
      // MLP branch.
      affine_backward_params(dh_res, lc.g, eg[L.w2], eg[L.b2]);
      const Matrix dg = dh_res * W(L.w2);
      const Matrix dz = dg.array() * lc.z.unaryExpr([](double v) { return gelu_grad(v); }).array();
      affine_backward_params(dz, lc.b, eg[L.w1], eg[L.b1]);
      const Matrix db = dz * W(L.w1);
      dh_res += layer_norm_backward(db, W(L.ln2_g), lc.ln2, eg[L.ln2_g], eg[L.ln2_b]);
      // Attention branch.
      affine_backward_params(dh_res, lc.o, eg[L.wo], eg[L.bo]);
      const Matrix dO = dh_res * W(L.wo);
      Matrix dq(n, k), dk(n, k), dv(n, k);
      for (Eigen::Index hd = 0; hd < heads; ++hd) {
        const Matrix& p = lc.probs[static_cast<std::size_t>(hd)];
        const auto doh = dO.middleCols(hd * dh, dh);
        const Matrix dp = doh * lc.v.middleCols(hd * dh, dh).transpose();
        dv.middleCols(hd * dh, dh) = p.transpose() * doh;
        const Vector rowdot = (dp.array() * p.array()).rowwise().sum();
        const Matrix ds = (p.array() * (dp.colwise() - rowdot).array()) * inv_sqrt;
        dq.middleCols(hd * dh, dh) = ds * lc.k.middleCols(hd * dh, dh);
        dk.middleCols(hd * dh, dh) = ds.transpose() * lc.q.middleCols(hd * dh, dh);
      }
      affine_backward_params(dq, lc.a, eg[L.wq], eg[L.bq]);
      affine_backward_params(dk, lc.a, eg[L.wk], eg[L.bk]);
      affine_backward_params(dv, lc.a, eg[L.wv], eg[L.bv]);
      const Matrix da = dq * W(L.wq) + dk * W(L.wk) + dv * W(L.wv);
      dh_res += layer_norm_backward(da, W(L.ln1_g), lc.ln1, eg[L.ln1_g], eg[L.ln1_b]);
    }

    eg[pos_] += dh_res;
    if (quantized_) {
      for (std::size_t t = 0; t < cache.ids.size(); ++t)
        eg[tok_emb_].row(static_cast<Eigen::Index>(cache.ids[t])) += dh_res.row(static_cast<Eigen::Index>(t));
    } else {
      affine_backward_params(dh_res, cache.patches, eg[tok_w_], eg[tok_b_]);
    }
  }

  /// Maps effective-weight gradients onto the trainable parameters.
  void project(const std::vector<Matrix>& eg, Gradients& grads) const {
    const auto& params = m_.params_;
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].trainable && !is_adapter(i)) grads.values[i] += eg[i];
    for (const auto& a : adapters_) {
      const Matrix& g = eg[a.base];
      if (params[a.a].trainable)
        grads.values[a.a].noalias() += lora_scale_ * params[a.b].value.transpose() * g;
      if (params[a.b].trainable)
        grads.values[a.b].noalias() += lora_scale_ * g * params[a.a].value.transpose();
    }
  }

  std::vector<Matrix> zero_effective() const {
    std::vector<Matrix> eg;
    eg.reserve(m_.params_.size());
    for (const auto& p : m_.params_) eg.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    return eg;
  }

 private:
  struct LayerIdx {
    std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  struct Adapter {
    std::size_t base, a, b;
  };

  const Matrix& W(std::size_t i) const { return *weights_[i]; }
  bool is_adapter(std::size_t i) const {
    for (const auto& a : adapters_)
      if (a.a == i || a.b == i) return true;
    return false;
  }

  const Backbone& m_;
  const BackboneConfig& c_;
  bool quantized_ = false;
  std::size_t tok_w_ = 0, tok_b_ = 0, tok_emb_ = 0, pos_ = 0, lnf_g_ = 0, lnf_b_ = 0, head_w_ = 0,
              head_b_ = 0;
  std::vector<LayerIdx> layers_;
  std::vector<Adapter> adapters_;
  double lora_scale_ = 0.0;
  std::vector<Matrix> effective_;
  std::vector<const Matrix*> weights_;
};

Backbone::Backbone(BackboneConfig config, std::vector<Parameter> params,
                   std::optional<Quantizer> quantizer, std::optional<LoraSpec> lora)
    : config_(std::move(config)),
      params_(std::move(params)),
      quantizer_(std::move(quantizer)),
      lora_(std::move(lora)) {
  config_.validate();
  const auto expected = all_shapes(config_, lora_);
  if (expected.size() != params_.size())
    throw Error(Errc::CheckpointMismatch, "expected " + std::to_string(expected.size()) +
                                              " parameters, got " + std::to_string(params_.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& p = params_[i];
    if (p.name != expected[i].name || p.value.rows() != expected[i].shape.first ||
        p.value.cols() != expected[i].shape.second)
      throw Error(Errc::CheckpointMismatch, "parameter " + std::to_string(i) + " is '" + p.name +
                                                "', expected '" + expected[i].name + "' with shape " +
                                                std::to_string(expected[i].shape.first) + "x" +
                                                std::to_string(expected[i].shape.second));
    if (!p.value.allFinite()) throw Error(Errc::InvalidData, "parameter '" + p.name + "' is not finite");
    index_[p.name] = i;
  }
  if (config_.tokenizer == TokenizerKind::Quantized) {
    if (!quantizer_) throw Error(Errc::InvalidArgument, "quantized tokenizer requires a fitted quantizer");
    if (quantizer_->num_bins() != config_.num_bins)
      throw Error(Errc::ShapeError, "quantizer has " + std::to_string(quantizer_->num_bins()) +
                                        " bins, config expects " + std::to_string(config_.num_bins));
  }
}

const Parameter& Backbone::parameter(const std::string& name) const {
  return params_[parameter_index(name)];
}

std::size_t Backbone::parameter_index(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw Error(Errc::InvalidArgument, "no parameter named '" + name + "'");
  return it->second;
}

std::size_t Backbone::num_parameters() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

std::size_t Backbone::num_trainable() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.trainable) n += static_cast<std::size_t>(p.value.size());
  return n;
}

Gradients Backbone::zero_gradients() const {
  Gradients g;
  for (const auto& p : params_) g.values.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  return g;
}

Matrix Backbone::forward(const Matrix& augmented) const {
  if (static_cast<std::size_t>(augmented.rows()) != config_.input_len())
    throw Error(Errc::ShapeError, "input has " + std::to_string(augmented.rows()) + " rows, model expects " +
                                      std::to_string(config_.input_len()));
  BackboneKernel kernel(*this);
  Matrix out(static_cast<Eigen::Index>(config_.horizon), augmented.cols());
  BackboneKernel::ChannelCache cache;
  for (Eigen::Index ch = 0; ch < augmented.cols(); ++ch) {
    const Vector y = kernel.forward_channel(augmented, ch, cache);
    out.col(ch) = (y.array() * cache.sigma + cache.mu).matrix();
  }
  return out;
}

double Backbone::accumulate_gradients(const Matrix& augmented, const Matrix& target, Gradients& grads,
                                      double weight) const {
  if (static_cast<std::size_t>(augmented.rows()) != config_.input_len())
    throw Error(Errc::ShapeError, "input has " + std::to_string(augmented.rows()) + " rows, model expects " +
                                      std::to_string(config_.input_len()));
  if (target.rows() != static_cast<Eigen::Index>(config_.horizon) || target.cols() != augmented.cols())
    throw Error(Errc::ShapeError, "target shape does not match horizon x channels");
  if (grads.values.size() != params_.size()) throw Error(Errc::ShapeError, "gradient buffer mismatch");
  BackboneKernel kernel(*this);
  auto eg = kernel.zero_effective();
  const double denom = static_cast<double>(target.size());
  double loss = 0.0;
  BackboneKernel::ChannelCache cache;
  for (Eigen::Index ch = 0; ch < augmented.cols(); ++ch) {
    const Vector y = kernel.forward_channel(augmented, ch, cache);
    const Vector pred = (y.array() * cache.sigma + cache.mu).matrix();
    const Vector diff = pred - target.col(ch);
    loss += diff.squaredNorm();
    const Vector dout = (2.0 * weight / denom) * cache.sigma * diff;
    kernel.backward_channel(dout, cache, eg);
  }
  kernel.project(eg, grads);
  return loss / denom;
}

std::vector<double> Backbone::flat_payload() const {
  std::vector<double> out;
  out.reserve(num_parameters());
  for (const auto& p : params_)
    for (Eigen::Index i = 0; i < p.value.rows(); ++i)
      for (Eigen::Index j = 0; j < p.value.cols(); ++j) out.push_back(p.value(i, j));
  return out;
}

Matrix normalized_channels(const BackboneConfig& config, const Matrix& augmented) {
  if (static_cast<std::size_t>(augmented.rows()) != config.input_len())
    throw Error(Errc::ShapeError, "input rows do not match config");
  Matrix out = augmented;
  if (!config.instance_norm) return out;
  const auto m = static_cast<Eigen::Index>(config.prompt_len);
  const auto e = static_cast<Eigen::Index>(config.lookback_len);
  for (Eigen::Index ch = 0; ch < out.cols(); ++ch) {
    auto look = out.col(ch).segment(m, e);
    const double mu = look.mean();
    const double sigma = std::sqrt((look.array() - mu).square().mean() + kNormEps);
    look = ((look.array() - mu) / sigma).matrix();
  }
  return out;
}

namespace {

Backbone with_adapters(const Backbone& base, const LoraSpec& lora) {
  std::vector<Parameter> params = base.parameters();
  for (auto& p : params) p.trainable = false;
  SplitMix64 rng(lora.seed);
  for (const auto& [name, shape] : adapter_shapes(base.config(), lora)) {
    Parameter p{name, Matrix::Zero(shape.first, shape.second), true};
    if (ends_with(name, ".lora_a")) fill_normal(p.value, rng, 1.0 / std::sqrt(static_cast<double>(shape.second)));
    params.push_back(std::move(p));
  }
  return Backbone(base.config(), std::move(params), base.quantizer(), lora);
}

Backbone checkpoint_model(const BackboneConfig& config, const Checkpoint& ckpt) {
  const std::string expected = config.hash();
  const std::string found = ckpt.manifest.value("config_hash", std::string{});
  if (found != expected)
    throw Error(Errc::CheckpointMismatch, "checkpoint config hash " + found + " != " + expected);
  Backbone model = load(ckpt);
  if (model.has_adapters()) model = merge_lora(model);
  for (auto& p : model.mutable_parameters()) p.trainable = true;
  return model;
}

}  // namespace

Backbone build(const BackboneConfig& config, const Paradigm& paradigm, std::optional<Quantizer> quantizer) {
  config.validate();
  if (const auto* fs = std::get_if<FromScratch>(&paradigm))
    return Backbone(config, init_parameters(config, fs->seed), std::move(quantizer));
  if (const auto* ft = std::get_if<FullFinetune>(&paradigm)) return checkpoint_model(config, ft->checkpoint);
  const auto& lf = std::get<LoraFinetune>(paradigm);
  return with_adapters(checkpoint_model(config, lf.checkpoint), lf.lora);
}

Backbone merge_lora(const Backbone& model) {
  if (!model.has_adapters()) return model;
  const auto& lora = *model.lora();
  const double s = lora.alpha / static_cast<double>(lora.rank);
  std::vector<Parameter> merged;
  for (const auto& p : model.parameters()) {
    if (ends_with(p.name, ".lora_a") || ends_with(p.name, ".lora_b")) continue;
    Parameter q = p;
    q.trainable = true;
    merged.push_back(std::move(q));
  }
  for (auto& p : merged) {
    const std::string an = p.name + ".lora_a";
    const std::string bn = p.name + ".lora_b";
    const auto& all = model.parameters();
    if (std::none_of(all.begin(), all.end(), [&](const Parameter& q) { return q.name == an; })) continue;
    const Matrix& A = model.parameter(an).value;
    const Matrix& B = model.parameter(bn).value;
    if (B.rows() != p.value.rows() || A.cols() != p.value.cols() || B.cols() != A.rows())
      throw Error(Errc::ShapeError, "adapter shapes do not match '" + p.name + "'");
    p.value += s * B * A;
  }
  return Backbone(model.config(), std::move(merged), model.quantizer());
}

Checkpoint save(const Backbone& model) {
  Checkpoint c;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : model.parameters())
    params.push_back({{"name", p.name}, {"shape", {p.value.rows(), p.value.cols()}}, {"trainable", p.trainable}});
  c.payload = model.flat_payload();
  c.manifest = {{"format", "ltsm-checkpoint-v1"},
                {"endianness", "little"},
                {"dtype", "f64"},
                {"config", model.config().to_json()},
                {"config_hash", model.config().hash()},
                {"params", params},
                {"payload_bytes", c.payload.size() * sizeof(double)}};
  if (model.lora()) c.manifest["lora"] = model.lora()->to_json();
  if (model.quantizer()) c.manifest["quantizer"] = model.quantizer()->to_json();
  return c;
}

Backbone load(const Checkpoint& ckpt) {
  BackboneConfig config;
  std::optional<LoraSpec> lora;
  std::optional<Quantizer> quantizer;
  try {
    config = BackboneConfig::from_json(ckpt.manifest.at("config"));
    if (ckpt.manifest.contains("lora")) lora = LoraSpec::from_json(ckpt.manifest["lora"]);
    if (ckpt.manifest.contains("quantizer")) quantizer = Quantizer::from_json(ckpt.manifest["quantizer"]);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptCheckpoint, std::string("malformed manifest: ") + e.what());
  }
  if (ckpt.manifest.value("config_hash", std::string{}) != config.hash())
    throw Error(Errc::CheckpointMismatch, "manifest config hash does not match its config");

  // Validate every name and shape before touching the payload.
  const auto expected = all_shapes(config, lora);
  const auto& listed = ckpt.manifest.at("params");
  if (listed.size() != expected.size())
    throw Error(Errc::CheckpointMismatch, "manifest lists " + std::to_string(listed.size()) +
                                              " parameters, config implies " + std::to_string(expected.size()));
  std::size_t total = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& entry = listed[i];
    const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    if (entry.at("name").get<std::string>() != expected[i].name || shape.size() != 2 ||
        shape[0] != expected[i].shape.first || shape[1] != expected[i].shape.second)
      throw Error(Errc::CheckpointMismatch, "manifest entry " + std::to_string(i) + " ('" +
                                                entry.at("name").get<std::string>() +
                                                "') does not match the configured architecture");
    total += static_cast<std::size_t>(shape[0] * shape[1]);
  }
  if (ckpt.payload.size() != total)
    throw Error(Errc::CorruptCheckpoint, "payload holds " + std::to_string(ckpt.payload.size()) +
                                             " values, manifest requires " + std::to_string(total));

  std::vector<Parameter> params;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto [r, c] = expected[i].shape;
    Parameter p{expected[i].name, Matrix(r, c), listed[i].value("trainable", true)};
    for (Eigen::Index a = 0; a < r; ++a)
      for (Eigen::Index b = 0; b < c; ++b) p.value(a, b) = ckpt.payload[offset++];
    params.push_back(std::move(p));
  }
  return Backbone(config, std::move(params), std::move(quantizer), std::move(lora));
}

namespace {

std::string payload_bytes(const std::vector<double>& payload) {
  std::string out(payload.size() * sizeof(double), '\0');
  for (std::size_t i = 0; i < payload.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(payload[i]);
    for (int b = 0; b < 8; ++b) out[i * 8 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  return out;
}

}  // namespace

std::string Checkpoint::to_bytes() const {
  return manifest.dump() + '\n' + payload_bytes(payload);
}

Checkpoint Checkpoint::from_bytes(const std::string& bytes) {
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string::npos) throw Error(Errc::CorruptCheckpoint, "missing manifest terminator");
  Checkpoint c;
  try {
    c.manifest = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptCheckpoint, std::string("manifest is not JSON: ") + e.what());
  }
  if (c.manifest.value("endianness", std::string{}) != "little" || c.manifest.value("dtype", std::string{}) != "f64")
    throw Error(Errc::CorruptCheckpoint, "unsupported payload encoding");
  const std::size_t body = bytes.size() - nl - 1;
  const auto declared = c.manifest.value("payload_bytes", std::size_t{0});
  if (body != declared || body % 8 != 0)
    throw Error(Errc::CorruptCheckpoint, "payload is " + std::to_string(body) + " bytes, manifest declares " +
                                             std::to_string(declared));
  c.payload.resize(body / 8);
  for (std::size_t i = 0; i < c.payload.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b)
      bits = (bits << 8) | static_cast<unsigned char>(bytes[nl + 1 + i * 8 + static_cast<std::size_t>(b)]);
    c.payload[i] = std::bit_cast<double>(bits);
  }
  return c;
}

void Checkpoint::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  const std::string bytes = to_bytes();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint Checkpoint::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_bytes(buf.str());
}

std::string payload_sha256(const Backbone& model) {
  const std::string bytes = payload_bytes(model.flat_payload());
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

}  // namespace ltsm
