#pragma once
// Straight-line reference forward pass for a linear-tokenizer backbone,
// written with scalar loops over named parameters. Used to cross-check the
// optimized kernel.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ltsm/ltsm.hpp"

namespace ref {

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const ltsm::Matrix& m) {
  Mat out(m.rows(), std::vector<double>(m.cols()));
  for (int i = 0; i < m.rows(); i++)
    for (int j = 0; j < m.cols(); j++) out[i][j] = m(i, j);
  return out;
}

inline double gelu(double x) {
  const double pi = 3.14159265358979323846;
  return 0.5 * x * (1 + std::tanh(std::sqrt(2 / pi) * (x + 0.044715 * x * x * x)));
}

// y[t] = W x[t] + b, W stored out x in
inline Mat linear(const Mat& x, const Mat& W, const Mat& b) {
  Mat y(x.size(), std::vector<double>(W.size()));
  for (size_t t = 0; t < x.size(); t++)
    for (size_t o = 0; o < W.size(); o++) {
      double a = b[o][0];
      for (size_t i = 0; i < W[o].size(); i++) a += W[o][i] * x[t][i];
      y[t][o] = a;
    }
  return y;
}

inline Mat layernorm(const Mat& x, const Mat& g, const Mat& b) {
  Mat y = x;
  for (size_t t = 0; t < x.size(); t++) {
    double m = 0, v = 0;
    for (double a : x[t]) m += a;
    m /= x[t].size();
    for (double a : x[t]) v += (a - m) * (a - m);
    v /= x[t].size();
    for (size_t i = 0; i < x[t].size(); i++) y[t][i] = (x[t][i] - m) / std::sqrt(v + 1e-5) * g[i][0] + b[i][0];
  }
  return y;
}

// Causal multi-head attention: softmax(Q K^T / sqrt(dk)) V per head.
inline Mat attention(const Mat& q, const Mat& k, const Mat& v, int heads) {
  const size_t n = q.size(), dim = q[0].size(), dk = dim / heads;
  Mat out(n, std::vector<double>(dim, 0));
  for (int h = 0; h < heads; h++)
    for (size_t i = 0; i < n; i++) {
      std::vector<double> w(i + 1);
      double z = 0;
      for (size_t j = 0; j <= i; j++) {
        double s = 0;
        for (size_t c = h * dk; c < (h + 1) * dk; c++) s += q[i][c] * k[j][c];
        w[j] = std::exp(s / std::sqrt((double)dk));
        z += w[j];
      }
      for (size_t j = 0; j <= i; j++)
        for (size_t c = h * dk; c < (h + 1) * dk; c++) out[i][c] += w[j] / z * v[j][c];
    }
  return out;
}

inline void add_into(Mat& a, const Mat& b) {
  for (size_t i = 0; i < a.size(); i++)
    for (size_t j = 0; j < a[i].size(); j++) a[i][j] += b[i][j];
}

// Effective weights: base plus (alpha/r) B A when adapters are present.
inline std::map<std::string, Mat> weights(const ltsm::Backbone& m) {
  std::map<std::string, ltsm::Matrix> raw;
  for (const auto& p : m.parameters()) raw[p.name] = p.value;
  std::map<std::string, Mat> out;
  for (auto& [name, value] : raw) {
    if (name.size() > 7 && (name.substr(name.size() - 7) == ".lora_a" || name.substr(name.size() - 7) == ".lora_b"))
      continue;
    ltsm::Matrix w = value;
    if (m.lora() && raw.count(name + ".lora_a"))
      w += (m.lora()->alpha / m.lora()->rank) * raw[name + ".lora_b"] * raw[name + ".lora_a"];
    out[name] = to_mat(w);
  }
  return out;
}

inline ltsm::Matrix forward(const ltsm::Backbone& model, const ltsm::Matrix& x) {
  const auto& c = model.config();
  auto W = weights(model);
  const int P = (int)c.patch.patch_len, S = (int)c.patch.stride, M = (int)c.prompt_len, E = (int)c.lookback_len;
  ltsm::Matrix out(c.horizon, x.cols());
  for (int ch = 0; ch < x.cols(); ch++) {
    std::vector<double> s;
    for (int i = 0; i < x.rows(); i++) s.push_back(x(i, ch));
    double mu = 0, sd = 1;
    if (c.instance_norm) {
      mu = 0;
      for (int i = M; i < M + E; i++) mu += s[i];
      mu /= E;
      double v = 0;
      for (int i = M; i < M + E; i++) v += (s[i] - mu) * (s[i] - mu);
      sd = std::sqrt(v / E + 1e-5);
      for (int i = M; i < M + E; i++) s[i] = (s[i] - mu) / sd;
    }
    // left-pad with the first value until (L - P) is a multiple of S
    while ((int)s.size() < P || ((int)s.size() - P) % S != 0) s.insert(s.begin(), s[0]);
    Mat patches;
    for (int off = 0; off + P <= (int)s.size(); off += S) patches.emplace_back(s.begin() + off, s.begin() + off + P);
    Mat h = linear(patches, W["tokenizer.weight"], W["tokenizer.bias"]);
    add_into(h, W["pos_embedding"]);
    for (size_t l = 0; l < c.num_layers; l++) {
      const std::string p = "layers." + std::to_string(l) + ".";
      Mat a = layernorm(h, W[p + "ln1.gain"], W[p + "ln1.bias"]);
      Mat att = attention(linear(a, W[p + "attn.wq"], W[p + "attn.bq"]), linear(a, W[p + "attn.wk"], W[p + "attn.bk"]),
                          linear(a, W[p + "attn.wv"], W[p + "attn.bv"]), (int)c.num_heads);
      add_into(h, linear(att, W[p + "attn.wo"], W[p + "attn.bo"]));
      Mat z = linear(layernorm(h, W[p + "ln2.gain"], W[p + "ln2.bias"]), W[p + "mlp.w1"], W[p + "mlp.b1"]);
      for (auto& row : z)
        for (double& e : row) e = gelu(e);
      add_into(h, linear(z, W[p + "mlp.w2"], W[p + "mlp.b2"]));
    }
    h = layernorm(h, W["ln_f.gain"], W["ln_f.bias"]);
    Mat flat(1);
    for (auto& row : h) flat[0].insert(flat[0].end(), row.begin(), row.end());
    Mat y = linear(flat, W["head.weight"], W["head.bias"]);
    for (size_t q = 0; q < c.horizon; q++) out(q, ch) = y[0][q] * sd + mu;
  }
  return out;
}

}  // namespace ref
