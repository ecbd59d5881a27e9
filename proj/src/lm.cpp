#include "rtlguard/lm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rtlguard/rng.hpp"

namespace rtlguard {

namespace {

constexpr float kLnEps = 1e-5f;
constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)

// Eight independent partial sums in a fixed order: vectorizes without
// relaxing IEEE semantics and stays bit-stable for a given build.
float dot(const float* a, const float* b, int n) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
  }
  float s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(float a, const float* x, float* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

void matmul_fwd(float* out, const float* in, const float* w, const float* b, int T, int I, int O) {
  for (int t = 0; t < T; ++t) {
    float* o = out + static_cast<std::size_t>(t) * O;
    if (b) {
      std::copy(b, b + O, o);
    } else {
      std::fill(o, o + O, 0.0f);
    }
    const float* x = in + static_cast<std::size_t>(t) * I;
    for (int i = 0; i < I; ++i) axpy(x[i], w + static_cast<std::size_t>(i) * O, o, O);
  }
}

void matmul_bwd(float* din, float* dw, float* db, const float* dout, const float* in,
                const float* w, int T, int I, int O) {
  for (int t = 0; t < T; ++t) {
    const float* g = dout + static_cast<std::size_t>(t) * O;
    if (db) axpy(1.0f, g, db, O);
    const float* x = in + static_cast<std::size_t>(t) * I;
    float* dx = din + static_cast<std::size_t>(t) * I;
    for (int i = 0; i < I; ++i) {
      dx[i] += dot(g, w + static_cast<std::size_t>(i) * O, O);
      axpy(x[i], g, dw + static_cast<std::size_t>(i) * O, O);
    }
  }
}

void layernorm_fwd(float* out, float* mean, float* rstd, const float* in, const float* g,
                   const float* b, int T, int C) {
  for (int t = 0; t < T; ++t) {
    const float* x = in + static_cast<std::size_t>(t) * C;
    float m = 0;
    for (int i = 0; i < C; ++i) m += x[i];
    m /= static_cast<float>(C);
    float v = 0;
    for (int i = 0; i < C; ++i) v += (x[i] - m) * (x[i] - m);
    v /= static_cast<float>(C);
    const float s = 1.0f / std::sqrt(v + kLnEps);
    float* o = out + static_cast<std::size_t>(t) * C;
    for (int i = 0; i < C; ++i) o[i] = (x[i] - m) * s * g[i] + b[i];
    if (mean) mean[t] = m;
    if (rstd) rstd[t] = s;
  }
}

void layernorm_bwd(float* din, float* dg, float* db, const float* dout, const float* in,
                   const float* g, const float* mean, const float* rstd, int T, int C) {
  for (int t = 0; t < T; ++t) {
    const float* dy = dout + static_cast<std::size_t>(t) * C;
    const float* x = in + static_cast<std::size_t>(t) * C;
    float* dx = din + static_cast<std::size_t>(t) * C;
    const float m = mean[t];
    const float s = rstd[t];
    float dnorm_mean = 0, dnorm_norm_mean = 0;
    for (int i = 0; i < C; ++i) {
      const float norm = (x[i] - m) * s;
      const float dn = g[i] * dy[i];
      dnorm_mean += dn;
      dnorm_norm_mean += dn * norm;
    }
    dnorm_mean /= static_cast<float>(C);
    dnorm_norm_mean /= static_cast<float>(C);
    for (int i = 0; i < C; ++i) {
      const float norm = (x[i] - m) * s;
      const float dn = g[i] * dy[i];
      db[i] += dy[i];
      dg[i] += norm * dy[i];
      dx[i] += (dn - dnorm_mean - norm * dnorm_norm_mean) * s;
    }
  }
}

void gelu_fwd(float* out, const float* in, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const float x = in[i];
    out[i] = 0.5f * x * (1.0f + std::tanh(kGeluC * (x + 0.044715f * x * x * x)));
  }
}

void gelu_bwd(float* din, const float* in, const float* dout, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const float x = in[i];
    const float u = kGeluC * (x + 0.044715f * x * x * x);
    const float th = std::tanh(u);
    const float sech2 = 1.0f - th * th;
    const float grad = 0.5f * (1.0f + th) + 0.5f * x * sech2 * kGeluC * (1.0f + 3.0f * 0.044715f * x * x);
    din[i] += grad * dout[i];
  }
}

/// Causal attention for one query row `t` against keys/values at rows
/// [0, t]. `row(j)` points at the packed q|k|v triple of position j.
template <typename Row>
void attend_row(float* out, float* probs, const float* q, int t, Row row, int d, int heads) {
  const int hs = d / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hs));
  for (int h = 0; h < heads; ++h) {
    const float* qh = q + h * hs;
    float* p = probs + static_cast<std::size_t>(h) * static_cast<std::size_t>(t + 1);
    float maxv = -INFINITY;
    for (int j = 0; j <= t; ++j) {
      p[j] = dot(qh, row(j) + d + h * hs, hs) * scale;
      maxv = std::max(maxv, p[j]);
    }
    float sum = 0;
    for (int j = 0; j <= t; ++j) {
      p[j] = std::exp(p[j] - maxv);
      sum += p[j];
    }
    const float inv = 1.0f / sum;
    float* o = out + h * hs;
    std::fill(o, o + hs, 0.0f);
    for (int j = 0; j <= t; ++j) {
      p[j] *= inv;
      axpy(p[j], row(j) + 2 * d + h * hs, o, hs);
    }
  }
}

// Per-layer activations of one training window.
struct LayerActs {
  std::vector<float> ln1, ln1_mean, ln1_rstd, qkv, att, atty, res2, ln2, ln2_mean, ln2_rstd, fch,
      fch_gelu, res3;
};

struct Acts {
  int T = 0;
  std::vector<float> encoded;
  std::vector<LayerActs> layers;
  std::vector<float> lnf, lnf_mean, lnf_rstd, probs;
};

std::size_t att_offset(int t, int heads) {
  // rows are triangular: row t holds heads*(t+1) probabilities
  return static_cast<std::size_t>(heads) * static_cast<std::size_t>(t) * static_cast<std::size_t>(t + 1) / 2;
}

/// Full-window forward. Returns the summed cross-entropy over `targets`
/// (ignored when empty) and leaves softmax probabilities in acts.probs.
double forward(const LanguageModel& model, const std::vector<int>& inputs,
               const std::vector<int>& targets, Acts& a) {
  const LmConfig& c = model.config();
  const int T = static_cast<int>(inputs.size());
  const int d = c.hidden;
  const std::size_t Td = static_cast<std::size_t>(T) * d;
  const float* P = model.parameters().data();
  a.T = T;
  a.encoded.assign(Td, 0.0f);
  for (int t = 0; t < T; ++t) {
    const float* te = P + model.wte() + static_cast<std::size_t>(inputs[static_cast<std::size_t>(t)]) * d;
    const float* pe = P + model.wpe() + static_cast<std::size_t>(t) * d;
    for (int i = 0; i < d; ++i) a.encoded[static_cast<std::size_t>(t) * d + i] = te[i] + pe[i];
  }
  a.layers.resize(static_cast<std::size_t>(c.layers));
  const float* residual = a.encoded.data();
  for (int l = 0; l < c.layers; ++l) {
    const auto& lp = model.layer(l);
    LayerActs& la = a.layers[static_cast<std::size_t>(l)];
    la.ln1.resize(Td);
    la.ln1_mean.resize(static_cast<std::size_t>(T));
    la.ln1_rstd.resize(static_cast<std::size_t>(T));
    la.qkv.resize(Td * 3);
    la.att.resize(att_offset(T, c.heads));
    la.atty.resize(Td);
    la.res2.resize(Td);
    la.ln2.resize(Td);
    la.ln2_mean.resize(static_cast<std::size_t>(T));
    la.ln2_rstd.resize(static_cast<std::size_t>(T));
    la.fch.resize(Td * 4);
    la.fch_gelu.resize(Td * 4);
    la.res3.resize(Td);

    layernorm_fwd(la.ln1.data(), la.ln1_mean.data(), la.ln1_rstd.data(), residual, P + lp.ln1_g,
                  P + lp.ln1_b, T, d);
    matmul_fwd(la.qkv.data(), la.ln1.data(), P + lp.qkv_w, P + lp.qkv_b, T, d, 3 * d);
    const float* qkv = la.qkv.data();
    auto row = [&](int j) { return qkv + static_cast<std::size_t>(j) * 3 * d; };
    for (int t = 0; t < T; ++t) {
      attend_row(la.atty.data() + static_cast<std::size_t>(t) * d, la.att.data() + att_offset(t, c.heads),
                 row(t), t, row, d, c.heads);
    }
    matmul_fwd(la.res2.data(), la.atty.data(), P + lp.proj_w, P + lp.proj_b, T, d, d);
    for (std::size_t i = 0; i < Td; ++i) la.res2[i] += residual[i];
    layernorm_fwd(la.ln2.data(), la.ln2_mean.data(), la.ln2_rstd.data(), la.res2.data(), P + lp.ln2_g,
                  P + lp.ln2_b, T, d);
    matmul_fwd(la.fch.data(), la.ln2.data(), P + lp.fc_w, P + lp.fc_b, T, d, 4 * d);
    gelu_fwd(la.fch_gelu.data(), la.fch.data(), Td * 4);
    matmul_fwd(la.res3.data(), la.fch_gelu.data(), P + lp.out_w, P + lp.out_b, T, 4 * d, d);
    for (std::size_t i = 0; i < Td; ++i) la.res3[i] += la.res2[i];
    residual = la.res3.data();
  }
  a.lnf.resize(Td);
  a.lnf_mean.resize(static_cast<std::size_t>(T));
  a.lnf_rstd.resize(static_cast<std::size_t>(T));
  layernorm_fwd(a.lnf.data(), a.lnf_mean.data(), a.lnf_rstd.data(), residual, P + model.lnf_g(),
                P + model.lnf_b(), T, d);
  a.probs.resize(static_cast<std::size_t>(T) * kVocab);
  double loss = 0;
  for (int t = 0; t < T; ++t) {
    float* p = a.probs.data() + static_cast<std::size_t>(t) * kVocab;
    const float* x = a.lnf.data() + static_cast<std::size_t>(t) * d;
    float maxv = -INFINITY;
    for (int v = 0; v < kVocab; ++v) {
      p[v] = dot(x, P + model.wte() + static_cast<std::size_t>(v) * d, d);
      maxv = std::max(maxv, p[v]);
    }
    float sum = 0;
    for (int v = 0; v < kVocab; ++v) {
      p[v] = std::exp(p[v] - maxv);
      sum += p[v];
    }
    for (int v = 0; v < kVocab; ++v) p[v] /= sum;
    if (!targets.empty()) loss -= std::log(static_cast<double>(p[targets[static_cast<std::size_t>(t)]]));
  }
  return loss;
}

/// Accumulates d(sum loss * scale)/dθ into grad.
void backward(const LanguageModel& model, const std::vector<int>& inputs, const std::vector<int>& targets,
              const Acts& a, float scale, std::vector<float>& grad) {
  const LmConfig& c = model.config();
  const int T = a.T;
  const int d = c.hidden;
  const std::size_t Td = static_cast<std::size_t>(T) * d;
  const float* P = model.parameters().data();
  float* G = grad.data();

  std::vector<float> dlnf(Td, 0.0f);
  std::vector<float> dlogits(kVocab);
  for (int t = 0; t < T; ++t) {
    const float* p = a.probs.data() + static_cast<std::size_t>(t) * kVocab;
    for (int v = 0; v < kVocab; ++v) dlogits[static_cast<std::size_t>(v)] = p[v] * scale;
    dlogits[static_cast<std::size_t>(targets[static_cast<std::size_t>(t)])] -= scale;
    const float* x = a.lnf.data() + static_cast<std::size_t>(t) * d;
    float* dx = dlnf.data() + static_cast<std::size_t>(t) * d;
    for (int v = 0; v < kVocab; ++v) {
      const float g = dlogits[static_cast<std::size_t>(v)];
      axpy(g, P + model.wte() + static_cast<std::size_t>(v) * d, dx, d);
      axpy(g, x, G + model.wte() + static_cast<std::size_t>(v) * d, d);
    }
  }
  std::vector<float> dres(Td, 0.0f);
  const float* last = c.layers > 0 ? a.layers.back().res3.data() : a.encoded.data();
  layernorm_bwd(dres.data(), G + model.lnf_g(), G + model.lnf_b(), dlnf.data(), last, P + model.lnf_g(),
                a.lnf_mean.data(), a.lnf_rstd.data(), T, d);

  std::vector<float> dfch_gelu(Td * 4), dfch(Td * 4), dln2(Td), dres2(Td), datty(Td), dqkv(Td * 3),
      dln1(Td), dres_in(Td);
  std::vector<float> datt(static_cast<std::size_t>(T));
  const int hs = d / c.heads;
  const float att_scale = 1.0f / std::sqrt(static_cast<float>(hs));
  for (int l = c.layers - 1; l >= 0; --l) {
    const auto& lp = model.layer(l);
    const LayerActs& la = a.layers[static_cast<std::size_t>(l)];
    const float* residual = l == 0 ? a.encoded.data() : a.layers[static_cast<std::size_t>(l - 1)].res3.data();

    // dres is d(res3); the residual add passes it straight to res2.
    dres2 = dres;
    std::fill(dfch_gelu.begin(), dfch_gelu.end(), 0.0f);
    matmul_bwd(dfch_gelu.data(), G + lp.out_w, G + lp.out_b, dres.data(), la.fch_gelu.data(), P + lp.out_w,
               T, 4 * d, d);
    std::fill(dfch.begin(), dfch.end(), 0.0f);
    gelu_bwd(dfch.data(), la.fch.data(), dfch_gelu.data(), Td * 4);
    std::fill(dln2.begin(), dln2.end(), 0.0f);
    matmul_bwd(dln2.data(), G + lp.fc_w, G + lp.fc_b, dfch.data(), la.ln2.data(), P + lp.fc_w, T, d, 4 * d);
    layernorm_bwd(dres2.data(), G + lp.ln2_g, G + lp.ln2_b, dln2.data(), la.res2.data(), P + lp.ln2_g,
                  la.ln2_mean.data(), la.ln2_rstd.data(), T, d);

    dres_in = dres2;
    std::fill(datty.begin(), datty.end(), 0.0f);
    matmul_bwd(datty.data(), G + lp.proj_w, G + lp.proj_b, dres2.data(), la.atty.data(), P + lp.proj_w, T,
               d, d);
    std::fill(dqkv.begin(), dqkv.end(), 0.0f);
    for (int t = 0; t < T; ++t) {
      const float* att_t = la.att.data() + att_offset(t, c.heads);
      const float* q = la.qkv.data() + static_cast<std::size_t>(t) * 3 * d;
      float* dq = dqkv.data() + static_cast<std::size_t>(t) * 3 * d;
      for (int h = 0; h < c.heads; ++h) {
        const float* p = att_t + static_cast<std::size_t>(h) * static_cast<std::size_t>(t + 1);
        const float* dout = datty.data() + static_cast<std::size_t>(t) * d + h * hs;
        float sum = 0;
        for (int j = 0; j <= t; ++j) {
          const float* v = la.qkv.data() + static_cast<std::size_t>(j) * 3 * d + 2 * d + h * hs;
          float* dv = dqkv.data() + static_cast<std::size_t>(j) * 3 * d + 2 * d + h * hs;
          datt[static_cast<std::size_t>(j)] = dot(dout, v, hs);
          axpy(p[j], dout, dv, hs);
          sum += p[j] * datt[static_cast<std::size_t>(j)];
        }
        for (int j = 0; j <= t; ++j) {
          const float dpre = p[j] * (datt[static_cast<std::size_t>(j)] - sum) * att_scale;
          const float* k = la.qkv.data() + static_cast<std::size_t>(j) * 3 * d + d + h * hs;
          float* dk = dqkv.data() + static_cast<std::size_t>(j) * 3 * d + d + h * hs;
          axpy(dpre, k, dq + h * hs, hs);
          axpy(dpre, q + h * hs, dk, hs);
        }
      }
    }
    std::fill(dln1.begin(), dln1.end(), 0.0f);
    matmul_bwd(dln1.data(), G + lp.qkv_w, G + lp.qkv_b, dqkv.data(), la.ln1.data(), P + lp.qkv_w, T, d, 3 * d);
    layernorm_bwd(dres_in.data(), G + lp.ln1_g, G + lp.ln1_b, dln1.data(), residual, P + lp.ln1_g,
                  la.ln1_mean.data(), la.ln1_rstd.data(), T, d);
    dres = dres_in;
  }
  for (int t = 0; t < T; ++t) {
    const float* g = dres.data() + static_cast<std::size_t>(t) * d;
    axpy(1.0f, g, G + model.wte() + static_cast<std::size_t>(inputs[static_cast<std::size_t>(t)]) * d, d);
    axpy(1.0f, g, G + model.wpe() + static_cast<std::size_t>(t) * d, d);
  }
}

struct Window {
  std::vector<int> inputs;
  std::vector<int> targets;
};

std::vector<Window> make_windows(std::string_view document, int context) {
  std::vector<int> tokens;
  tokens.reserve(document.size() + 2);
  tokens.push_back(kBos);
  for (unsigned char ch : document) tokens.push_back(ch);
  tokens.push_back(kEos);
  std::vector<Window> out;
  const std::size_t n_pred = tokens.size() - 1;
  for (std::size_t s = 0; s < n_pred; s += static_cast<std::size_t>(context)) {
    const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(context), n_pred - s);
    Window w;
    w.inputs.assign(tokens.begin() + static_cast<std::ptrdiff_t>(s),
                    tokens.begin() + static_cast<std::ptrdiff_t>(s + len));
    w.targets.assign(tokens.begin() + static_cast<std::ptrdiff_t>(s + 1),
                     tokens.begin() + static_cast<std::ptrdiff_t>(s + 1 + len));
    out.push_back(std::move(w));
  }
  return out;
}

/// Incremental decoder state: cached k/v rows per layer.
class Stepper {
 public:
  explicit Stepper(const LanguageModel& model) : m_(model), c_(model.config()) {
    const std::size_t d = static_cast<std::size_t>(c_.hidden);
    cache_.assign(static_cast<std::size_t>(c_.layers), std::vector<float>(static_cast<std::size_t>(c_.context) * 3 * d));
    x_.resize(d);
    ln_.resize(d);
    atty_.resize(d);
    tmp_.resize(d);
    fch_.resize(4 * d);
    fch_gelu_.resize(4 * d);
    probs_.resize(static_cast<std::size_t>(c_.heads) * static_cast<std::size_t>(c_.context));
    logits_.resize(kVocab);
  }

  int position() const { return pos_; }

  /// Consumes one token. `observe(layer, tap, vector)` sees taps before hooks.
  template <typename Observe>
  const std::vector<float>& step(int token, const std::vector<EditHook>* hooks, Observe&& observe) {
    if (pos_ >= c_.context) throw DimensionError("sequence exceeds context length " + std::to_string(c_.context));
    const int d = c_.hidden;
    const float* P = m_.parameters().data();
    const float* te = P + m_.wte() + static_cast<std::size_t>(token) * d;
    const float* pe = P + m_.wpe() + static_cast<std::size_t>(pos_) * d;
    for (int i = 0; i < d; ++i) x_[static_cast<std::size_t>(i)] = te[i] + pe[i];
    for (int l = 0; l < c_.layers; ++l) {
      const auto& lp = m_.layer(l);
      float* cache = cache_[static_cast<std::size_t>(l)].data();
      layernorm_fwd(ln_.data(), nullptr, nullptr, x_.data(), P + lp.ln1_g, P + lp.ln1_b, 1, d);
      float* row = cache + static_cast<std::size_t>(pos_) * 3 * d;
      matmul_fwd(row, ln_.data(), P + lp.qkv_w, P + lp.qkv_b, 1, d, 3 * d);
      auto rowf = [&](int j) -> const float* { return cache + static_cast<std::size_t>(j) * 3 * d; };
      attend_row(atty_.data(), probs_.data(), row, pos_, rowf, d, c_.heads);
      matmul_fwd(tmp_.data(), atty_.data(), P + lp.proj_w, P + lp.proj_b, 1, d, d);
      for (int i = 0; i < d; ++i) x_[static_cast<std::size_t>(i)] += tmp_[static_cast<std::size_t>(i)];
      layernorm_fwd(ln_.data(), nullptr, nullptr, x_.data(), P + lp.ln2_g, P + lp.ln2_b, 1, d);
      observe(l + 1, Tap::mlp_input, std::span<const float>(ln_));
      matmul_fwd(fch_.data(), ln_.data(), P + lp.fc_w, P + lp.fc_b, 1, d, 4 * d);
      gelu_fwd(fch_gelu_.data(), fch_.data(), fch_.size());
      matmul_fwd(tmp_.data(), fch_gelu_.data(), P + lp.out_w, P + lp.out_b, 1, 4 * d, d);
      for (int i = 0; i < d; ++i) x_[static_cast<std::size_t>(i)] += tmp_[static_cast<std::size_t>(i)];
      observe(l + 1, Tap::residual, std::span<const float>(x_));
      if (hooks) apply_hooks(*hooks, l + 1);
    }
    layernorm_fwd(ln_.data(), nullptr, nullptr, x_.data(), P + m_.lnf_g(), P + m_.lnf_b(), 1, d);
    for (int v = 0; v < kVocab; ++v) {
      logits_[static_cast<std::size_t>(v)] = dot(ln_.data(), P + m_.wte() + static_cast<std::size_t>(v) * d, d);
    }
    ++pos_;
    return logits_;
  }

 private:
  void apply_hooks(const std::vector<EditHook>& hooks, int layer) {
    for (const auto& hook : hooks) {
      if (std::find(hook.layers.begin(), hook.layers.end(), layer) == hook.layers.end()) continue;
      std::vector<float> out = hook.edit(layer, std::span<const float>(x_));
      if (out.size() != x_.size()) {
        throw DimensionError("hook at layer " + std::to_string(layer) + " returned length " +
                             std::to_string(out.size()) + ", expected " + std::to_string(x_.size()));
      }
      for (float v : out) {
        if (!std::isfinite(v)) throw NumericalError("hook at layer " + std::to_string(layer) + " produced a non-finite value");
      }
      x_ = std::move(out);
    }
  }

  const LanguageModel& m_;
  const LmConfig& c_;
  int pos_ = 0;
  std::vector<std::vector<float>> cache_;
  std::vector<float> x_, ln_, atty_, tmp_, fch_, fch_gelu_, probs_, logits_;
};

void check_layers(const LmConfig& c, const std::vector<int>& layers) {
  for (int l : layers) {
    if (l < 1 || l > c.layers) {
      throw ConfigError("layer " + std::to_string(l) + " outside [1, " + std::to_string(c.layers) + "]");
    }
  }
}

}  // namespace

void LmConfig::validate() const {
  if (layers < 1) throw ConfigError("lm layers must be >= 1");
  if (hidden < 1) throw ConfigError("lm hidden size must be >= 1");
  if (heads < 1 || hidden % heads != 0) throw ConfigError("lm hidden size must be divisible by heads");
  if (context < 2) throw ConfigError("lm context must be >= 2");
}

std::vector<int> encode_prompt(std::string_view text) {
  std::vector<int> tokens{kBos};
  for (unsigned char ch : text) tokens.push_back(ch);
  return tokens;
}

std::size_t LanguageModel::add(const std::string& name, std::size_t rows, std::size_t cols) {
  const std::size_t offset = params_.size();
  tensors_.push_back({name, offset, rows, cols});
  params_.resize(offset + rows * cols, 0.0f);
  return offset;
}

LanguageModel::LanguageModel(const LmConfig& config) : config_(config) {
  config_.validate();
  const std::size_t d = static_cast<std::size_t>(config_.hidden);
  wte_ = add("wte", kVocab, d);
  wpe_ = add("wpe", static_cast<std::size_t>(config_.context), d);
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    LayerParams lp{};
    lp.ln1_g = add(p + "ln1.g", 1, d);
    lp.ln1_b = add(p + "ln1.b", 1, d);
    lp.qkv_w = add(p + "qkv.w", d, 3 * d);
    lp.qkv_b = add(p + "qkv.b", 1, 3 * d);
    lp.proj_w = add(p + "proj.w", d, d);
    lp.proj_b = add(p + "proj.b", 1, d);
    lp.ln2_g = add(p + "ln2.g", 1, d);
    lp.ln2_b = add(p + "ln2.b", 1, d);
    lp.fc_w = add(p + "fc.w", d, 4 * d);
    lp.fc_b = add(p + "fc.b", 1, 4 * d);
    lp.out_w = add(p + "out.w", 4 * d, d);
    lp.out_b = add(p + "out.b", 1, d);
    layers_.push_back(lp);
  }
  lnf_g_ = add("lnf.g", 1, d);
  lnf_b_ = add("lnf.b", 1, d);

  Rng rng(config_.seed);
  const double resid_std = 0.02 / std::sqrt(2.0 * config_.layers);
  for (const Tensor& t : tensors_) {
    float* p = params_.data() + t.offset;
    const std::size_t n = t.rows * t.cols;
    const bool gain = t.name.ends_with(".g");
    const bool bias = t.name.ends_with(".b");
    const double std = t.name.ends_with("proj.w") || t.name.ends_with("out.w") ? resid_std : 0.02;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = gain ? 1.0f : bias ? 0.0f : static_cast<float>(std * rng.normal());
    }
  }
}

TrainReport train_lm(LanguageModel& model, const std::vector<std::string>& documents,
                     const TrainOptions& options) {
  if (documents.empty()) throw ConfigError("train_lm: corpus is empty");
  if (options.steps < 0 || options.batch < 1) throw ConfigError("train_lm: steps >= 0 and batch >= 1 required");
  std::vector<Window> windows;
  for (const auto& doc : documents) {
    for (auto& w : make_windows(doc, model.config().context)) windows.push_back(std::move(w));
  }
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(options.seed);
  rng.shuffle(order);
  std::size_t cursor = 0;

  const std::size_t n = model.parameters().size();
  std::vector<float> grad(n), m(n, 0.0f), v(n, 0.0f);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Acts acts;
  TrainReport report;
  report.steps = options.steps;

  auto batch_loss = [&](bool with_grad) {
    std::vector<std::size_t> picked;
    std::size_t tokens = 0;
    for (int b = 0; b < options.batch; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      picked.push_back(order[cursor++]);
      tokens += windows[picked.back()].targets.size();
    }
    double loss = 0;
    const float scale = 1.0f / static_cast<float>(tokens);
    for (std::size_t idx : picked) {
      loss += forward(model, windows[idx].inputs, windows[idx].targets, acts);
      if (with_grad) backward(model, windows[idx].inputs, windows[idx].targets, acts, scale, grad);
    }
    return loss / static_cast<double>(tokens);
  };

  {
    // Loss of the untrained model over every window, for the report.
    double total = 0;
    std::size_t tokens = 0;
    for (const auto& w : windows) {
      total += forward(model, w.inputs, w.targets, acts);
      tokens += w.targets.size();
    }
    report.initial_loss = total / static_cast<double>(tokens);
    report.final_loss = report.initial_loss;
  }

  for (int step = 1; step <= options.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0f);
    const double loss = batch_loss(true);
    if (!std::isfinite(loss)) {
      throw NumericalError("train_lm: non-finite loss at step " + std::to_string(step));
    }
    double lr = options.learning_rate;
    if (step <= options.warmup) {
      lr *= static_cast<double>(step) / static_cast<double>(std::max(1, options.warmup));
    } else if (options.steps > options.warmup) {
      const double progress = static_cast<double>(step - options.warmup) /
                              static_cast<double>(options.steps - options.warmup);
      lr *= 0.1 + 0.9 * 0.5 * (1.0 + std::cos(3.141592653589793 * progress));
    }
    const double c1 = 1.0 - std::pow(b1, step);
    const double c2 = 1.0 - std::pow(b2, step);
    float* P = model.parameters().data();
    const float flr = static_cast<float>(lr);
    const float fwd = static_cast<float>(options.weight_decay);
    const float fc1 = static_cast<float>(c1), fc2 = static_cast<float>(c2);
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = 0.9f * m[i] + 0.1f * grad[i];
      v[i] = 0.999f * v[i] + 0.001f * grad[i] * grad[i];
      const float mh = m[i] / fc1;
      const float vh = v[i] / fc2;
      P[i] -= flr * (mh / (std::sqrt(vh) + static_cast<float>(eps)) + fwd * P[i]);
    }
    report.final_loss = loss;
    if (options.on_log && options.log_every > 0 && (step % options.log_every == 0 || step == options.steps)) {
      options.on_log(step, loss);
    }
  }
  return report;
}

std::string_view to_string(Tap tap) { return tap == Tap::residual ? "residual" : "mlp_input"; }

Tap parse_tap(std::string_view text) {
  if (text == "residual") return Tap::residual;
  if (text == "mlp_input") return Tap::mlp_input;
  throw ConfigError("unknown activation tap '" + std::string(text) + "'");
}

const std::vector<std::vector<float>>& ActivationSet::at(int layer, Tap tap) const {
  auto it = values.find({layer, tap});
  if (it == values.end()) {
    throw ConfigError("activation set has no " + std::string(to_string(tap)) + " tap at layer " +
                      std::to_string(layer));
  }
  return it->second;
}

ActivationSet capture_activations(const LanguageModel& model, std::string_view text,
                                  const std::vector<TapSpec>& taps, const std::vector<EditHook>& hooks) {
  const LmConfig& c = model.config();
  std::vector<int> layers;
  for (const auto& t : taps) layers.push_back(t.layer);
  check_layers(c, layers);
  for (const auto& h : hooks) check_layers(c, h.layers);
  const auto tokens = encode_prompt(text);
  if (tokens.size() > static_cast<std::size_t>(c.context)) {
    throw DimensionError("capture_activations: input of " + std::to_string(tokens.size()) +
                         " tokens exceeds context " + std::to_string(c.context));
  }
  ActivationSet set;
  set.hidden = c.hidden;
  for (const auto& t : taps) set.values[t].reserve(tokens.size());
  Stepper stepper(model);
  auto observe = [&](int layer, Tap tap, std::span<const float> h) {
    auto it = set.values.find({layer, tap});
    if (it != set.values.end()) it->second.emplace_back(h.begin(), h.end());
  };
  for (int tok : tokens) stepper.step(tok, hooks.empty() ? nullptr : &hooks, observe);
  return set;
}

namespace {

/// Summed cross-entropy and target count of one document on the
/// incremental path, so hooks apply exactly as during generation.
std::pair<double, std::size_t> document_nll(const LanguageModel& model, std::string_view document,
                                            const std::vector<EditHook>& hooks) {
  const LmConfig& c = model.config();
  for (const auto& h : hooks) check_layers(c, h.layers);
  auto ignore = [](int, Tap, std::span<const float>) {};
  const std::vector<EditHook>* active = hooks.empty() ? nullptr : &hooks;
  double total = 0;
  std::size_t count = 0;
  for (const auto& w : make_windows(document, c.context)) {
    Stepper stepper(model);
    for (std::size_t t = 0; t < w.inputs.size(); ++t) {
      const auto& logits = stepper.step(w.inputs[t], active, ignore);
      double maxv = -INFINITY;
      for (float l : logits) maxv = std::max(maxv, static_cast<double>(l));
      double sum = 0;
      for (float l : logits) sum += std::exp(static_cast<double>(l) - maxv);
      total += maxv + std::log(sum) - static_cast<double>(logits[static_cast<std::size_t>(w.targets[t])]);
      ++count;
    }
  }
  return {total, count};
}

}  // namespace

double sequence_loss(const LanguageModel& model, std::string_view document, const std::vector<EditHook>& hooks) {
  const auto [total, count] = document_nll(model, document, hooks);
  return total / static_cast<double>(count);
}

double perplexity(const LanguageModel& model, const std::vector<std::string>& documents,
                  const std::vector<EditHook>& hooks) {
  if (documents.empty()) throw ConfigError("perplexity: no documents");
  double total = 0;
  std::size_t count = 0;
  for (const auto& doc : documents) {
    const auto [t, n] = document_nll(model, doc, hooks);
    total += t;
    count += n;
  }
  return std::exp(total / static_cast<double>(count));
}

std::string generate(const LanguageModel& model, std::string_view prompt, const DecodeConfig& decode,
                     const std::vector<EditHook>& hooks) {
  const LmConfig& c = model.config();
  for (const auto& h : hooks) check_layers(c, h.layers);
  const auto tokens = encode_prompt(prompt);
  if (tokens.size() > static_cast<std::size_t>(c.context)) {
    throw DimensionError("generate: prompt of " + std::to_string(tokens.size()) + " tokens exceeds context " +
                         std::to_string(c.context));
  }
  Stepper stepper(model);
  Rng rng(decode.seed);
  auto ignore = [](int, Tap, std::span<const float>) {};
  const std::vector<EditHook>* active = hooks.empty() ? nullptr : &hooks;
  const std::vector<float>* logits = nullptr;
  for (int tok : tokens) logits = &stepper.step(tok, decode.hook_prompt ? active : nullptr, ignore);

  std::string out;
  std::vector<double> probs(kVocab);
  for (int produced = 0; produced < decode.max_new_tokens; ++produced) {
    int next = 0;
    if (decode.temperature <= 0.0) {
      for (int v = 1; v < kVocab; ++v) {
        if ((*logits)[static_cast<std::size_t>(v)] > (*logits)[static_cast<std::size_t>(next)]) next = v;
      }
    } else {
      double maxv = -INFINITY;
      for (float l : *logits) maxv = std::max(maxv, static_cast<double>(l));
      double sum = 0;
      for (int v = 0; v < kVocab; ++v) {
        probs[static_cast<std::size_t>(v)] =
            std::exp((static_cast<double>((*logits)[static_cast<std::size_t>(v)]) - maxv) / decode.temperature);
        sum += probs[static_cast<std::size_t>(v)];
      }
      double r = rng.uniform() * sum;
      next = kVocab - 1;
      for (int v = 0; v < kVocab; ++v) {
        r -= probs[static_cast<std::size_t>(v)];
        if (r < 0) {
          next = v;
          break;
        }
      }
    }
    if (next == kEos || next == kBos) break;
    out.push_back(static_cast<char>(next));
    if (stepper.position() >= c.context) break;
    logits = &stepper.step(next, active, ignore);
  }
  return out;
}

}  // namespace rtlguard
