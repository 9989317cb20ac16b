#include "solo/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "solo/kernels.hpp"

namespace solo {

namespace {

constexpr double kPi = 3.14159265358979323846;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void rmsnorm_rows(const double* x, const double* gain, std::size_t rows, std::size_t d,
                  double eps, double* out, double* inv_rms) {
  for (std::size_t t = 0; t < rows; ++t) {
    const double* xt = x + t * d;
    const double ms = kernels::sumsq(xt, d) / static_cast<double>(d);
    const double r = 1.0 / std::sqrt(ms + eps);
    inv_rms[t] = r;
    double* ot = out + t * d;
    for (std::size_t i = 0; i < d; ++i) ot[i] = xt[i] * gain[i] * r;
  }
}

void rmsnorm_backward_rows(const double* x, const double* gain, const double* dy,
                           const double* inv_rms, std::size_t rows, std::size_t d,
                           double* dx, double* dgain) {
  for (std::size_t t = 0; t < rows; ++t) {
    const double* xt = x + t * d;
    const double* dyt = dy + t * d;
    const double r = inv_rms[t];
    double c = 0.0;
    for (std::size_t i = 0; i < d; ++i) c += dyt[i] * gain[i] * xt[i];
    const double factor = r * r * r * c / static_cast<double>(d);
    double* dxt = dx + t * d;
    for (std::size_t i = 0; i < d; ++i) {
      dxt[i] += dyt[i] * gain[i] * r - xt[i] * factor;
      dgain[i] += dyt[i] * xt[i] * r;
    }
  }
}

struct LayerActs {
  std::vector<double> x_in;      // residual stream entering the layer
  std::vector<double> a_norm;    // attention-branch rmsnorm output
  std::vector<double> inv_rms_a;
  std::vector<double> q, k, v;   // q/k stored post-RoPE
  std::vector<double> probs;     // attention weights, ragged pool
  std::vector<std::size_t> prob_off;  // per-position offset into probs
  std::vector<double> ctx;       // attention context, pre-Wo
  std::vector<double> x_mid;     // after attention residual
  std::vector<double> b_norm;    // ffn-branch rmsnorm output
  std::vector<double> inv_rms_b;
  std::vector<double> u;         // pre-activation
  std::vector<double> h;         // silu(u)
};

struct Activations {
  std::size_t len = 0;
  AttentionPredicate pred;
  std::vector<double> rope_cos, rope_sin;  // len x (head_dim/2)
  std::vector<LayerActs> layers;
  std::vector<double> x_final;  // residual stream after the last layer
  std::vector<double> f_norm;
  std::vector<double> inv_rms_f;
  std::vector<double> logits;
};

void apply_rope(double* vec, std::size_t len, std::size_t d, std::size_t n_heads,
                const std::vector<double>& cos_tab, const std::vector<double>& sin_tab,
                bool inverse) {
  const std::size_t hd = d / n_heads;
  const std::size_t pairs = hd / 2;
  for (std::size_t t = 0; t < len; ++t) {
    const double* ct = cos_tab.data() + t * pairs;
    const double* st = sin_tab.data() + t * pairs;
    for (std::size_t h = 0; h < n_heads; ++h) {
      double* base = vec + t * d + h * hd;
      for (std::size_t i = 0; i < pairs; ++i) {
        const double c = ct[i];
        const double s = inverse ? -st[i] : st[i];
        const double a = base[2 * i];
        const double b = base[2 * i + 1];
        base[2 * i] = a * c - b * s;
        base[2 * i + 1] = a * s + b * c;
      }
    }
  }
}

void run_forward(const PackedSequence& seq, const ModelParams& params, Activations& acts) {
  const ModelConfig& cfg = params.config;
  cfg.validate();
  const std::size_t len = seq.size();
  if (len == 0) throw InvalidInputError("cannot run forward on an empty sequence");
  if (len > cfg.max_seq_len) {
    throw InvalidInputError("sequence length " + std::to_string(len) +
                            " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  const std::size_t d = cfg.d_model;
  const std::size_t hd = cfg.head_dim();
  const std::size_t pairs = hd / 2;

  acts.len = len;
  acts.pred = build_attention_predicate(seq);

  // Segment-relative positions keep logits identical whether an example is
  // packed or processed alone.
  std::vector<double> inv_freq(pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    inv_freq[i] = std::pow(cfg.rope_theta, -2.0 * static_cast<double>(i) / static_cast<double>(hd));
  }
  acts.rope_cos.assign(len * pairs, 0.0);
  acts.rope_sin.assign(len * pairs, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    const auto pos = static_cast<double>(t - acts.pred.segment_start[t]);
    for (std::size_t i = 0; i < pairs; ++i) {
      const double angle = pos * inv_freq[i];
      acts.rope_cos[t * pairs + i] = std::cos(angle);
      acts.rope_sin[t * pairs + i] = std::sin(angle);
    }
  }

  acts.layers.assign(cfg.n_layers, {});
  std::vector<double> x = embed_sequence(seq.elements, cfg.vocabulary(),
                                         {params.embedding.data.data(), params.embedding.size()},
                                         params.projector());

  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> scores(len);

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    LayerActs& la = acts.layers[l];
    const ModelParams::LayerParams& lp = params.layers[l];
    la.x_in = x;

    la.a_norm.assign(len * d, 0.0);
    la.inv_rms_a.assign(len, 0.0);
    rmsnorm_rows(la.x_in.data(), lp.attn_norm.data.data(), len, d, cfg.norm_eps,
                 la.a_norm.data(), la.inv_rms_a.data());

    la.q.assign(len * d, 0.0);
    la.k.assign(len * d, 0.0);
    la.v.assign(len * d, 0.0);
    kernels::gemm_nn(len, d, d, la.a_norm.data(), lp.wq.data.data(), la.q.data());
    kernels::gemm_nn(len, d, d, la.a_norm.data(), lp.wk.data.data(), la.k.data());
    kernels::gemm_nn(len, d, d, la.a_norm.data(), lp.wv.data.data(), la.v.data());
    apply_rope(la.q.data(), len, d, cfg.n_heads, acts.rope_cos, acts.rope_sin, false);
    apply_rope(la.k.data(), len, d, cfg.n_heads, acts.rope_cos, acts.rope_sin, false);

    la.ctx.assign(len * d, 0.0);
    la.prob_off.assign(len, 0);
    la.probs.clear();
    for (std::size_t t = 0; t < len; ++t) {
      la.prob_off[t] = la.probs.size();
      if (acts.pred.is_pad[t]) continue;  // pad queries attend to nothing
      const std::size_t start = acts.pred.segment_start[t];
      const std::size_t range = t - start + 1;
      la.probs.resize(la.probs.size() + cfg.n_heads * range);
      for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        const double* qv = la.q.data() + t * d + h * hd;
        for (std::size_t j = 0; j < range; ++j) {
          scores[j] = kernels::dot(qv, la.k.data() + (start + j) * d + h * hd, hd) * inv_sqrt_hd;
        }
        double maxs = scores[0];
        for (std::size_t j = 1; j < range; ++j) maxs = std::max(maxs, scores[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < range; ++j) {
          scores[j] = std::exp(scores[j] - maxs);
          z += scores[j];
        }
        double* probs = la.probs.data() + la.prob_off[t] + h * range;
        double* ctx = la.ctx.data() + t * d + h * hd;
        for (std::size_t j = 0; j < range; ++j) {
          const double p = scores[j] / z;
          probs[j] = p;
          kernels::axpy(p, la.v.data() + (start + j) * d + h * hd, ctx, hd);
        }
      }
    }

    la.x_mid = la.x_in;
    kernels::gemm_nn(len, d, d, la.ctx.data(), lp.wo.data.data(), la.x_mid.data());

    la.b_norm.assign(len * d, 0.0);
    la.inv_rms_b.assign(len, 0.0);
    rmsnorm_rows(la.x_mid.data(), lp.ffn_norm.data.data(), len, d, cfg.norm_eps,
                 la.b_norm.data(), la.inv_rms_b.data());

    la.u.assign(len * cfg.ffn_dim, 0.0);
    kernels::gemm_nn(len, d, cfg.ffn_dim, la.b_norm.data(), lp.w1.data.data(), la.u.data());
    la.h.resize(len * cfg.ffn_dim);
    for (std::size_t i = 0; i < la.h.size(); ++i) la.h[i] = la.u[i] * sigmoid(la.u[i]);

    x = la.x_mid;
    kernels::gemm_nn(len, cfg.ffn_dim, d, la.h.data(), lp.w2.data.data(), x.data());
  }

  acts.x_final = std::move(x);
  acts.f_norm.assign(len * d, 0.0);
  acts.inv_rms_f.assign(len, 0.0);
  rmsnorm_rows(acts.x_final.data(), params.final_norm.data.data(), len, d, cfg.norm_eps,
               acts.f_norm.data(), acts.inv_rms_f.data());

  const std::size_t vout = cfg.embedding_rows();
  acts.logits.assign(len * vout, 0.0);
  if (cfg.tie_embeddings) {
    kernels::gemm_nt(len, d, vout, acts.f_norm.data(), params.embedding.data.data(),
                     acts.logits.data());
  } else {
    kernels::gemm_nn(len, d, vout, acts.f_norm.data(), params.head.data.data(),
                     acts.logits.data());
  }
}

// Cross entropy at one logits row via a stable log-sum-exp.
double row_cross_entropy(const double* row, std::size_t n, std::uint32_t target) {
  double maxv = row[0];
  for (std::size_t i = 1; i < n; ++i) maxv = std::max(maxv, row[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp(row[i] - maxv);
  return maxv + std::log(z) - row[target];
}

std::uint32_t target_id_at(const PackedSequence& seq, std::size_t t) {
  if (t + 1 >= seq.size() || !seq.elements[t + 1].is(TokenElement::Kind::Text)) {
    throw Error("loss mask set at position " + std::to_string(t) +
                " but the target is not a text element");
  }
  return seq.elements[t + 1].id;
}

}  // namespace

void ModelConfig::validate() const {
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || ffn_dim == 0 || max_seq_len == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  if (head_dim() % 2 != 0) throw ConfigError("head dim must be even for rotary positions");
  if (text_vocab_size == 0) throw ConfigError("text vocabulary must be nonempty");
  if (patch_size == 0) throw ConfigError("patch size must be positive");
}

void TrainConfig::validate() const {
  if (!(min_lr > 0.0) || !(peak_lr >= min_lr)) {
    throw ConfigError("learning rates must satisfy 0 < min_lr <= peak_lr");
  }
  if (warmup_steps >= total_steps) throw ConfigError("warmup_steps must be < total_steps");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
}

ModelParams ModelParams::zeros_like(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  const std::size_t d = cfg.d_model;
  auto make = [](std::string name, std::vector<std::size_t> shape) {
    Tensor t;
    t.name = std::move(name);
    t.shape = std::move(shape);
    std::size_t n = 1;
    for (std::size_t s : t.shape) n *= s;
    t.data.assign(n, 0.0);
    return t;
  };
  p.embedding = make("embedding", {cfg.embedding_rows(), d});
  p.proj_weight = make("proj.weight", {cfg.patch_dim(), d});
  p.proj_bias = make("proj.bias", {d});
  p.layers.resize(cfg.n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string prefix = "layers." + std::to_string(l) + ".";
    p.layers[l].attn_norm = make(prefix + "attn_norm", {d});
    p.layers[l].wq = make(prefix + "wq", {d, d});
    p.layers[l].wk = make(prefix + "wk", {d, d});
    p.layers[l].wv = make(prefix + "wv", {d, d});
    p.layers[l].wo = make(prefix + "wo", {d, d});
    p.layers[l].ffn_norm = make(prefix + "ffn_norm", {d});
    p.layers[l].w1 = make(prefix + "w1", {d, cfg.ffn_dim});
    p.layers[l].w2 = make(prefix + "w2", {cfg.ffn_dim, d});
  }
  p.final_norm = make("final_norm", {d});
  if (!cfg.tie_embeddings) p.head = make("head", {d, cfg.embedding_rows()});
  return p;
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = zeros_like(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  for (Tensor* t : p.tensors()) {
    if (t->rank() == 1) {
      // Norm gains start at one, the projector bias at zero.
      const bool is_norm = t->name.find("norm") != std::string::npos;
      std::fill(t->data.begin(), t->data.end(), is_norm ? 1.0 : 0.0);
    } else {
      for (double& v : t->data) v = normal(rng);
    }
  }
  return p;
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out = {&embedding, &proj_weight, &proj_bias};
  for (LayerParams& l : layers) {
    out.push_back(&l.attn_norm);
    out.push_back(&l.wq);
    out.push_back(&l.wk);
    out.push_back(&l.wv);
    out.push_back(&l.wo);
    out.push_back(&l.ffn_norm);
    out.push_back(&l.w1);
    out.push_back(&l.w2);
  }
  out.push_back(&final_norm);
  if (!config.tie_embeddings) out.push_back(&head);
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  auto mutable_tensors = const_cast<ModelParams*>(this)->tensors();
  return {mutable_tensors.begin(), mutable_tensors.end()};
}

ProjectorWeights ModelParams::projector() const {
  ProjectorWeights w;
  w.in_dim = config.patch_dim();
  w.d_model = config.d_model;
  w.weight = proj_weight.data;
  w.bias = proj_bias.data;
  return w;
}

ForwardResult forward(const PackedSequence& seq, const ModelParams& params) {
  Activations acts;
  run_forward(seq, params, acts);
  ForwardResult r;
  r.rows = acts.len;
  r.cols = params.config.embedding_rows();
  r.logits = std::move(acts.logits);
  return r;
}

double masked_loss(const ForwardResult& result, const PackedSequence& seq) {
  if (result.rows != seq.size()) throw DimensionError("logits rows do not match sequence length");
  double ce = 0.0;
  std::size_t active = 0;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (!seq.loss_mask[t]) continue;
    ce += row_cross_entropy(result.row(t), result.cols, target_id_at(seq, t));
    ++active;
  }
  return active == 0 ? 0.0 : ce / static_cast<double>(active);
}

LossBreakdown loss_and_gradients(const PackedSequence& seq, const ModelParams& params,
                                 ModelParams& grads, double grad_scale) {
  const ModelConfig& cfg = params.config;
  {
    auto pt = params.tensors();
    auto gt = grads.tensors();
    if (pt.size() != gt.size()) throw DimensionError("gradient tensor set does not match params");
    for (std::size_t i = 0; i < pt.size(); ++i) {
      if (pt[i]->shape != gt[i]->shape) {
        throw DimensionError("gradient tensor '" + gt[i]->name + "' shape mismatch");
      }
    }
  }
  Activations acts;
  run_forward(seq, params, acts);
  const std::size_t len = acts.len;
  const std::size_t d = cfg.d_model;
  const std::size_t hd = cfg.head_dim();
  const std::size_t vout = cfg.embedding_rows();

  // A segment is vision-conditioned when it contains at least one patch.
  std::vector<std::uint8_t> segment_has_patch(seq.num_segments + 1, 0);
  for (std::size_t t = 0; t < len; ++t) {
    if (seq.elements[t].is(TokenElement::Kind::Patch)) segment_has_patch[seq.segment_ids[t]] = 1;
  }

  LossBreakdown bd;
  double ce_sum = 0.0, ce_text = 0.0, ce_vision = 0.0;
  std::vector<std::size_t> active_positions;
  for (std::size_t t = 0; t < len; ++t) {
    if (!seq.loss_mask[t]) continue;
    const double ce = row_cross_entropy(acts.logits.data() + t * vout, vout, target_id_at(seq, t));
    ce_sum += ce;
    if (segment_has_patch[seq.segment_ids[t]]) {
      ce_vision += ce;
      ++bd.vision_active;
    } else {
      ce_text += ce;
      ++bd.text_active;
    }
    active_positions.push_back(t);
  }
  bd.active = active_positions.size();
  bd.total = bd.active == 0 ? 0.0 : ce_sum / static_cast<double>(bd.active);
  bd.text_only = bd.text_active == 0 ? 0.0 : ce_text / static_cast<double>(bd.text_active);
  bd.vision_cond = bd.vision_active == 0 ? 0.0 : ce_vision / static_cast<double>(bd.vision_active);

  if (bd.active == 0) return bd;  // no loss, no gradient
  const double scale = grad_scale < 0.0 ? 1.0 / static_cast<double>(bd.active) : grad_scale;

  // d(loss)/d(logits): softmax minus one-hot at active rows.
  std::vector<double> dlogits(len * vout, 0.0);
  for (std::size_t t : active_positions) {
    const double* row = acts.logits.data() + t * vout;
    double* drow = dlogits.data() + t * vout;
    double maxv = row[0];
    for (std::size_t i = 1; i < vout; ++i) maxv = std::max(maxv, row[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < vout; ++i) z += std::exp(row[i] - maxv);
    for (std::size_t i = 0; i < vout; ++i) drow[i] = std::exp(row[i] - maxv) / z * scale;
    drow[target_id_at(seq, t)] -= scale;
  }

  std::vector<double> dfnorm(len * d, 0.0);
  if (cfg.tie_embeddings) {
    kernels::gemm_nn(len, vout, d, dlogits.data(), params.embedding.data.data(), dfnorm.data());
    kernels::gemm_tn(len, vout, d, dlogits.data(), acts.f_norm.data(),
                     grads.embedding.data.data());
  } else {
    kernels::gemm_nt(len, vout, d, dlogits.data(), params.head.data.data(), dfnorm.data());
    kernels::gemm_tn(len, d, vout, acts.f_norm.data(), dlogits.data(), grads.head.data.data());
  }

  std::vector<double> dx(len * d, 0.0);
  rmsnorm_backward_rows(acts.x_final.data(), params.final_norm.data.data(), dfnorm.data(),
                        acts.inv_rms_f.data(), len, d, dx.data(),
                        grads.final_norm.data.data());

  std::vector<double> dctx(len * d), dq(len * d), dk(len * d), dv(len * d);
  std::vector<double> danorm(len * d), dbnorm(len * d);
  std::vector<double> du(len * cfg.ffn_dim), dh(len * cfg.ffn_dim);
  std::vector<double> dp(len);

  for (std::size_t li = cfg.n_layers; li-- > 0;) {
    const LayerActs& la = acts.layers[li];
    const ModelParams::LayerParams& lp = params.layers[li];
    ModelParams::LayerParams& lg = grads.layers[li];

    // FFN branch: x_out = x_mid + silu(b_norm * w1) * w2.
    std::fill(dh.begin(), dh.end(), 0.0);
    kernels::gemm_nt(len, d, cfg.ffn_dim, dx.data(), lp.w2.data.data(), dh.data());
    kernels::gemm_tn(len, cfg.ffn_dim, d, la.h.data(), dx.data(), lg.w2.data.data());
    for (std::size_t i = 0; i < du.size(); ++i) {
      const double sig = sigmoid(la.u[i]);
      du[i] = dh[i] * sig * (1.0 + la.u[i] * (1.0 - sig));
    }
    std::fill(dbnorm.begin(), dbnorm.end(), 0.0);
    kernels::gemm_nt(len, cfg.ffn_dim, d, du.data(), lp.w1.data.data(), dbnorm.data());
    kernels::gemm_tn(len, d, cfg.ffn_dim, la.b_norm.data(), du.data(), lg.w1.data.data());
    rmsnorm_backward_rows(la.x_mid.data(), lp.ffn_norm.data.data(), dbnorm.data(),
                          la.inv_rms_b.data(), len, d, dx.data(), lg.ffn_norm.data.data());

    // Attention branch: x_mid = x_in + attn(a_norm) * wo.
    std::fill(dctx.begin(), dctx.end(), 0.0);
    kernels::gemm_nt(len, d, d, dx.data(), lp.wo.data.data(), dctx.data());
    kernels::gemm_tn(len, d, d, la.ctx.data(), dx.data(), lg.wo.data.data());

    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
    for (std::size_t t = 0; t < len; ++t) {
      if (acts.pred.is_pad[t]) continue;
      const std::size_t start = acts.pred.segment_start[t];
      const std::size_t range = t - start + 1;
      for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        const double* probs = la.probs.data() + la.prob_off[t] + h * range;
        const double* dctx_th = dctx.data() + t * d + h * hd;
        double dot_pp = 0.0;
        for (std::size_t j = 0; j < range; ++j) {
          dp[j] = kernels::dot(dctx_th, la.v.data() + (start + j) * d + h * hd, hd);
          kernels::axpy(probs[j], dctx_th, dv.data() + (start + j) * d + h * hd, hd);
          dot_pp += dp[j] * probs[j];
        }
        double* dq_th = dq.data() + t * d + h * hd;
        for (std::size_t j = 0; j < range; ++j) {
          const double ds = probs[j] * (dp[j] - dot_pp) * inv_sqrt_hd;
          kernels::axpy(ds, la.k.data() + (start + j) * d + h * hd, dq_th, hd);
          kernels::axpy(ds, la.q.data() + t * d + h * hd, dk.data() + (start + j) * d + h * hd,
                        hd);
        }
      }
    }
    apply_rope(dq.data(), len, d, cfg.n_heads, acts.rope_cos, acts.rope_sin, true);
    apply_rope(dk.data(), len, d, cfg.n_heads, acts.rope_cos, acts.rope_sin, true);

    std::fill(danorm.begin(), danorm.end(), 0.0);
    kernels::gemm_nt(len, d, d, dq.data(), lp.wq.data.data(), danorm.data());
    kernels::gemm_nt(len, d, d, dk.data(), lp.wk.data.data(), danorm.data());
    kernels::gemm_nt(len, d, d, dv.data(), lp.wv.data.data(), danorm.data());
    kernels::gemm_tn(len, d, d, la.a_norm.data(), dq.data(), lg.wq.data.data());
    kernels::gemm_tn(len, d, d, la.a_norm.data(), dk.data(), lg.wk.data.data());
    kernels::gemm_tn(len, d, d, la.a_norm.data(), dv.data(), lg.wv.data.data());

    rmsnorm_backward_rows(la.x_in.data(), lp.attn_norm.data.data(), danorm.data(),
                          la.inv_rms_a.data(), len, d, dx.data(), lg.attn_norm.data.data());
  }

  // Embedding layer: table rows for text/specials, projector for patches.
  const Vocabulary vocab = cfg.vocabulary();
  std::vector<std::size_t> patch_positions;
  for (std::size_t t = 0; t < len; ++t) {
    const TokenElement& e = seq.elements[t];
    switch (e.kind) {
      case TokenElement::Kind::Text:
        kernels::axpy(1.0, dx.data() + t * d, grads.embedding.data.data() + e.id * d, d);
        break;
      case TokenElement::Kind::Special:
        kernels::axpy(1.0, dx.data() + t * d,
                      grads.embedding.data.data() + (vocab.text_vocab_size + e.id) * d, d);
        break;
      case TokenElement::Kind::Patch:
        patch_positions.push_back(t);
        break;
      case TokenElement::Kind::Pad:
        break;
    }
  }
  if (!patch_positions.empty()) {
    const std::size_t in_dim = cfg.patch_dim();
    const std::size_t np = patch_positions.size();
    std::vector<double> normalized(np * in_dim);
    std::vector<double> dx_patch(np * d);
    for (std::size_t i = 0; i < np; ++i) {
      const auto& pix = seq.elements[patch_positions[i]].pixels;
      kernels::u8_to_unit(pix.data(), normalized.data() + i * in_dim, in_dim);
      std::memcpy(dx_patch.data() + i * d, dx.data() + patch_positions[i] * d,
                  d * sizeof(double));
    }
    kernels::gemm_tn(np, in_dim, d, normalized.data(), dx_patch.data(),
                     grads.proj_weight.data.data());
    for (std::size_t i = 0; i < np; ++i) {
      kernels::axpy(1.0, dx_patch.data() + i * d, grads.proj_bias.data.data(), d);
    }
  }

  return bd;
}

double lr_at_step(std::size_t step, const TrainConfig& cfg) {
  cfg.validate();
  if (step > cfg.total_steps) {
    throw InvalidInputError("step " + std::to_string(step) + " exceeds total_steps " +
                            std::to_string(cfg.total_steps));
  }
  if (step <= cfg.warmup_steps) {
    if (cfg.warmup_steps == 0) return cfg.peak_lr;
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.min_lr + 0.5 * (cfg.peak_lr - cfg.min_lr) * (1.0 + std::cos(kPi * progress));
}

GradCheckResult grad_check(const ModelParams& params, const PackedSequence& seq, double epsilon,
                           std::size_t min_coords, std::uint64_t seed) {
  if (!(epsilon > 0.0)) throw InvalidInputError("epsilon must be positive");
  ModelParams work = params;
  ModelParams grads = ModelParams::zeros_like(params.config);
  loss_and_gradients(seq, work, grads);

  auto work_tensors = work.tensors();
  auto grad_tensors = grads.tensors();
  const std::size_t n_tensors = work_tensors.size();
  const std::size_t per_tensor = (min_coords + n_tensors - 1) / n_tensors;

  std::mt19937_64 rng(seed);
  GradCheckResult result;
  for (std::size_t ti = 0; ti < n_tensors; ++ti) {
    Tensor* wt = work_tensors[ti];
    const Tensor* gt = grad_tensors[ti];
    const std::size_t samples = std::min<std::size_t>(per_tensor, wt->size());
    for (std::size_t s = 0; s < samples; ++s) {
      const std::size_t idx = rng() % wt->size();
      const double saved = wt->data[idx];
      wt->data[idx] = saved + epsilon;
      const double loss_plus = masked_loss(forward(seq, work), seq);
      wt->data[idx] = saved - epsilon;
      const double loss_minus = masked_loss(forward(seq, work), seq);
      wt->data[idx] = saved;

      const double numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
      const double analytic = gt->data[idx];
      const double diff = std::abs(numeric - analytic);
      const double rel = diff / std::max(1e-6, std::abs(numeric) + std::abs(analytic));
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_tensor = wt->name;
      }
      result.max_abs_diff = std::max(result.max_abs_diff, diff);
      ++result.coords_checked;
    }
  }
  return result;
}

}  // namespace solo
