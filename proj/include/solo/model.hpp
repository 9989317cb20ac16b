#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "solo/encoding.hpp"
#include "solo/packing.hpp"

namespace solo {

/// Desk-scale decoder-only transformer configuration. Defaults are the test
/// sizing; training runs override via the CLI.
struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn_dim = 256;
  std::uint32_t text_vocab_size = 256;
  std::size_t patch_size = 32;
  std::size_t max_seq_len = 512;
  bool tie_embeddings = false;
  double rope_theta = 10000.0;
  double norm_eps = 1e-5;

  std::size_t head_dim() const { return d_model / n_heads; }
  std::size_t patch_dim() const { return patch_size * patch_size * 3; }
  Vocabulary vocabulary() const { return Vocabulary{text_vocab_size}; }
  std::size_t embedding_rows() const { return vocabulary().embedding_rows(); }

  void validate() const;
};

struct TrainConfig {
  double peak_lr = 5e-5;
  double min_lr = 5e-6;
  std::size_t warmup_steps = 200;
  std::size_t total_steps = 1000;
  double weight_decay = 0.1;
  std::size_t batch_size = 2;
  // Conventional Adam moments, recorded in the checkpoint header.
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t checkpoint_every = 0;  // 0 = final checkpoint only

  void validate() const;
};

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
};

/// All trainable parameters, double precision. Tensor enumeration order is
/// stable and shared by the optimizer, the gradient checker and the
/// checkpoint format.
struct ModelParams {
  struct LayerParams {
    Tensor attn_norm;  // [d]
    Tensor wq, wk, wv, wo;  // [d, d]
    Tensor ffn_norm;  // [d]
    Tensor w1;  // [d, ffn]
    Tensor w2;  // [ffn, d]
  };

  ModelConfig config;
  Tensor embedding;    // [vocab+3, d]
  Tensor proj_weight;  // [P*P*3, d]
  Tensor proj_bias;    // [d]
  std::vector<LayerParams> layers;
  Tensor final_norm;  // [d]
  Tensor head;        // [d, vocab+3]; empty when tie_embeddings

  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);
  static ModelParams zeros_like(const ModelConfig& cfg);

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  ProjectorWeights projector() const;
};

struct ForwardResult {
  std::vector<double> logits;  // rows x cols, row-major
  std::size_t rows = 0;        // sequence length
  std::size_t cols = 0;        // vocab + specials

  const double* row(std::size_t t) const { return logits.data() + t * cols; }
};

/// Pre-norm decoder forward over a packed sequence. Attention follows
/// build_attention_predicate exactly (causal within segments, padding inert)
/// with RoPE over segment-relative positions, so logits are invariant to how
/// examples are packed.
ForwardResult forward(const PackedSequence& seq, const ModelParams& params);

/// Mean cross entropy over positions with loss_mask set; 0 with none active.
double masked_loss(const ForwardResult& result, const PackedSequence& seq);

struct LossBreakdown {
  double total = 0.0;
  double text_only = 0.0;    // over active targets in segments with no patches
  double vision_cond = 0.0;  // over active targets in segments with patches
  std::size_t active = 0;
  std::size_t text_active = 0;
  std::size_t vision_active = 0;
};

/// Backward pass. Gradients accumulate into `grads` (caller zeros them).
/// `grad_scale` < 0 means mean-over-active semantics matching masked_loss;
/// otherwise gradients of the *summed* cross entropy are scaled by it.
LossBreakdown loss_and_gradients(const PackedSequence& seq, const ModelParams& params,
                                 ModelParams& grads, double grad_scale = -1.0);

/// Warmup-then-cosine schedule: linear 0 -> peak over [0, warmup], cosine
/// peak -> min over [warmup, total]. Endpoints are exact. Throws on
/// step > total_steps.
double lr_at_step(std::size_t step, const TrainConfig& cfg);

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_diff = 0.0;
  std::size_t coords_checked = 0;
  std::string worst_tensor;
};

/// Central-difference check of loss_and_gradients over at least `min_coords`
/// coordinates spread across every parameter tensor (projector included).
GradCheckResult grad_check(const ModelParams& params, const PackedSequence& seq,
                           double epsilon = 1e-4, std::size_t min_coords = 200,
                           std::uint64_t seed = 0);

}  // namespace solo
