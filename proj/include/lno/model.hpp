#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lno/autodiff.hpp"
#include "lno/binary_io.hpp"
#include "lno/kv_config.hpp"
#include "lno/sample.hpp"

namespace lno {

enum class AttentionVariant { ScaledDotProduct, Galerkin };

std::string to_string(AttentionVariant v);
AttentionVariant parse_attention_variant(const std::string& s);

struct ModelConfig {
  std::size_t pos_dim = 2;      // d_pos: spatial (+ time) coordinates
  std::size_t value_dim = 1;    // n: physical quantities per input sample
  std::size_t out_dim = 1;      // n_out: predicted quantities per query
  std::size_t width = 64;       // D
  std::size_t latent_size = 32; // M
  std::size_t depth = 2;        // L
  std::size_t heads = 4;
  AttentionVariant attention = AttentionVariant::ScaledDotProduct;
  bool share_projector = true;
  std::uint64_t seed = 0;

  /// Throws ConfigError for zero sizes or width not divisible by heads.
  void validate() const;

  /// Keys are written under `prefix` (e.g. "model.width").
  void write(KvConfig& kv, const std::string& prefix = "model.") const;
  static ModelConfig read(const KvConfig& kv, const std::string& prefix = "model.");

  bool operator==(const ModelConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Parameter views bound to a tape.

struct Linear {
  Var weight;  // in x out
  Var bias;    // out; invalid when the layer has no bias

  Var apply(const Var& x) const;
};

/// Two-layer perceptron in -> hidden -> out with GELU between the layers.
struct Mlp {
  Linear hidden;
  Linear out;

  Var apply(const Var& x) const;
};

/// Maps an embedding to one logit per latent token. The output layer is the
/// latent query matrix H (M x D), so logits = GELU(x A + a) H^T.
struct AttentionProjector {
  Linear hidden;
  Var latent;  // H: M x D

  Var apply(const Var& x) const;
};

struct PhcaWeights {
  AttentionProjector encoder_projector;
  AttentionProjector decoder_projector;  // same Vars as the encoder when shared
  Var encoder_value;                     // W_v: D x D
  Var decoder_value;                     // W_v': D x D
};

struct BlockWeights {
  Var norm1_gamma, norm1_beta;
  Var query, key, value;  // D x D, no bias
  Linear attn_out;
  Var key_norm_gamma, key_norm_beta;      // Galerkin only, per-head width
  Var value_norm_gamma, value_norm_beta;  // Galerkin only, per-head width
  Var norm2_gamma, norm2_beta;
  Linear ffn_in;   // D -> 4D
  Linear ffn_out;  // 4D -> D
};

struct BoundModel {
  ModelConfig config;
  Mlp trunk;
  Mlp branch;
  PhcaWeights phca;
  std::vector<BlockWeights> blocks;
  Mlp head;
  std::vector<Var> params;  // declaration order
};

// ---------------------------------------------------------------------------

/// Owns every learnable tensor of the model.
class LnoModel {
 public:
  explicit LnoModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::vector<NamedTensor>& parameters() { return params_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  Tensor& parameter(const std::string& name);
  const Tensor& parameter(const std::string& name) const;

  /// Records every parameter on `tape`, as trainable leaves or as constants.
  BoundModel bind(Tape& tape, bool trainable) const;
  /// Builds the views from existing tape values given in declaration order.
  BoundModel bind_vars(std::vector<Var> vars) const;

  /// Untaped prediction at `query_positions` (N_out x d_pos).
  Tensor predict(const SampleSequence& input, const Tensor& query_positions) const;

  std::size_t param_count() const;

  TensorArchive to_archive() const;
  static LnoModel from_archive(const TensorArchive& archive);
  void save(const std::string& path) const;
  static LnoModel load(const std::string& path);

 private:
  void add_linear(const std::string& name, std::size_t in, std::size_t out, bool bias,
                  const std::string& init_name = "");
  void add_tensor(const std::string& name, Shape shape, const std::string& init, const std::string& init_name = "");

  ModelConfig config_;
  std::vector<NamedTensor> params_;
};

std::size_t param_count(const LnoModel& model);

/// Size of one attention projector: D*D + D + M*D.
std::size_t attention_projector_size(const ModelConfig& config);
/// Size of one latent Transformer block for the configured attention variant.
std::size_t transformer_block_size(const ModelConfig& config);

// ---------------------------------------------------------------------------
// Forward pieces.

struct Embedding {
  Var positions;  // X^ : N x D, from positions only
  Var values;     // Y^ : N x D, from positions and values
};

Embedding embed_inputs(const BoundModel& model, const SampleSequence& input);

/// M x N attention of latent tokens over input samples (softmax over N).
Var encoder_attention(const AttentionProjector& projector, const Var& x_hat);
/// Z0 = softmax_N(projector(X^)^T) (Y^ W_v).
Var phca_encode(const Var& x_hat, const Var& y_hat, const AttentionProjector& projector, const Var& value_weight);

Var scaled_dot_product_attention(const Var& z, const BlockWeights& block, std::size_t heads);
Var galerkin_attention(const Var& z, const BlockWeights& block, std::size_t heads);
Var transformer_block(const Var& z, const BlockWeights& block, std::size_t heads, AttentionVariant variant);
Var latent_forward(const Var& z0, std::span<const BlockWeights> blocks, std::size_t heads, AttentionVariant variant);

/// N_out x M attention of query embeddings over latent tokens (softmax over M).
Var decoder_attention(const AttentionProjector& projector, const Var& p);
Var phca_decode(const BoundModel& model, const Tensor& query_positions, const Var& z);

Var lno_forward(const BoundModel& model, const SampleSequence& input, const Tensor& query_positions);

/// Parameter gradients in declaration order after `tape.backward`.
std::vector<Tensor> collect_gradients(const Tape& tape, const BoundModel& model);

}  // namespace lno
