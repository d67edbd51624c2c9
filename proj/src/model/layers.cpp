#include <cmath>

#include "lno/error.hpp"
#include "lno/model.hpp"

namespace lno {

Var Linear::apply(const Var& x) const {
  Var y = matmul(x, weight);
  return bias.valid() ? add_row(y, bias) : y;
}

Var Mlp::apply(const Var& x) const { return out.apply(gelu(hidden.apply(x))); }

Var AttentionProjector::apply(const Var& x) const { return matmul(gelu(hidden.apply(x)), transpose(latent)); }

Embedding embed_inputs(const BoundModel& model, const SampleSequence& input) {
  input.validate();
  const ModelConfig& cfg = model.config;
  if (input.pos_dim() != cfg.pos_dim) {
    throw ConfigError("input has " + std::to_string(input.pos_dim()) + " position columns, model expects " +
                      std::to_string(cfg.pos_dim));
  }
  if (input.value_dim() != cfg.value_dim) {
    throw ConfigError("input has " + std::to_string(input.value_dim()) + " value columns, model expects " +
                      std::to_string(cfg.value_dim));
  }
  Tape& tape = model.trunk.hidden.weight.tape();
  const Var pos = tape.constant(input.positions);
  const Var pos_val = tape.constant(concat_cols(input.positions, input.values));
  return Embedding{model.trunk.apply(pos), model.branch.apply(pos_val)};
}

Var encoder_attention(const AttentionProjector& projector, const Var& x_hat) {
  if (x_hat.value().rank() != 2 || x_hat.value().dim(0) == 0) {
    throw DimensionError("PhCA encoder needs at least one input sample");
  }
  return softmax_last_axis(transpose(projector.apply(x_hat)));
}

Var phca_encode(const Var& x_hat, const Var& y_hat, const AttentionProjector& projector, const Var& value_weight) {
  if (x_hat.value().rank() != 2 || x_hat.value().dim(0) == 0) {
    throw DimensionError("PhCA encoder needs at least one input sample");
  }
  if (x_hat.value().dim(0) != y_hat.value().dim(0)) {
    throw DimensionError("PhCA encoder key/value row mismatch: " + shape_string(x_hat.shape()) + " vs " +
                         shape_string(y_hat.shape()));
  }
  return matmul(encoder_attention(projector, x_hat), matmul(y_hat, value_weight));
}

namespace {

void check_heads(const Var& z, std::size_t heads) {
  const std::size_t d = z.value().cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("token width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
}

}  // namespace

Var scaled_dot_product_attention(const Var& z, const BlockWeights& block, std::size_t heads) {
  check_heads(z, heads);
  const std::size_t head_dim = z.value().cols() / heads;
  const double temperature = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const Var q = matmul(z, block.query);
  const Var k = matmul(z, block.key);
  const Var v = matmul(z, block.value);
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Var qh = slice_cols(q, h * head_dim, head_dim);
    const Var kh = slice_cols(k, h * head_dim, head_dim);
    const Var vh = slice_cols(v, h * head_dim, head_dim);
    const Var weights = softmax_last_axis(scale(matmul(qh, transpose(kh)), temperature));
    outs.push_back(matmul(weights, vh));
  }
  const Var merged = heads == 1 ? outs.front() : concat_cols(outs);
  return block.attn_out.apply(merged);
}

Var galerkin_attention(const Var& z, const BlockWeights& block, std::size_t heads) {
  check_heads(z, heads);
  if (!block.key_norm_gamma.valid()) throw ConfigError("block has no Galerkin normalization weights");
  const std::size_t tokens = z.value().rows();
  const std::size_t head_dim = z.value().cols() / heads;
  const Var q = matmul(z, block.query);
  const Var k = matmul(z, block.key);
  const Var v = matmul(z, block.value);
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Var qh = slice_cols(q, h * head_dim, head_dim);
    const Var kh = layer_norm(slice_cols(k, h * head_dim, head_dim), block.key_norm_gamma, block.key_norm_beta);
    const Var vh = layer_norm(slice_cols(v, h * head_dim, head_dim), block.value_norm_gamma, block.value_norm_beta);
    const Var kv = matmul(transpose(kh), vh);
    outs.push_back(scale(matmul(qh, kv), 1.0 / static_cast<double>(tokens)));
  }
  const Var merged = heads == 1 ? outs.front() : concat_cols(outs);
  return block.attn_out.apply(merged);
}

Var transformer_block(const Var& z, const BlockWeights& block, std::size_t heads, AttentionVariant variant) {
  const Var normed = layer_norm(z, block.norm1_gamma, block.norm1_beta);
  const Var attended = variant == AttentionVariant::Galerkin ? galerkin_attention(normed, block, heads)
                                                             : scaled_dot_product_attention(normed, block, heads);
  const Var z_hat = add(attended, z);
  const Var ffn = block.ffn_out.apply(gelu(block.ffn_in.apply(layer_norm(z_hat, block.norm2_gamma, block.norm2_beta))));
  return add(ffn, z_hat);
}

Var latent_forward(const Var& z0, std::span<const BlockWeights> blocks, std::size_t heads, AttentionVariant variant) {
  Var z = z0;
  for (const BlockWeights& b : blocks) z = transformer_block(z, b, heads, variant);
  return z;
}

Var decoder_attention(const AttentionProjector& projector, const Var& p) {
  return softmax_last_axis(projector.apply(p));
}

Var phca_decode(const BoundModel& model, const Tensor& query_positions, const Var& z) {
  if (query_positions.rank() != 2 || query_positions.dim(1) != model.config.pos_dim) {
    throw ConfigError("query positions " + shape_string(query_positions.shape()) + " do not have " +
                      std::to_string(model.config.pos_dim) + " columns");
  }
  Tape& tape = z.tape();
  const Var p = model.trunk.apply(tape.constant(query_positions));
  const Var weights = decoder_attention(model.phca.decoder_projector, p);
  const Var u = matmul(weights, matmul(z, model.phca.decoder_value));
  return model.head.apply(u);
}

Var lno_forward(const BoundModel& model, const SampleSequence& input, const Tensor& query_positions) {
  const Embedding emb = embed_inputs(model, input);
  const Var z0 = phca_encode(emb.positions, emb.values, model.phca.encoder_projector, model.phca.encoder_value);
  const Var z = latent_forward(z0, model.blocks, model.config.heads, model.config.attention);
  return phca_decode(model, query_positions, z);
}

std::vector<Tensor> collect_gradients(const Tape& tape, const BoundModel& model) {
  std::vector<Tensor> grads;
  grads.reserve(model.params.size());
  for (const Var& p : model.params) grads.push_back(tape.grad(p));
  return grads;
}

}  // namespace lno
