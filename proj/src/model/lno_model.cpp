#include <cmath>
#include <unordered_map>

#include "lno/error.hpp"
#include "lno/model.hpp"
#include "lno/rng.hpp"

namespace lno {

namespace {

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string block_prefix(std::size_t l) { return "blocks." + std::to_string(l) + "."; }

}  // namespace

std::string to_string(AttentionVariant v) {
  return v == AttentionVariant::Galerkin ? "galerkin" : "scaled-dot-product";
}

AttentionVariant parse_attention_variant(const std::string& s) {
  if (s == "scaled-dot-product" || s == "sdpa") return AttentionVariant::ScaledDotProduct;
  if (s == "galerkin") return AttentionVariant::Galerkin;
  throw ConfigError("unknown attention variant '" + s + "' (expected scaled-dot-product or galerkin)");
}

void ModelConfig::validate() const {
  if (pos_dim == 0) throw ConfigError("model.pos_dim must be positive");
  if (out_dim == 0) throw ConfigError("model.out_dim must be positive");
  if (width == 0) throw ConfigError("model.width must be positive");
  if (latent_size == 0) throw ConfigError("model.latent_size must be positive");
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("model.width (" + std::to_string(width) + ") must be divisible by model.heads (" +
                      std::to_string(heads) + ")");
  }
}

void ModelConfig::write(KvConfig& kv, const std::string& prefix) const {
  kv.set(prefix + "pos_dim", static_cast<std::uint64_t>(pos_dim));
  kv.set(prefix + "value_dim", static_cast<std::uint64_t>(value_dim));
  kv.set(prefix + "out_dim", static_cast<std::uint64_t>(out_dim));
  kv.set(prefix + "width", static_cast<std::uint64_t>(width));
  kv.set(prefix + "latent_size", static_cast<std::uint64_t>(latent_size));
  kv.set(prefix + "depth", static_cast<std::uint64_t>(depth));
  kv.set(prefix + "heads", static_cast<std::uint64_t>(heads));
  kv.set(prefix + "attention", to_string(attention));
  kv.set(prefix + "share_projector", share_projector);
  kv.set(prefix + "seed", seed);
}

ModelConfig ModelConfig::read(const KvConfig& kv, const std::string& prefix) {
  ModelConfig c;
  c.pos_dim = kv.get_uint(prefix + "pos_dim", c.pos_dim);
  c.value_dim = kv.get_uint(prefix + "value_dim", c.value_dim);
  c.out_dim = kv.get_uint(prefix + "out_dim", c.out_dim);
  c.width = kv.get_uint(prefix + "width", c.width);
  c.latent_size = kv.get_uint(prefix + "latent_size", c.latent_size);
  c.depth = kv.get_uint(prefix + "depth", c.depth);
  c.heads = kv.get_uint(prefix + "heads", c.heads);
  c.attention = parse_attention_variant(kv.get_string(prefix + "attention", to_string(c.attention)));
  c.share_projector = kv.get_bool(prefix + "share_projector", c.share_projector);
  c.seed = kv.get_uint(prefix + "seed", c.seed);
  c.validate();
  return c;
}

std::size_t attention_projector_size(const ModelConfig& c) {
  return c.width * c.width + c.width + c.latent_size * c.width;
}

std::size_t transformer_block_size(const ModelConfig& c) {
  const std::size_t d = c.width;
  std::size_t n = 2 * d                // norm1
                  + 3 * d * d          // query, key, value
                  + d * d + d          // output projection
                  + 2 * d              // norm2
                  + d * 4 * d + 4 * d  // ffn in
                  + 4 * d * d + d;     // ffn out
  if (c.attention == AttentionVariant::Galerkin) n += 4 * (d / c.heads);
  return n;
}

void LnoModel::add_tensor(const std::string& name, Shape shape, const std::string& init,
                          const std::string& init_name) {
  Tensor t(std::move(shape), 0.0);
  Rng rng(config_.seed, name_hash(init_name.empty() ? name : init_name));
  if (init == "uniform") {
    const double bound = 1.0 / std::sqrt(static_cast<double>(t.dim(0)));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
  } else if (init == "latent") {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(config_.width));
    for (double& v : t.data()) v = stddev * rng.normal();
  } else if (init == "ones") {
    t.fill(1.0);
  }
  params_.push_back({name, std::move(t)});
}

void LnoModel::add_linear(const std::string& name, std::size_t in, std::size_t out, bool bias,
                          const std::string& init_name) {
  const std::string base = init_name.empty() ? name : init_name;
  add_tensor(name + ".weight", {in, out}, "uniform", base + ".weight");
  if (bias) add_tensor(name + ".bias", {out}, "zeros", base + ".bias");
}

LnoModel::LnoModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const std::size_t d = config_.width;
  const std::size_t m = config_.latent_size;
  const std::size_t dh = d / config_.heads;

  add_linear("trunk.hidden", config_.pos_dim, d, true);
  add_linear("trunk.out", d, d, true);
  add_linear("branch.hidden", config_.pos_dim + config_.value_dim, d, true);
  add_linear("branch.out", d, d, true);
  add_linear("phca.projector.hidden", d, d, true);
  add_tensor("phca.projector.latent", {m, d}, "latent");
  if (!config_.share_projector) {
    // The decoder copy starts from the encoder's values and diverges under training.
    add_linear("phca.decoder_projector.hidden", d, d, true, "phca.projector.hidden");
    add_tensor("phca.decoder_projector.latent", {m, d}, "latent", "phca.projector.latent");
  }
  add_tensor("phca.encoder_value", {d, d}, "uniform");
  add_tensor("phca.decoder_value", {d, d}, "uniform");
  for (std::size_t l = 0; l < config_.depth; ++l) {
    const std::string p = block_prefix(l);
    add_tensor(p + "norm1.gamma", {d}, "ones");
    add_tensor(p + "norm1.beta", {d}, "zeros");
    add_tensor(p + "attn.query", {d, d}, "uniform");
    add_tensor(p + "attn.key", {d, d}, "uniform");
    add_tensor(p + "attn.value", {d, d}, "uniform");
    add_linear(p + "attn.out", d, d, true);
    if (config_.attention == AttentionVariant::Galerkin) {
      add_tensor(p + "attn.key_norm.gamma", {dh}, "ones");
      add_tensor(p + "attn.key_norm.beta", {dh}, "zeros");
      add_tensor(p + "attn.value_norm.gamma", {dh}, "ones");
      add_tensor(p + "attn.value_norm.beta", {dh}, "zeros");
    }
    add_tensor(p + "norm2.gamma", {d}, "ones");
    add_tensor(p + "norm2.beta", {d}, "zeros");
    add_linear(p + "ffn.in", d, 4 * d, true);
    add_linear(p + "ffn.out", 4 * d, d, true);
  }
  add_linear("head.hidden", d, d, true);
  add_linear("head.out", d, config_.out_dim, true);
}

Tensor& LnoModel::parameter(const std::string& name) {
  for (NamedTensor& p : params_)
    if (p.name == name) return p.value;
  throw ContractError("model has no parameter '" + name + "'");
}

const Tensor& LnoModel::parameter(const std::string& name) const {
  return const_cast<LnoModel*>(this)->parameter(name);
}

BoundModel LnoModel::bind(Tape& tape, bool trainable) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const NamedTensor& p : params_) vars.push_back(trainable ? tape.parameter(p.value) : tape.constant(p.value));
  return bind_vars(std::move(vars));
}

BoundModel LnoModel::bind_vars(std::vector<Var> vars) const {
  if (vars.size() != params_.size()) {
    throw ContractError("bind_vars got " + std::to_string(vars.size()) + " tensors, model has " +
                        std::to_string(params_.size()));
  }
  BoundModel bound;
  bound.config = config_;
  std::unordered_map<std::string, Var> by_name;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (vars[i].shape() != params_[i].value.shape()) {
      throw DimensionError("parameter '" + params_[i].name + "' bound with shape " + shape_string(vars[i].shape()));
    }
    by_name.emplace(params_[i].name, vars[i]);
  }
  bound.params = std::move(vars);
  auto get = [&](const std::string& name) { return by_name.at(name); };
  auto linear = [&](const std::string& name) {
    Linear l{get(name + ".weight"), Var{}};
    if (auto it = by_name.find(name + ".bias"); it != by_name.end()) l.bias = it->second;
    return l;
  };
  auto mlp = [&](const std::string& name) { return Mlp{linear(name + ".hidden"), linear(name + ".out")}; };

  bound.trunk = mlp("trunk");
  bound.branch = mlp("branch");
  bound.phca.encoder_projector = AttentionProjector{linear("phca.projector.hidden"), get("phca.projector.latent")};
  bound.phca.decoder_projector =
      config_.share_projector
          ? bound.phca.encoder_projector
          : AttentionProjector{linear("phca.decoder_projector.hidden"), get("phca.decoder_projector.latent")};
  bound.phca.encoder_value = get("phca.encoder_value");
  bound.phca.decoder_value = get("phca.decoder_value");
  for (std::size_t l = 0; l < config_.depth; ++l) {
    const std::string p = block_prefix(l);
    BlockWeights b;
    b.norm1_gamma = get(p + "norm1.gamma");
    b.norm1_beta = get(p + "norm1.beta");
    b.query = get(p + "attn.query");
    b.key = get(p + "attn.key");
    b.value = get(p + "attn.value");
    b.attn_out = linear(p + "attn.out");
    if (config_.attention == AttentionVariant::Galerkin) {
      b.key_norm_gamma = get(p + "attn.key_norm.gamma");
      b.key_norm_beta = get(p + "attn.key_norm.beta");
      b.value_norm_gamma = get(p + "attn.value_norm.gamma");
      b.value_norm_beta = get(p + "attn.value_norm.beta");
    }
    b.norm2_gamma = get(p + "norm2.gamma");
    b.norm2_beta = get(p + "norm2.beta");
    b.ffn_in = linear(p + "ffn.in");
    b.ffn_out = linear(p + "ffn.out");
    bound.blocks.push_back(b);
  }
  bound.head = mlp("head");
  return bound;
}

Tensor LnoModel::predict(const SampleSequence& input, const Tensor& query_positions) const {
  Tape tape;
  const BoundModel bound = bind(tape, false);
  return lno_forward(bound, input, query_positions).value();
}

std::size_t LnoModel::param_count() const {
  std::size_t n = 0;
  for (const NamedTensor& p : params_) n += p.value.numel();
  return n;
}

std::size_t param_count(const LnoModel& model) { return model.param_count(); }

}  // namespace lno
