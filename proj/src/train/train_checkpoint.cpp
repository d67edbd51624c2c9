#include <cstdio>

#include "lno/error.hpp"
#include "lno/train.hpp"

namespace lno {

namespace {

constexpr std::uint64_t kTrainCheckpointVersion = 1;

std::string history_key(std::size_t i) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "state.history.%06zu", i);
  return buf;
}

}  // namespace

void Trainer::save_checkpoint(const std::string& path) const {
  KvConfig kv;
  model_.config().write(kv);
  config_.write(kv);
  kv.set("checkpoint.kind", "train");
  kv.set("checkpoint.version", kTrainCheckpointVersion);
  kv.set("state.adam_step", state_.adam.step);
  kv.set("state.epoch", static_cast<std::uint64_t>(state_.epoch));
  kv.set("state.batch_in_epoch", static_cast<std::uint64_t>(state_.batch_in_epoch));
  kv.set("state.epoch_loss_sum", state_.epoch_loss_sum);
  kv.set("state.epoch_samples", static_cast<std::uint64_t>(state_.epoch_samples));
  kv.set("state.last_lr", state_.last_lr);
  kv.set("state.best_metric", state_.best_metric);
  kv.set("state.best_epoch", static_cast<std::uint64_t>(state_.best_epoch));
  kv.set("state.has_best", !state_.best_params.empty());
  kv.set("state.history_size", static_cast<std::uint64_t>(state_.history.size()));
  for (std::size_t i = 0; i < state_.history.size(); ++i) {
    const HistoryRow& r = state_.history[i];
    kv.set(history_key(i), std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," +
                               format_double(r.val_metric) + "," + format_double(r.lr));
  }

  TensorArchive ar;
  ar.config_text = kv.serialize();
  const std::vector<NamedTensor>& params = model_.parameters();
  ar.tensors = params;
  for (std::size_t i = 0; i < params.size(); ++i) ar.tensors.push_back({"adam.m." + params[i].name, state_.adam.m[i]});
  for (std::size_t i = 0; i < params.size(); ++i) ar.tensors.push_back({"adam.v." + params[i].name, state_.adam.v[i]});
  for (const NamedTensor& b : state_.best_params) ar.tensors.push_back({"best." + b.name, b.value});
  write_archive(path, ar);
}

void Trainer::load_checkpoint(const std::string& path) {
  TensorArchive ar;
  try {
    ar = read_archive(path);
  } catch (const CheckpointError&) {
    throw;
  } catch (const FormatError& e) {
    throw CheckpointError(std::string("training checkpoint is unreadable: ") + e.what());
  }

  TrainState next;
  LnoModel model = model_;
  try {
    const KvConfig kv = KvConfig::parse(ar.config_text);
    if (kv.get_string("checkpoint.kind", "") != "train") throw CheckpointError("file is not a training checkpoint");
    const std::uint64_t version = kv.get_uint("checkpoint.version");
    if (version != kTrainCheckpointVersion) {
      throw CheckpointError("training checkpoint version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kTrainCheckpointVersion) + ")");
    }
    if (!(ModelConfig::read(kv) == model_.config())) throw CheckpointError("checkpoint model config differs from this run");
    if (!(TrainConfig::read(kv, config_) == config_)) throw CheckpointError("checkpoint training config differs from this run");

    model = LnoModel::from_archive(ar);
    const std::size_t n = model.parameters().size();
    const std::size_t expected = 3 * n + (kv.get_bool("state.has_best") ? n : 0);
    if (ar.tensors.size() != expected) {
      throw CheckpointError("training checkpoint holds " + std::to_string(ar.tensors.size()) + " tensors, expected " +
                            std::to_string(expected));
    }
    auto take = [&](std::size_t at, const std::string& prefix, std::size_t i) {
      const NamedTensor& t = ar.tensors[at];
      const NamedTensor& p = model.parameters()[i];
      if (t.name != prefix + p.name || t.value.shape() != p.value.shape()) {
        throw CheckpointError("checkpoint tensor " + std::to_string(at) + " is '" + t.name + "', expected '" + prefix +
                              p.name + "' " + shape_string(p.value.shape()));
      }
      return t.value;
    };
    for (std::size_t i = 0; i < n; ++i) next.adam.m.push_back(take(n + i, "adam.m.", i));
    for (std::size_t i = 0; i < n; ++i) next.adam.v.push_back(take(2 * n + i, "adam.v.", i));
    if (expected == 4 * n) {
      for (std::size_t i = 0; i < n; ++i) next.best_params.push_back({model.parameters()[i].name, take(3 * n + i, "best.", i)});
    }
    next.adam.step = kv.get_uint("state.adam_step");
    next.epoch = kv.get_uint("state.epoch");
    next.batch_in_epoch = kv.get_uint("state.batch_in_epoch");
    next.epoch_loss_sum = kv.get_double("state.epoch_loss_sum");
    next.epoch_samples = kv.get_uint("state.epoch_samples");
    next.last_lr = kv.get_double("state.last_lr");
    next.best_metric = kv.get_double("state.best_metric");
    next.best_epoch = kv.get_uint("state.best_epoch");
    const std::size_t rows = kv.get_uint("state.history_size");
    for (std::size_t i = 0; i < rows; ++i) {
      const std::string line = kv.get_string(history_key(i));
      std::vector<std::string> parts;
      std::size_t start = 0;
      for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1)
        parts.push_back(line.substr(start, pos - start));
      parts.push_back(line.substr(start));
      if (parts.size() != 4) throw CheckpointError("malformed history row '" + line + "'");
      next.history.push_back({parse_uint(parts[0]), parse_double(parts[1]), parse_double(parts[2]), parse_double(parts[3])});
    }
    if (next.batch_in_epoch >= batches_per_epoch() && next.batch_in_epoch != 0) {
      throw CheckpointError("checkpoint batch position is outside the epoch");
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(std::string("training checkpoint is invalid: ") + e.what());
  }
  model_ = std::move(model);
  state_ = std::move(next);
}

}  // namespace lno
