#include "lno/error.hpp"
#include "lno/model.hpp"

namespace lno {

TensorArchive LnoModel::to_archive() const {
  KvConfig kv;
  config_.write(kv);
  return TensorArchive{kv.serialize(), params_};
}

LnoModel LnoModel::from_archive(const TensorArchive& archive) {
  ModelConfig cfg;
  try {
    cfg = ModelConfig::read(KvConfig::parse(archive.config_text));
  } catch (const Error& e) {
    throw CheckpointError(std::string("checkpoint config record is invalid: ") + e.what());
  }
  LnoModel model(cfg);
  if (archive.tensors.size() < model.params_.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(archive.tensors.size()) + " tensors, model needs " +
                          std::to_string(model.params_.size()));
  }
  for (std::size_t i = 0; i < model.params_.size(); ++i) {
    const NamedTensor& src = archive.tensors[i];
    NamedTensor& dst = model.params_[i];
    if (src.name != dst.name || src.value.shape() != dst.value.shape()) {
      throw CheckpointError("checkpoint tensor " + std::to_string(i) + " is '" + src.name + "' " +
                            shape_string(src.value.shape()) + ", expected '" + dst.name + "' " +
                            shape_string(dst.value.shape()));
    }
    dst.value = src.value;
  }
  return model;
}

void LnoModel::save(const std::string& path) const { write_archive(path, to_archive()); }

LnoModel LnoModel::load(const std::string& path) { return from_archive(read_archive(path)); }

}  // namespace lno
