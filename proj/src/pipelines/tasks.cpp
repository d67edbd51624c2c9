#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>

#include "lno/binary_io.hpp"
#include "lno/error.hpp"
#include "lno/pipelines.hpp"

namespace lno::pipelines {

Tensor ValueScaler::apply(const Tensor& x) const {
  Tensor y = x;
  for (double& v : y.data()) v = (v - shift) / scale;
  return y;
}

Tensor ValueScaler::invert(const Tensor& y) const {
  Tensor x = y;
  for (double& v : x.data()) v = v * scale + shift;
  return x;
}

ValueScaler ValueScaler::standardize(const std::vector<const Tensor*>& columns) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const Tensor* t : columns)
    for (double v : t->data()) {
      sum += v;
      ++n;
    }
  if (n == 0) throw ContractError("cannot fit a scaler on no values");
  const double mean = sum / static_cast<double>(n);
  for (const Tensor* t : columns)
    for (double v : t->data()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(n));
  return ValueScaler{mean, sd > 0.0 ? sd : 1.0};
}

ValueScaler ValueScaler::rms(const std::vector<const Tensor*>& columns) {
  double sq = 0.0;
  std::size_t n = 0;
  for (const Tensor* t : columns)
    for (double v : t->data()) {
      sq += v * v;
      ++n;
    }
  if (n == 0) throw ContractError("cannot fit a scaler on no values");
  const double r = std::sqrt(sq / static_cast<double>(n));
  return ValueScaler{0.0, r > 0.0 ? r : 1.0};
}

// ---------------------------------------------------------------------------

Tensor ScaledModel::predict(const SampleSequence& raw_input, const Tensor& query) const {
  const SampleSequence scaled(position.apply(raw_input.positions), input.apply(raw_input.values));
  return output.invert(model.predict(scaled, position.apply(query)));
}

void ScaledModel::save(const std::string& path) const {
  TensorArchive archive = model.to_archive();
  KvConfig kv = KvConfig::parse(archive.config_text);
  kv.set("norm.position.shift", position.shift);
  kv.set("norm.position.scale", position.scale);
  kv.set("norm.input.shift", input.shift);
  kv.set("norm.input.scale", input.scale);
  kv.set("norm.output.shift", output.shift);
  kv.set("norm.output.scale", output.scale);
  for (const auto& [k, v] : meta.entries()) kv.set("meta." + k, v);
  archive.config_text = kv.serialize();
  write_archive(path, archive);
}

ScaledModel ScaledModel::load(const std::string& path) {
  const TensorArchive archive = read_archive(path);
  ScaledModel out{LnoModel::from_archive(archive), {}, {}, {}};
  try {
    const KvConfig kv = KvConfig::parse(archive.config_text);
    out.position = {kv.get_double("norm.position.shift"), kv.get_double("norm.position.scale")};
    out.input = {kv.get_double("norm.input.shift"), kv.get_double("norm.input.scale")};
    out.output = {kv.get_double("norm.output.shift"), kv.get_double("norm.output.scale")};
    for (const auto& [k, v] : kv.entries())
      if (k.rfind("meta.", 0) == 0) out.meta.set(k.substr(5), v);
  } catch (const Error& e) {
    throw CheckpointError("'" + path + "' is not a pipeline checkpoint: " + e.what());
  }
  if (!(out.position.scale > 0.0) || !(out.input.scale > 0.0) || !(out.output.scale > 0.0)) {
    throw CheckpointError("'" + path + "' has non-positive normalization scales");
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Example> forward_examples(const data::PdeDataset& ds) {
  std::vector<Example> out;
  out.reserve(ds.pairs.size());
  for (const data::SamplePair& p : ds.pairs) out.push_back({p.input, p.output.positions, p.output.values});
  return out;
}

namespace {

data::ObservationMask example_mask(const data::ObservationMask& base, std::size_t index, std::size_t epoch,
                                   bool vary_by_epoch) {
  data::ObservationMask m = base;
  m.seed = Rng(base.seed, index).split(vary_by_epoch ? epoch : 0).next_u64();
  return m;
}

void require_fields(const data::PdeDataset& ds) {
  if (ds.pairs.empty()) throw ContractError("dataset has no pairs");
  if (ds.grid.dims.size() != 2) throw ContractError("expected a space-time dataset with an nt x nx grid");
}

}  // namespace

ExampleSet completer_examples(const data::PdeDataset& ds, const data::ObservationMask& mask, bool vary_by_epoch) {
  require_fields(ds);
  const data::RowRange rows = data::window_rows(ds.grid.dims[0], mask.t_lo, mask.t_hi);
  // Check the mask once up front so errors surface before training starts.
  data::mask_indices(ds.grid.dims[0], ds.grid.dims[1], mask);
  ExampleSet set;
  set.size = ds.pairs.size();
  set.get = [&ds, mask, rows, vary_by_epoch](std::size_t i, std::size_t epoch) {
    const Tensor field = data::burgers_field(ds.pairs.at(i), ds.grid);
    SampleSequence window = data::field_rows(field, rows);
    SampleSequence observed = data::apply_mask(field, example_mask(mask, i, epoch, vary_by_epoch));
    return Example{std::move(observed), std::move(window.positions), std::move(window.values)};
  };
  return set;
}

std::vector<Example> propagator_examples(const data::PdeDataset& ds, double t_lo, double t_hi) {
  require_fields(ds);
  const std::size_t nt = ds.grid.dims[0];
  const data::RowRange rows = data::window_rows(nt, t_lo, t_hi);
  std::vector<Example> out;
  out.reserve(ds.pairs.size());
  for (const data::SamplePair& p : ds.pairs) {
    const Tensor field = data::burgers_field(p, ds.grid);
    SampleSequence full = data::field_rows(field, {0, nt - 1});
    out.push_back({data::field_rows(field, rows), std::move(full.positions), std::move(full.values)});
  }
  return out;
}

ExampleSet scale_examples(const ExampleSet& raw, const Scalers& scalers) {
  ExampleSet set;
  set.size = raw.size;
  set.get = [raw, scalers](std::size_t i, std::size_t epoch) {
    Example ex = raw.get(i, epoch);
    ex.input.positions = scalers.position.apply(ex.input.positions);
    ex.input.values = scalers.input.apply(ex.input.values);
    ex.query = scalers.position.apply(ex.query);
    ex.target = scalers.output.apply(ex.target);
    return ex;
  };
  return set;
}

Scalers fit_scalers(const ExampleSet& raw) {
  std::vector<Example> examples;
  examples.reserve(raw.size);
  for (std::size_t i = 0; i < raw.size; ++i) examples.push_back(raw.get(i, 0));
  std::vector<const Tensor*> positions, inputs, targets;
  for (const Example& e : examples) {
    positions.push_back(&e.input.positions);
    positions.push_back(&e.query);
    inputs.push_back(&e.input.values);
    targets.push_back(&e.target);
  }
  return {ValueScaler::standardize(positions), ValueScaler::standardize(inputs), ValueScaler::rms(targets)};
}

// ---------------------------------------------------------------------------

Tensor nearest_neighbor_fill(const SampleSequence& observed, const Tensor& query) {
  observed.validate();
  if (observed.size() == 0) throw ContractError("nearest-neighbor fill needs at least one observation");
  if (query.rank() != 2 || query.dim(1) != observed.pos_dim()) {
    throw DimensionError("query positions " + shape_string(query.shape()) + " do not match observations with d_pos " +
                         std::to_string(observed.pos_dim()));
  }
  const std::size_t d = observed.pos_dim(), n = observed.value_dim();
  Tensor out = Tensor::matrix(query.dim(0), n);
  for (std::size_t q = 0; q < query.dim(0); ++q) {
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < observed.size(); ++k) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = query(q, c) - observed.positions(k, c);
        d2 += diff * diff;
      }
      if (d2 < best_d2) {
        best_d2 = d2;
        best = k;
      }
    }
    for (std::size_t c = 0; c < n; ++c) out(q, c) = observed.values(best, c);
  }
  return out;
}

Tensor mean_field(const data::PdeDataset& train) {
  if (train.pairs.empty()) throw ContractError("mean field needs at least one training pair");
  Tensor mean = train.pairs.front().output.values;
  mean.fill(0.0);
  for (const data::SamplePair& p : train.pairs) {
    if (p.output.values.shape() != mean.shape()) throw DimensionError("training outputs do not share a grid");
    for (std::size_t k = 0; k < mean.numel(); ++k) mean[k] += p.output.values[k];
  }
  for (double& v : mean.data()) v /= static_cast<double>(train.pairs.size());
  return mean;
}

double evaluate_scaled(const ScaledModel& model, const ExampleSet& set, MetricKind metric) {
  if (set.size == 0) throw ContractError("evaluation set is empty");
  double total = 0.0;
  for (std::size_t i = 0; i < set.size; ++i) {
    const Example ex = set.get(i, 0);
    total += evaluate_metric(metric, model.predict(ex.input, ex.query), ex.target);
  }
  return total / static_cast<double>(set.size);
}

double mean_predictor_metric(const data::PdeDataset& train, const data::PdeDataset& test, MetricKind metric) {
  if (test.pairs.empty()) throw ContractError("evaluation set is empty");
  const Tensor mean = mean_field(train);
  const bool same_grid = test.grid == train.grid;
  if (!same_grid && (train.grid.dims.size() != 2 || train.grid.dims[0] != train.grid.dims[1])) {
    throw ContractError("mean predictor can only be resampled between square grids");
  }
  const Tensor square = same_grid ? mean : mean.reshaped({train.grid.dims[0], train.grid.dims[1]});
  double total = 0.0;
  for (const data::SamplePair& p : test.pairs) {
    const Tensor pred = same_grid ? mean : bilinear_sample(square, p.output.positions);
    total += evaluate_metric(metric, pred, p.output.values);
  }
  return total / static_cast<double>(test.pairs.size());
}

double nearest_neighbor_metric(const ExampleSet& set) {
  if (set.size == 0) throw ContractError("evaluation set is empty");
  double total = 0.0;
  for (std::size_t i = 0; i < set.size; ++i) {
    const Example ex = set.get(i, 0);
    total += relative_mae(nearest_neighbor_fill(ex.input, ex.query), ex.target);
  }
  return total / static_cast<double>(set.size);
}

Tensor bilinear_sample(const Tensor& field, const Tensor& positions) {
  if (field.rank() != 2 || field.dim(0) != field.dim(1) || field.dim(0) < 2) {
    throw DimensionError("bilinear sampling needs an s x s field, got " + shape_string(field.shape()));
  }
  if (positions.rank() != 2 || positions.dim(1) != 2) throw DimensionError("positions must be N x 2");
  const std::size_t s = field.dim(0);
  const double scale = static_cast<double>(s - 1);
  Tensor out = Tensor::matrix(positions.dim(0), 1);
  for (std::size_t k = 0; k < positions.dim(0); ++k) {
    const double gx = std::clamp(positions(k, 0), 0.0, 1.0) * scale;
    const double gy = std::clamp(positions(k, 1), 0.0, 1.0) * scale;
    const std::size_t j = std::min(static_cast<std::size_t>(gx), s - 2);
    const std::size_t i = std::min(static_cast<std::size_t>(gy), s - 2);
    const double fx = gx - static_cast<double>(j), fy = gy - static_cast<double>(i);
    out(k, 0) = (1 - fy) * ((1 - fx) * field(i, j) + fx * field(i, j + 1)) +
                fy * ((1 - fx) * field(i + 1, j) + fx * field(i + 1, j + 1));
  }
  return out;
}

// ---------------------------------------------------------------------------

Manifest::Manifest(std::string command, const KvConfig& resolved) : resolved_(resolved) {
  kv_.set("manifest.version", std::uint64_t{1});
  kv_.set("command", command);
  kv_.set("rerun", "lno " + command + " --config config.resolved --out <dir>");
  for (const auto& [k, v] : resolved.entries()) kv_.set("config." + k, v);
}

void Manifest::add_input(const std::string& name, const std::string& path) {
  kv_.set("input." + name + ".path", path);
  kv_.set("input." + name + ".hash", file_content_hash(path));
}

void Manifest::add_output(const std::string& name, const std::string& path) {
  kv_.set("output." + name + ".hash", file_content_hash(path));
}

void Manifest::write(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  kv_.save((std::filesystem::path(dir) / "manifest.txt").string());
  resolved_.save((std::filesystem::path(dir) / "config.resolved").string());
}

// ---------------------------------------------------------------------------

namespace {

struct Fitted {
  ScaledModel model;
  std::vector<HistoryRow> history;
};

Fitted fit(const ExampleSet& raw, const TrainConfig& config, const std::function<void(const HistoryRow&)>& on_epoch) {
  if (raw.size < 2) throw ContractError("training needs at least two examples");
  const Scalers scalers = fit_scalers(raw);
  const auto [train, val] = split_validation(scale_examples(raw, scalers), 0.1);
  const Example probe = raw.get(0, 0);
  ModelConfig mc;
  mc.pos_dim = probe.input.pos_dim();
  mc.value_dim = probe.input.value_dim();
  mc.out_dim = probe.target.dim(1);
  config.apply_to(mc);
  if (probe.query.dim(1) != mc.pos_dim) throw DimensionError("query positions and inputs use different d_pos");
  Trainer trainer(LnoModel(mc), config, train, val);
  trainer.fit(on_epoch);
  return Fitted{ScaledModel{trainer.best_model(), scalers.input, scalers.output, {}, scalers.position}, trainer.state().history};
}

void write_mask(KvConfig& kv, const data::ObservationMask& m) {
  kv.set("mask.mode", m.mode == data::ObservationMask::Mode::FixedGrid ? "grid" : "random");
  kv.set("mask.ratio", m.ratio);
  kv.set("mask.time_step", static_cast<std::uint64_t>(m.time_step));
  kv.set("mask.space_step", static_cast<std::uint64_t>(m.space_step));
  kv.set("mask.t_lo", m.t_lo);
  kv.set("mask.t_hi", m.t_hi);
  kv.set("mask.seed", m.seed);
}

}  // namespace

data::ObservationMask resolve_mask(const KvConfig& config) {
  data::ObservationMask m;
  const std::string mode = config.get_string("mask.mode", "random");
  if (mode == "random") {
    m.mode = data::ObservationMask::Mode::RandomRatio;
  } else if (mode == "grid") {
    m.mode = data::ObservationMask::Mode::FixedGrid;
  } else {
    throw ConfigError("mask.mode must be 'random' or 'grid', got '" + mode + "'");
  }
  m.ratio = config.get_double("mask.ratio", 0.1);
  m.time_step = config.get_uint("mask.time_step", 1);
  m.space_step = config.get_uint("mask.space_step", 1);
  m.t_lo = config.get_double("mask.t_lo", 0.25);
  m.t_hi = config.get_double("mask.t_hi", 0.75);
  m.seed = config.get_uint("mask.seed", config.get_uint("seed", 0));
  return m;
}

TrainOutcome train_forward(const data::PdeDataset& train, const data::PdeDataset& test, const TrainConfig& config) {
  const ExampleSet raw = ExampleSet::from_vector(forward_examples(train));
  Fitted f = fit(raw, config, {});
  f.model.meta.set("task", "forward");
  TrainOutcome out{std::move(f.model), std::move(f.history), 0.0, 0.0};
  out.test_metric = evaluate_scaled(out.model, ExampleSet::from_vector(forward_examples(test)), MetricKind::RelativeL2);
  out.baseline_metric = mean_predictor_metric(train, test, MetricKind::RelativeL2);
  return out;
}

TrainOutcome train_completer(const data::PdeDataset& train, const data::PdeDataset& test, const TrainConfig& config,
                             const data::ObservationMask& mask, bool resample_masks) {
  Fitted f = fit(completer_examples(train, mask, resample_masks), config, {});
  f.model.meta.set("task", "completer");
  write_mask(f.model.meta, mask);
  TrainOutcome out{std::move(f.model), std::move(f.history), 0.0, 0.0};
  const ExampleSet test_set = completer_examples(test, mask, false);
  out.test_metric = evaluate_scaled(out.model, test_set, MetricKind::RelativeMae);
  out.baseline_metric = nearest_neighbor_metric(test_set);
  return out;
}

TrainOutcome train_propagator(const data::PdeDataset& train, const data::PdeDataset& test, const TrainConfig& config,
                              double t_lo, double t_hi) {
  Fitted f = fit(ExampleSet::from_vector(propagator_examples(train, t_lo, t_hi)), config, {});
  f.model.meta.set("task", "propagator");
  f.model.meta.set("window.t_lo", t_lo);
  f.model.meta.set("window.t_hi", t_hi);
  TrainOutcome out{std::move(f.model), std::move(f.history), 0.0, 0.0};
  out.test_metric = evaluate_propagator(out.model, test, nullptr, "ground-truth").rel_mae;
  out.baseline_metric = mean_predictor_metric(train, test, MetricKind::RelativeMae);
  return out;
}

PropagatorScores evaluate_propagator(const ScaledModel& propagator, const data::PdeDataset& test,
                                     const ScaledModel* completer, const std::string& source) {
  require_fields(test);
  const double t_lo = propagator.meta.get_double("window.t_lo", 0.25);
  const double t_hi = propagator.meta.get_double("window.t_hi", 0.75);
  const std::size_t nt = test.grid.dims[0], nx = test.grid.dims[1];
  const data::RowRange rows = data::window_rows(nt, t_lo, t_hi);

  std::optional<ExampleSet> completer_set;
  if (completer != nullptr) {
    const data::ObservationMask mask = resolve_mask(completer->meta);
    const data::RowRange crows = data::window_rows(nt, mask.t_lo, mask.t_hi);
    if (crows.first != rows.first || crows.last != rows.last) {
      throw ContractError("completer window [" + format_double(mask.t_lo) + ", " + format_double(mask.t_hi) +
                          "] does not match the propagator window [" + format_double(t_lo) + ", " +
                          format_double(t_hi) + "]");
    }
    completer_set = completer_examples(test, mask, false);
  }

  PropagatorScores s{source, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < test.pairs.size(); ++i) {
    const Tensor field = data::burgers_field(test.pairs[i], test.grid);
    SampleSequence window = data::field_rows(field, rows);
    if (completer_set) {
      const Example ex = completer_set->get(i, 0);
      window.values = completer->predict(ex.input, window.positions);
    }
    const SampleSequence full = data::field_rows(field, {0, nt - 1});
    const Tensor pred = propagator.predict(window, full.positions);
    s.rel_mae += relative_mae(pred, full.values);
    auto row = [&](const Tensor& t, std::size_t r) {
      return Tensor::matrix(nx, 1, std::vector<double>(t.raw() + r * nx, t.raw() + (r + 1) * nx));
    };
    s.rel_mae_t0 += relative_mae(row(pred, 0), row(full.values, 0));
    s.rel_mae_t1 += relative_mae(row(pred, nt - 1), row(full.values, nt - 1));
  }
  const double n = static_cast<double>(test.pairs.size());
  s.rel_mae /= n;
  s.rel_mae_t0 /= n;
  s.rel_mae_t1 /= n;
  return s;
}

}  // namespace lno::pipelines
