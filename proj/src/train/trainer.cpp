#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>

#include "lno/error.hpp"
#include "lno/rng.hpp"
#include "lno/train.hpp"

namespace lno {

std::string to_string(LossKind k) { return k == LossKind::Mse ? "mse" : "relative-l2"; }
std::string to_string(SchedulerKind k) { return k == SchedulerKind::Step ? "step" : "onecycle"; }

LossKind parse_loss(const std::string& s) {
  if (s == "relative-l2" || s == "rl2") return LossKind::RelativeL2;
  if (s == "mse") return LossKind::Mse;
  throw ConfigError("unknown loss '" + s + "' (expected relative-l2 or mse)");
}

SchedulerKind parse_scheduler(const std::string& s) {
  if (s == "onecycle") return SchedulerKind::OneCycle;
  if (s == "step") return SchedulerKind::Step;
  throw ConfigError("unknown scheduler '" + s + "' (expected onecycle or step)");
}

TrainConfig TrainConfig::forward_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::inverse_defaults() {
  TrainConfig c;
  c.width = 96;
  c.loss = LossKind::Mse;
  c.scheduler = SchedulerKind::Step;
  c.val_metric = MetricKind::RelativeMae;
  return c;
}

void TrainConfig::validate() const {
  if (width == 0 || latent_size == 0 || heads == 0) throw ConfigError("train width, latent size and heads must be positive");
  if (width % heads != 0) {
    throw ConfigError("train.width (" + std::to_string(width) + ") must be divisible by train.heads (" +
                      std::to_string(heads) + ")");
  }
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (optimizer != "adamw") throw ConfigError("unknown optimizer '" + optimizer + "' (only adamw is available)");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be a finite non-negative number");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
  if (step_size == 0) throw ConfigError("train.step_size must be positive");
}

void TrainConfig::write(KvConfig& kv, const std::string& prefix) const {
  kv.set(prefix + "depth", static_cast<std::uint64_t>(depth));
  kv.set(prefix + "width", static_cast<std::uint64_t>(width));
  kv.set(prefix + "latent_size", static_cast<std::uint64_t>(latent_size));
  kv.set(prefix + "heads", static_cast<std::uint64_t>(heads));
  kv.set(prefix + "batch_size", static_cast<std::uint64_t>(batch_size));
  kv.set(prefix + "epochs", static_cast<std::uint64_t>(epochs));
  kv.set(prefix + "loss", to_string(loss));
  kv.set(prefix + "optimizer", optimizer);
  kv.set(prefix + "scheduler", to_string(scheduler));
  kv.set(prefix + "lr", lr);
  kv.set(prefix + "weight_decay", weight_decay);
  kv.set(prefix + "step_size", static_cast<std::uint64_t>(step_size));
  kv.set(prefix + "step_gamma", step_gamma);
  kv.set(prefix + "val_metric", to_string(val_metric));
  kv.set(prefix + "seed", seed);
}

TrainConfig TrainConfig::read(const KvConfig& kv, const TrainConfig& base, const std::string& prefix) {
  TrainConfig c = base;
  c.depth = kv.get_uint(prefix + "depth", c.depth);
  c.width = kv.get_uint(prefix + "width", c.width);
  c.latent_size = kv.get_uint(prefix + "latent_size", c.latent_size);
  c.heads = kv.get_uint(prefix + "heads", c.heads);
  c.batch_size = kv.get_uint(prefix + "batch_size", c.batch_size);
  c.epochs = kv.get_uint(prefix + "epochs", c.epochs);
  c.loss = parse_loss(kv.get_string(prefix + "loss", to_string(c.loss)));
  c.optimizer = kv.get_string(prefix + "optimizer", c.optimizer);
  c.scheduler = parse_scheduler(kv.get_string(prefix + "scheduler", to_string(c.scheduler)));
  c.lr = kv.get_double(prefix + "lr", c.lr);
  c.weight_decay = kv.get_double(prefix + "weight_decay", c.weight_decay);
  c.step_size = kv.get_uint(prefix + "step_size", c.step_size);
  c.step_gamma = kv.get_double(prefix + "step_gamma", c.step_gamma);
  c.val_metric = parse_metric(kv.get_string(prefix + "val_metric", to_string(c.val_metric)));
  c.seed = kv.get_uint(prefix + "seed", c.seed);
  c.validate();
  return c;
}

void TrainConfig::apply_to(ModelConfig& model) const {
  model.depth = depth;
  model.width = width;
  model.latent_size = latent_size;
  model.heads = heads;
  model.seed = seed;
}

ExampleSet ExampleSet::from_vector(std::vector<Example> examples) {
  auto shared = std::make_shared<const std::vector<Example>>(std::move(examples));
  return ExampleSet{shared->size(), [shared](std::size_t i, std::size_t) { return (*shared)[i]; }};
}

std::pair<ExampleSet, ExampleSet> split_validation(const ExampleSet& all, double fraction) {
  if (!(fraction >= 0.0) || !(fraction < 1.0)) throw ConfigError("validation fraction must be in [0, 1)");
  const auto val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(all.size)));
  if (val >= all.size) throw ConfigError("validation split leaves no training examples");
  const std::size_t train = all.size - val;
  ExampleSet tr{train, all.get};
  ExampleSet va{val, [get = all.get, train](std::size_t i, std::size_t epoch) { return get(train + i, epoch); }};
  return {tr, va};
}

std::string history_csv(const std::vector<HistoryRow>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,val_metric,lr\n";
  for (const HistoryRow& r : history) {
    os << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_metric) << ','
       << format_double(r.lr) << '\n';
  }
  return os.str();
}

double evaluate_model(const LnoModel& model, const ExampleSet& set, MetricKind metric) {
  if (set.size == 0) throw ContractError("cannot evaluate on an empty example set");
  double total = 0.0;
  for (std::size_t i = 0; i < set.size; ++i) {
    const Example ex = set.get(i, 0);
    total += evaluate_metric(metric, model.predict(ex.input, ex.query), ex.target);
  }
  return total / static_cast<double>(set.size);
}

Trainer::Trainer(LnoModel model, TrainConfig config, ExampleSet train, ExampleSet val)
    : model_(std::move(model)), config_(std::move(config)), train_(std::move(train)), val_(std::move(val)) {
  config_.validate();
  if (train_.size == 0 || !train_.get) throw ContractError("training needs at least one example");
  adam_config_.weight_decay = config_.weight_decay;
  state_.adam = AdamState::zeros_like(model_.parameters());
}

std::size_t Trainer::batches_per_epoch() const { return (train_.size + config_.batch_size - 1) / config_.batch_size; }

double Trainer::current_lr() const {
  if (config_.scheduler == SchedulerKind::Step) {
    return step_lr(state_.epoch, config_.lr, config_.step_size, config_.step_gamma);
  }
  const std::size_t total = total_steps();
  return onecycle_lr(std::min<std::size_t>(state_.adam.step, total - 1), total, config_.lr);
}

std::vector<std::size_t> Trainer::epoch_order(std::size_t epoch) const {
  std::vector<std::size_t> order(train_.size);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(config_.seed, 0x5348554646ULL).split(epoch);
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

void Trainer::step() {
  if (finished()) throw ContractError("training already finished " + std::to_string(config_.epochs) + " epochs");
  const std::vector<std::size_t> order = epoch_order(state_.epoch);
  const std::size_t first = state_.batch_in_epoch * config_.batch_size;
  const std::size_t last = std::min(first + config_.batch_size, train_.size);
  // Accumulate in ascending sample index so the sum does not depend on the shuffle.
  std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(first),
                                 order.begin() + static_cast<std::ptrdiff_t>(last));
  std::sort(batch.begin(), batch.end());

  const double lr = current_lr();
  const std::vector<NamedTensor>& params = model_.parameters();
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const NamedTensor& p : params) grads.emplace_back(p.value.shape(), 0.0);

  const std::uint64_t step_no = state_.adam.step + 1;
  double loss_sum = 0.0;
  for (std::size_t idx : batch) {
    const Example ex = train_.get(idx, state_.epoch);
    Tape tape;
    const BoundModel bound = model_.bind(tape, true);
    const Var pred = lno_forward(bound, ex.input, ex.query);
    const Var loss = config_.loss == LossKind::Mse ? mse_loss(pred, ex.target) : relative_l2_loss(pred, ex.target);
    const double value = loss.value().item();
    if (!std::isfinite(value)) {
      throw TrainingError("non-finite loss at step " + std::to_string(step_no) + " (epoch " +
                          std::to_string(state_.epoch + 1) + ", sample " + std::to_string(idx) + ")");
    }
    tape.backward(loss);
    for (std::size_t p = 0; p < params.size(); ++p) {
      const Tensor g = tape.grad(bound.params[p]);
      Tensor& acc = grads[p];
      for (std::size_t i = 0; i < g.numel(); ++i) acc[i] += g[i];
    }
    loss_sum += value;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (Tensor& g : grads) {
    for (double& v : g.data()) v *= inv;
    if (!all_finite(g)) throw TrainingError("non-finite gradient at step " + std::to_string(step_no));
  }
  adamw_step(model_.parameters(), grads, state_.adam, lr, adam_config_);

  state_.last_lr = lr;
  state_.epoch_loss_sum += loss_sum;
  state_.epoch_samples += batch.size();
  if (++state_.batch_in_epoch == batches_per_epoch()) finish_epoch();
}

void Trainer::finish_epoch() {
  HistoryRow row;
  row.epoch = state_.epoch + 1;
  row.train_loss = state_.epoch_loss_sum / static_cast<double>(state_.epoch_samples);
  row.val_metric = val_.size > 0 ? evaluate_model(model_, val_, config_.val_metric) : row.train_loss;
  row.lr = state_.last_lr;
  state_.history.push_back(row);
  if (row.val_metric < state_.best_metric || state_.best_params.empty()) {
    state_.best_metric = row.val_metric;
    state_.best_epoch = row.epoch;
    state_.best_params = model_.parameters();
  }
  ++state_.epoch;
  state_.batch_in_epoch = 0;
  state_.epoch_loss_sum = 0.0;
  state_.epoch_samples = 0;
}

void Trainer::run_epoch() {
  const std::size_t epoch = state_.epoch;
  while (!finished() && state_.epoch == epoch) step();
}

void Trainer::fit(const std::function<void(const HistoryRow&)>& on_epoch) {
  while (!finished()) {
    run_epoch();
    if (on_epoch) on_epoch(state_.history.back());
  }
}

LnoModel Trainer::best_model() const {
  LnoModel m = model_;
  if (!state_.best_params.empty()) m.parameters() = state_.best_params;
  return m;
}

}  // namespace lno
