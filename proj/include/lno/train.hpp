#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "lno/autodiff.hpp"
#include "lno/kv_config.hpp"
#include "lno/model.hpp"

namespace lno {

// ---------------------------------------------------------------------------
// Metrics. Each takes one sample; batch values are means over samples.

/// ||pred - truth||_2 / ||truth||_2 over all elements. MetricError if truth is zero.
double relative_l2(const Tensor& pred, const Tensor& truth);
/// sum |pred - truth| / sum |truth|. MetricError if truth is zero.
double relative_mae(const Tensor& pred, const Tensor& truth);
double mse(const Tensor& pred, const Tensor& truth);

Var relative_l2_loss(const Var& pred, const Tensor& truth);
Var mse_loss(const Var& pred, const Tensor& truth);

enum class MetricKind { RelativeL2, RelativeMae, Mse };
std::string to_string(MetricKind k);
MetricKind parse_metric(const std::string& s);
double evaluate_metric(MetricKind kind, const Tensor& pred, const Tensor& truth);

// ---------------------------------------------------------------------------
// Optimizer and schedules.

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const std::vector<NamedTensor>& params);
  bool operator==(const AdamState&) const = default;
};

/// Decoupled weight decay (w -= lr * wd * w), then the bias-corrected Adam update.
void adamw_step(std::vector<NamedTensor>& params, const std::vector<Tensor>& grads, AdamState& state, double lr,
                const AdamWConfig& config);

/// Cosine warmup from max_lr / div_factor to max_lr over floor(pct_start * total)
/// steps, then cosine annealing that reaches max_lr / final_div_factor at the last step.
double onecycle_lr(std::size_t step, std::size_t total_steps, double max_lr, double pct_start = 0.3,
                   double div_factor = 25.0, double final_div_factor = 1e4);
double step_lr(std::size_t epoch, double base_lr, std::size_t step_size = 100, double gamma = 0.5);

// ---------------------------------------------------------------------------
// Training configuration.

enum class LossKind { RelativeL2, Mse };
enum class SchedulerKind { OneCycle, Step };
std::string to_string(LossKind k);
std::string to_string(SchedulerKind k);
LossKind parse_loss(const std::string& s);
SchedulerKind parse_scheduler(const std::string& s);

struct TrainConfig {
  std::size_t depth = 4;
  std::size_t width = 128;
  std::size_t latent_size = 256;
  std::size_t heads = 8;
  std::size_t batch_size = 4;
  std::size_t epochs = 500;
  LossKind loss = LossKind::RelativeL2;
  std::string optimizer = "adamw";
  SchedulerKind scheduler = SchedulerKind::OneCycle;
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::size_t step_size = 100;  // StepLR interval in epochs
  double step_gamma = 0.5;
  MetricKind val_metric = MetricKind::RelativeL2;
  std::uint64_t seed = 0;

  /// Forward (Darcy) defaults: L=4, D=128, M=256, 8 heads, batch 4, 500 epochs, rL2, OneCycle.
  static TrainConfig forward_defaults();
  /// Inverse (completer, propagator) defaults: L=4, D=96, M=256, MSE, StepLR.
  static TrainConfig inverse_defaults();

  void validate() const;
  void write(KvConfig& kv, const std::string& prefix = "train.") const;
  /// Keys missing from `kv` keep the values of `base`.
  static TrainConfig read(const KvConfig& kv, const TrainConfig& base, const std::string& prefix = "train.");
  /// Copies depth, width, latent size, heads and seed into a model config.
  void apply_to(ModelConfig& model) const;

  bool operator==(const TrainConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Training loop.

/// One supervised example: observed samples, query positions and targets.
struct Example {
  SampleSequence input;
  Tensor query;   // N_out x d_pos
  Tensor target;  // N_out x n_out
};

/// Indexed examples; `get(i, epoch)` may vary with the epoch (augmentation).
struct ExampleSet {
  std::size_t size = 0;
  std::function<Example(std::size_t index, std::size_t epoch)> get;

  static ExampleSet from_vector(std::vector<Example> examples);
};

/// Splits off the last ceil(fraction * size) examples for validation.
std::pair<ExampleSet, ExampleSet> split_validation(const ExampleSet& all, double fraction = 0.1);

struct HistoryRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  double lr = 0.0;
  bool operator==(const HistoryRow&) const = default;
};

std::string history_csv(const std::vector<HistoryRow>& history);

/// Everything besides the model parameters needed to resume a run.
struct TrainState {
  AdamState adam;
  std::size_t epoch = 0;           // epochs completed
  std::size_t batch_in_epoch = 0;  // batches completed in the current epoch
  double epoch_loss_sum = 0.0;
  std::size_t epoch_samples = 0;
  double last_lr = 0.0;
  double best_metric = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::vector<NamedTensor> best_params;
  std::vector<HistoryRow> history;

  bool operator==(const TrainState&) const = default;
};

class Trainer {
 public:
  Trainer(LnoModel model, TrainConfig config, ExampleSet train, ExampleSet val = {});

  /// Runs one optimizer step on the next mini-batch, finishing the epoch
  /// (validation, history, best-parameter retention) when it was the last batch.
  void step();
  void run_epoch();
  /// Trains until `config.epochs` epochs are complete.
  void fit(const std::function<void(const HistoryRow&)>& on_epoch = {});

  bool finished() const { return state_.epoch >= config_.epochs; }
  std::size_t batches_per_epoch() const;
  std::size_t total_steps() const { return batches_per_epoch() * config_.epochs; }
  double current_lr() const;

  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return config_; }
  const LnoModel& model() const { return model_; }
  /// Model holding the best parameters seen so far.
  LnoModel best_model() const;

  void save_checkpoint(const std::string& path) const;
  /// Replaces the training state with a checkpoint's. The checkpoint must
  /// match this trainer's model and training configs; on any error the
  /// current state is left untouched.
  void load_checkpoint(const std::string& path);

 private:
  void finish_epoch();
  std::vector<std::size_t> epoch_order(std::size_t epoch) const;

  LnoModel model_;
  TrainConfig config_;
  ExampleSet train_;
  ExampleSet val_;
  AdamWConfig adam_config_;
  TrainState state_;
};

/// Mean metric of `model` over the examples of `set` at epoch 0.
double evaluate_model(const LnoModel& model, const ExampleSet& set, MetricKind metric);

}  // namespace lno
