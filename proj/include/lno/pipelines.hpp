#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lno/data.hpp"
#include "lno/train.hpp"

namespace lno::pipelines {

// ---------------------------------------------------------------------------
// Value scaling and models that work on raw (unscaled) data.

/// y = (x - shift) / scale.
struct ValueScaler {
  double shift = 0.0;
  double scale = 1.0;

  Tensor apply(const Tensor& x) const;
  Tensor invert(const Tensor& y) const;
  /// Mean / standard deviation of every value in `columns`.
  static ValueScaler standardize(const std::vector<const Tensor*>& columns);
  /// Zero shift, root-mean-square scale, so relative metrics are unaffected.
  static ValueScaler rms(const std::vector<const Tensor*>& columns);
  bool operator==(const ValueScaler&) const = default;
};

/// An LNO together with its input/output scalers and free-form metadata
/// (task, mask settings) stored in the checkpoint config record.
/// `position` is applied to every coordinate of input and query positions.
struct ScaledModel {
  LnoModel model;
  ValueScaler input;
  ValueScaler output;
  KvConfig meta;
  ValueScaler position{};

  Tensor predict(const SampleSequence& raw_input, const Tensor& query) const;
  void save(const std::string& path) const;
  static ScaledModel load(const std::string& path);
};

/// Mean metric of raw-space predictions over the examples of `set` at epoch 0.
double evaluate_scaled(const ScaledModel& model, const ExampleSet& set, MetricKind metric);

// ---------------------------------------------------------------------------
// Example builders (raw values).

/// Input sequence -> output positions and values of each pair.
std::vector<Example> forward_examples(const data::PdeDataset& ds);

/// Completer: masked observations inside the time window -> dense window.
/// The mask seed of example i is derived from (mask.seed, i) and, when
/// `vary_by_epoch` is set, also from the epoch. `ds` must outlive the set.
ExampleSet completer_examples(const data::PdeDataset& ds, const data::ObservationMask& mask, bool vary_by_epoch);

/// Propagator: dense window -> full space-time grid.
std::vector<Example> propagator_examples(const data::PdeDataset& ds, double t_lo, double t_hi);

/// Applies the scalers to inputs and targets.
struct Scalers {
  ValueScaler position;
  ValueScaler input;
  ValueScaler output;
};

ExampleSet scale_examples(const ExampleSet& raw, const Scalers& scalers);

/// Positions (input and query) and input values are standardized, targets RMS-scaled.
Scalers fit_scalers(const ExampleSet& raw);

// ---------------------------------------------------------------------------
// Baselines.

/// Each query takes the value of the closest observation (Euclidean distance
/// over the position columns; ties resolved by the lower index).
Tensor nearest_neighbor_fill(const SampleSequence& observed, const Tensor& query);

/// Per-position mean of the training targets, on the training grid.
Tensor mean_field(const data::PdeDataset& train);
/// Mean metric of the training mean field against each test output. When
/// the test grid differs, the mean field is resampled bilinearly (square grids).
double mean_predictor_metric(const data::PdeDataset& train, const data::PdeDataset& test, MetricKind metric);
/// Mean relative MAE of nearest-neighbor filling over a completer set.
double nearest_neighbor_metric(const ExampleSet& set);
/// Bilinear resampling of a field on an s x s unit-square grid at (x, y) positions.
Tensor bilinear_sample(const Tensor& field, const Tensor& positions);

// ---------------------------------------------------------------------------
// Run bookkeeping.

/// Key=value manifest: resolved config, input and output content hashes.
class Manifest {
 public:
  Manifest(std::string command, const KvConfig& resolved);
  void add_input(const std::string& name, const std::string& path);
  void add_output(const std::string& name, const std::string& path);
  void set(const std::string& key, const std::string& value) { kv_.set(key, value); }
  /// Writes manifest.txt and config.resolved into `dir`.
  void write(const std::string& dir) const;
  const KvConfig& entries() const { return kv_; }

 private:
  KvConfig kv_;
  KvConfig resolved_;
};

// ---------------------------------------------------------------------------
// Commands. Each reads the resolved config, writes artifacts under `out_dir`
// and prints a short deterministic report to `log`.

struct CommandContext {
  KvConfig config;
  std::string out_dir;
  std::ostream* log = nullptr;
};

void cmd_generate(const CommandContext& ctx);
void cmd_train(const CommandContext& ctx);
void cmd_eval(const CommandContext& ctx);
void cmd_sweep(const CommandContext& ctx);
void cmd_bench(const CommandContext& ctx);
/// Renders each CSV in `inputs` to `<out_dir>/<stem>.svg`.
void cmd_plot(const CommandContext& ctx, const std::vector<std::string>& inputs);

/// Entry point shared by the `lno` binary and the tests. Returns the exit code:
/// 0 on success, 1 on contract errors, 2 on I/O errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// ---------------------------------------------------------------------------
// Experiment building blocks used by the commands and the acceptance suite.

/// Training settings for a task when the config does not override them.
TrainConfig desk_defaults(const std::string& task);

/// Reads `train.*` keys over the task defaults; `seed` seeds the model and the shuffles.
TrainConfig resolve_train_config(const KvConfig& config, const std::string& task);

data::ObservationMask resolve_mask(const KvConfig& config);

struct TrainOutcome {
  ScaledModel model;
  std::vector<HistoryRow> history;
  double test_metric = 0.0;
  double baseline_metric = 0.0;
};

/// Trains on `train` (validating on the last 10%) and evaluates the best
/// parameters on `test`. Forward tasks report relative L2 against the
/// mean-predictor baseline.
TrainOutcome train_forward(const data::PdeDataset& train, const data::PdeDataset& test, const TrainConfig& config);

/// Completer at the observation mask `mask`; reports relative MAE against
/// nearest-neighbor filling of the same observations.
TrainOutcome train_completer(const data::PdeDataset& train, const data::PdeDataset& test, const TrainConfig& config,
                             const data::ObservationMask& mask, bool resample_masks);

/// Propagator from the dense window [t_lo, t_hi] to the full grid.
TrainOutcome train_propagator(const data::PdeDataset& train, const data::PdeDataset& test, const TrainConfig& config,
                              double t_lo, double t_hi);

struct PropagatorScores {
  std::string source;
  double rel_mae = 0.0;     // whole space-time grid
  double rel_mae_t0 = 0.0;  // initial-time row
  double rel_mae_t1 = 0.0;  // final-time row
};

/// Evaluates one propagator with window inputs taken from the ground truth
/// (`completer == nullptr`) or reconstructed by a completer.
PropagatorScores evaluate_propagator(const ScaledModel& propagator, const data::PdeDataset& test,
                                     const ScaledModel* completer, const std::string& source);

// ---------------------------------------------------------------------------
// Efficiency benchmark.

struct BenchRow {
  std::size_t n = 0, m = 0, l = 0;
  double t_encode = 0.0, t_latent = 0.0, t_decode = 0.0, t_total = 0.0;  // seconds, medians
};

/// Median-of-`repetitions` forward timings split into encode, latent and decode phases.
BenchRow time_forward(std::size_t n, std::size_t m, std::size_t l, std::size_t width, std::size_t repetitions,
                      std::uint64_t seed);
std::string bench_csv(const std::vector<BenchRow>& rows);

// ---------------------------------------------------------------------------
// Plotting.

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Line chart with one polyline per series. Throws ContractError on empty series.
std::string render_line_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                            const std::vector<Series>& series);
/// Heatmap of values on the (x, y) lattice.
std::string render_heatmap_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                               const std::vector<double>& x, const std::vector<double>& y,
                               const std::vector<double>& values);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  bool numeric(std::size_t col) const;
  std::vector<double> numbers(std::size_t col) const;
};

/// Comma-separated values with a header row. ParseError names the line.
CsvTable parse_csv(const std::string& text);

}  // namespace lno::pipelines
