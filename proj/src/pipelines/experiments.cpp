#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <ostream>
#include <set>
#include <streambuf>

#include "lno/binary_io.hpp"
#include "lno/error.hpp"
#include "lno/pipelines.hpp"

namespace lno::pipelines {

namespace fs = std::filesystem;

namespace {

class NullBuffer : public std::streambuf {
 protected:
  int overflow(int c) override { return c; }
};

std::ostream& log_of(const CommandContext& ctx) {
  static NullBuffer buffer;
  static std::ostream null_stream(&buffer);
  return ctx.log != nullptr ? *ctx.log : null_stream;
}

std::string path_in(const CommandContext& ctx, const std::string& name) {
  return (fs::path(ctx.out_dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) { write_file(path, std::span(text.data(), text.size())); }

std::vector<std::string> get_list(const KvConfig& kv, const std::string& key,
                                  const std::vector<std::string>& fallback = {}) {
  if (!kv.has(key)) return fallback;
  std::vector<std::string> out;
  const std::string text = kv.get_string(key);
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string canonical_task(const std::string& task) {
  if (task == "completer") return "inverse-stage1";
  if (task == "propagator") return "inverse-stage2";
  return task;
}

bool is_forward(const std::string& task) { return task == "forward-darcy" || task == "forward-burgers"; }

void check_training_task(const std::string& task) {
  if (!is_forward(task) && task != "inverse-stage1" && task != "inverse-stage2") {
    throw ConfigError("task '" + task +
                      "' is not trainable; use forward-darcy, forward-burgers, inverse-stage1 or inverse-stage2");
  }
}

/// Dataset path for `role` ("train" or "test"), preferring a task-specific key.
std::string data_path(const KvConfig& kv, const std::string& task, const std::string& role) {
  const std::string specific = "data." + task + "." + role;
  if (kv.has(specific)) return kv.get_string(specific);
  if (!kv.has("data." + role)) throw ConfigError("missing config key 'data." + role + "'");
  return kv.get_string("data." + role);
}

struct LoadedData {
  std::string train_path, test_path;
  data::PdeDataset train, test;
};

LoadedData load_data(const KvConfig& kv, const std::string& task, Manifest& manifest, const std::string& tag) {
  LoadedData d;
  d.train_path = data_path(kv, task, "train");
  d.test_path = data_path(kv, task, "test");
  d.train = data::read_dataset(d.train_path);
  d.test = data::read_dataset(d.test_path);
  manifest.add_input(tag + "train", d.train_path);
  manifest.add_input(tag + "test", d.test_path);
  return d;
}

std::string metrics_row(std::initializer_list<std::string> fields) {
  std::string s;
  for (const std::string& f : fields) {
    if (!s.empty()) s += ',';
    s += f;
  }
  return s + "\n";
}

std::string ratio_tag(double r) { return "r" + format_double(r); }

/// Trains one cell of a sweep or one plain run and returns its test metric.
TrainOutcome run_task(const std::string& task, const LoadedData& d, const TrainConfig& tc, const KvConfig& kv) {
  if (is_forward(task)) return train_forward(d.train, d.test, tc);
  if (task == "inverse-stage1") {
    return train_completer(d.train, d.test, tc, resolve_mask(kv), kv.get_bool("mask.resample", true));
  }
  return train_propagator(d.train, d.test, tc, kv.get_double("window.t_lo", 0.25), kv.get_double("window.t_hi", 0.75));
}

std::string propagator_csv(const std::vector<PropagatorScores>& scores) {
  std::string csv = "source,rel_mae,rel_mae_t0,rel_mae_t1\n";
  for (const PropagatorScores& s : scores) {
    csv += metrics_row({s.source, format_double(s.rel_mae), format_double(s.rel_mae_t0), format_double(s.rel_mae_t1)});
  }
  return csv;
}

std::vector<PropagatorScores> propagator_sources(const ScaledModel& propagator, const data::PdeDataset& test,
                                                 const KvConfig& kv, Manifest& manifest) {
  std::vector<PropagatorScores> scores{evaluate_propagator(propagator, test, nullptr, "ground-truth")};
  std::size_t k = 0;
  for (const std::string& path : get_list(kv, "propagator.completers")) {
    const ScaledModel completer = ScaledModel::load(path);
    manifest.add_input("completer." + std::to_string(k++), path);
    scores.push_back(evaluate_propagator(propagator, test, &completer, fs::path(path).stem().string()));
  }
  return scores;
}

void print_scores(std::ostream& log, const std::vector<PropagatorScores>& scores) {
  for (const PropagatorScores& s : scores) {
    log << "propagator source=" << s.source << " rel_mae=" << format_double(s.rel_mae)
        << " t0=" << format_double(s.rel_mae_t0) << " t1=" << format_double(s.rel_mae_t1) << "\n";
  }
}

}  // namespace

// ---------------------------------------------------------------------------

TrainConfig desk_defaults(const std::string& task) {
  const std::string t = canonical_task(task);
  TrainConfig c = is_forward(t) ? TrainConfig::forward_defaults() : TrainConfig::inverse_defaults();
  c.width = 64;
  c.latent_size = 32;
  c.depth = 4;
  c.heads = 4;
  c.epochs = 200;
  return c;
}

TrainConfig resolve_train_config(const KvConfig& config, const std::string& task) {
  TrainConfig base = desk_defaults(task);
  base.seed = config.get_uint("seed", 0);
  return TrainConfig::read(config, base);
}

// ---------------------------------------------------------------------------

void cmd_generate(const CommandContext& ctx) {
  KvConfig kv = ctx.config;
  std::ostream& log = log_of(ctx);
  const std::string kind = kv.get_string("generate.kind", "");
  if (kind != "burgers" && kind != "darcy") throw ConfigError("generate.kind must be 'burgers' or 'darcy'");
  const std::uint64_t seed = kv.get_uint("seed", 0);
  const std::size_t counts[3] = {kv.get_uint("generate.train", 64), kv.get_uint("generate.val", 0),
                                 kv.get_uint("generate.test", 16)};
  const char* names[3] = {"train", "val", "test"};
  std::uint64_t seeds[3];
  const Rng root(seed, 0x47454e);
  for (int k = 0; k < 3; ++k) seeds[k] = root.split(static_cast<std::uint64_t>(k)).next_u64();
  if (seeds[0] == seeds[1] || seeds[1] == seeds[2] || seeds[0] == seeds[2]) {
    throw GenerationError("derived split seeds collide; choose another seed");
  }

  // Desk-scale grid sizes unless the config says otherwise.
  if (kind == "burgers") {
    if (!kv.has("burgers.nx")) kv.set("burgers.nx", std::uint64_t{32});
    if (!kv.has("burgers.nt")) kv.set("burgers.nt", std::uint64_t{32});
    data::BurgersConfig bc = data::BurgersConfig::read(kv);
    bc.seed = seed;
    bc.write(kv);
  } else {
    data::DarcyConfig dc = data::DarcyConfig::read(kv);
    dc.seed = seed;
    dc.write(kv);
  }
  kv.set("generate.kind", kind);
  kv.set("seed", seed);
  for (int k = 0; k < 3; ++k) kv.set(std::string("generate.") + names[k], static_cast<std::uint64_t>(counts[k]));

  Manifest manifest("generate", kv);
  fs::create_directories(ctx.out_dir);
  auto emit = [&](const std::string& file, const data::PdeDataset& ds) {
    const std::string path = path_in(ctx, file);
    data::write_dataset(ds, path);
    manifest.add_output(file, path);
    log << file << " pairs=" << ds.pairs.size() << " hash=" << file_content_hash(path) << "\n";
  };
  for (int k = 0; k < 3; ++k) {
    if (counts[k] == 0) continue;
    if (kind == "burgers") {
      data::BurgersConfig bc = data::BurgersConfig::read(kv);
      bc.seed = seeds[k];
      emit(std::string(names[k]) + ".lnod", data::generate_burgers_dataset(bc, counts[k]));
    } else {
      data::DarcyConfig dc = data::DarcyConfig::read(kv);
      dc.seed = seeds[k];
      emit(std::string(names[k]) + ".lnod", data::generate_darcy_dataset(dc, counts[k]));
    }
  }
  if (kind == "darcy" && counts[2] > 0) {
    // Extra test sets draw the same random fields at other resolutions.
    for (std::uint64_t s : kv.get_uints("generate.test_resolutions", {})) {
      data::DarcyConfig dc = data::DarcyConfig::read(kv);
      dc.s = s;
      dc.seed = seeds[2];
      emit("test_s" + std::to_string(s) + ".lnod", data::generate_darcy_dataset(dc, counts[2]));
    }
  }
  manifest.write(ctx.out_dir);
}

void cmd_train(const CommandContext& ctx) {
  KvConfig kv = ctx.config;
  std::ostream& log = log_of(ctx);
  const std::string task = canonical_task(kv.get_string("task", ""));
  check_training_task(task);
  kv.set("task", task);
  const TrainConfig tc = resolve_train_config(kv, task);
  tc.write(kv);
  if (task == "inverse-stage1") {
    const data::ObservationMask m = resolve_mask(kv);
    kv.set("mask.seed", m.seed);
  }
  Manifest manifest("train", kv);
  const LoadedData d = load_data(kv, task, manifest, "");
  fs::create_directories(ctx.out_dir);

  if (is_forward(task)) {
    const TrainOutcome o = train_forward(d.train, d.test, tc);
    o.model.save(path_in(ctx, "model.lno"));
    write_text(path_in(ctx, "history.csv"), history_csv(o.history));
    write_text(path_in(ctx, "metrics.csv"), "task,metric,test,baseline\n" +
                                                metrics_row({task, "relative-l2", format_double(o.test_metric),
                                                             format_double(o.baseline_metric)}));
    for (const char* f : {"model.lno", "history.csv", "metrics.csv"}) manifest.add_output(f, path_in(ctx, f));
    log << task << " test_rel_l2=" << format_double(o.test_metric)
        << " mean_predictor_rel_l2=" << format_double(o.baseline_metric) << "\n";
  } else if (task == "inverse-stage1") {
    data::ObservationMask mask = resolve_mask(kv);
    const bool resample = kv.get_bool("mask.resample", true);
    std::vector<double> ratios{mask.ratio};
    if (mask.mode == data::ObservationMask::Mode::RandomRatio && !ctx.config.has("mask.ratio")) {
      ratios = kv.get_doubles("completer.ratios", {0.2, 0.1, 0.05, 0.01, 0.005});
    }
    std::string csv = "ratio,test_rel_mae,nn_rel_mae\n";
    for (double r : ratios) {
      mask.ratio = r;
      const std::string tag = mask.mode == data::ObservationMask::Mode::FixedGrid ? "grid" : ratio_tag(r);
      const TrainOutcome o = train_completer(d.train, d.test, tc, mask, resample);
      const std::string model_file = "completer_" + tag + ".lno", history_file = "history_" + tag + ".csv";
      o.model.save(path_in(ctx, model_file));
      write_text(path_in(ctx, history_file), history_csv(o.history));
      manifest.add_output(model_file, path_in(ctx, model_file));
      manifest.add_output(history_file, path_in(ctx, history_file));
      csv += metrics_row({format_double(r), format_double(o.test_metric), format_double(o.baseline_metric)});
      log << "completer " << tag << " test_rel_mae=" << format_double(o.test_metric)
          << " nn_rel_mae=" << format_double(o.baseline_metric) << "\n";
    }
    write_text(path_in(ctx, "metrics.csv"), csv);
    manifest.add_output("metrics.csv", path_in(ctx, "metrics.csv"));
  } else {
    const TrainOutcome o = train_propagator(d.train, d.test, tc, kv.get_double("window.t_lo", 0.25),
                                            kv.get_double("window.t_hi", 0.75));
    o.model.save(path_in(ctx, "propagator.lno"));
    write_text(path_in(ctx, "history.csv"), history_csv(o.history));
    const std::vector<PropagatorScores> scores = propagator_sources(o.model, d.test, kv, manifest);
    write_text(path_in(ctx, "propagator.csv"), propagator_csv(scores));
    for (const char* f : {"propagator.lno", "history.csv", "propagator.csv"}) manifest.add_output(f, path_in(ctx, f));
    print_scores(log, scores);
  }
  manifest.write(ctx.out_dir);
}

void cmd_eval(const CommandContext& ctx) {
  KvConfig kv = ctx.config;
  std::ostream& log = log_of(ctx);
  const std::string task = canonical_task(kv.get_string("task", ""));
  kv.set("task", task);
  if (!kv.has("eval.checkpoint")) throw ConfigError("missing config key 'eval.checkpoint'");
  const std::string ckpt = kv.get_string("eval.checkpoint");
  Manifest manifest("eval", kv);
  manifest.add_input("checkpoint", ckpt);
  const ScaledModel model = ScaledModel::load(ckpt);
  fs::create_directories(ctx.out_dir);

  if (task == "resolution-gen") {
    const std::string train_path = data_path(kv, task, "train");
    const data::PdeDataset train = data::read_dataset(train_path);
    manifest.add_input("train", train_path);
    const std::vector<std::string> tests = get_list(kv, "data.tests");
    if (tests.empty()) throw ConfigError("resolution-gen needs 'data.tests' (comma-separated dataset paths)");
    std::string csv = "resolution,rel_l2,baseline_rel_l2\n";
    for (std::size_t k = 0; k < tests.size(); ++k) {
      const data::PdeDataset test = data::read_dataset(tests[k]);
      manifest.add_input("test." + std::to_string(k), tests[k]);
      if (test.grid.dims.empty()) throw ContractError("dataset '" + tests[k] + "' has no grid");
      const double metric =
          evaluate_scaled(model, ExampleSet::from_vector(forward_examples(test)), MetricKind::RelativeL2);
      const double baseline = mean_predictor_metric(train, test, MetricKind::RelativeL2);
      csv += metrics_row({std::to_string(test.grid.dims[0]), format_double(metric), format_double(baseline)});
      log << "resolution " << test.grid.dims[0] << " rel_l2=" << format_double(metric)
          << " mean_predictor_rel_l2=" << format_double(baseline) << "\n";
    }
    write_text(path_in(ctx, "resolution.csv"), csv);
    manifest.add_output("resolution.csv", path_in(ctx, "resolution.csv"));
  } else if (is_forward(task)) {
    const std::string test_path = data_path(kv, task, "test");
    const data::PdeDataset test = data::read_dataset(test_path);
    manifest.add_input("test", test_path);
    const double metric =
        evaluate_scaled(model, ExampleSet::from_vector(forward_examples(test)), MetricKind::RelativeL2);
    std::string baseline = "";
    if (kv.has("data.train")) {
      const data::PdeDataset train = data::read_dataset(kv.get_string("data.train"));
      manifest.add_input("train", kv.get_string("data.train"));
      baseline = format_double(mean_predictor_metric(train, test, MetricKind::RelativeL2));
    }
    write_text(path_in(ctx, "metrics.csv"),
               "task,metric,test,baseline\n" + metrics_row({task, "relative-l2", format_double(metric), baseline}));
    manifest.add_output("metrics.csv", path_in(ctx, "metrics.csv"));
    log << task << " test_rel_l2=" << format_double(metric) << "\n";
  } else if (task == "inverse-stage1") {
    const std::string test_path = data_path(kv, task, "test");
    const data::PdeDataset test = data::read_dataset(test_path);
    manifest.add_input("test", test_path);
    const ExampleSet set = completer_examples(test, resolve_mask(model.meta), false);
    const double metric = evaluate_scaled(model, set, MetricKind::RelativeMae);
    const double nn = nearest_neighbor_metric(set);
    write_text(path_in(ctx, "metrics.csv"), "ratio,test_rel_mae,nn_rel_mae\n" +
                                                metrics_row({model.meta.get_string("mask.ratio", ""),
                                                             format_double(metric), format_double(nn)}));
    manifest.add_output("metrics.csv", path_in(ctx, "metrics.csv"));
    log << "completer test_rel_mae=" << format_double(metric) << " nn_rel_mae=" << format_double(nn) << "\n";
  } else if (task == "inverse-stage2") {
    const std::string test_path = data_path(kv, task, "test");
    const data::PdeDataset test = data::read_dataset(test_path);
    manifest.add_input("test", test_path);
    const std::vector<PropagatorScores> scores = propagator_sources(model, test, kv, manifest);
    write_text(path_in(ctx, "propagator.csv"), propagator_csv(scores));
    manifest.add_output("propagator.csv", path_in(ctx, "propagator.csv"));
    print_scores(log, scores);
  } else {
    throw ConfigError("task '" + task + "' cannot be evaluated");
  }
  manifest.write(ctx.out_dir);
}

void cmd_sweep(const CommandContext& ctx) {
  KvConfig kv = ctx.config;
  std::ostream& log = log_of(ctx);
  const std::string kind = kv.get_string("task", "");
  if (kind != "latent-sweep" && kind != "depth-width-sweep") {
    throw ConfigError("sweep task must be 'latent-sweep' or 'depth-width-sweep', got '" + kind + "'");
  }
  std::vector<std::string> tasks = get_list(kv, "sweep.tasks", {"inverse-stage1"});
  for (std::string& t : tasks) {
    t = canonical_task(t);
    check_training_task(t);
  }
  const std::vector<std::uint64_t> latents = kv.get_uints("sweep.latent_sizes", {8, 16, 32, 64, 128});
  const std::vector<std::uint64_t> depths = kv.get_uints("sweep.depths", {1, 2, 4, 8});
  const std::vector<std::uint64_t> widths = kv.get_uints("sweep.widths", {32, 64, 128});
  const std::uint64_t seed = kv.get_uint("seed", 0);
  Manifest manifest("sweep", kv);
  fs::create_directories(ctx.out_dir);

  std::string csv = kind == "latent-sweep" ? "task,M,param_count,metric,baseline\n"
                                           : "task,L,D,param_count,metric,baseline\n";
  std::vector<Series> curves;
  std::uint64_t cell = 0;
  std::vector<std::pair<std::string, std::string>> heatmaps;
  for (const std::string& task : tasks) {
    const LoadedData d = load_data(kv, task, manifest, task + ".");
    const TrainConfig base = resolve_train_config(kv, task);
    Series curve{task, {}, {}};
    std::vector<double> hx, hy, hv;
    auto run_cell = [&](TrainConfig tc) {
      // Cells use disjoint seeds derived from the run seed.
      tc.seed = Rng(seed, 0x535745).split(cell++).next_u64();
      return run_task(task, d, tc, kv);
    };
    if (kind == "latent-sweep") {
      for (std::uint64_t m : latents) {
        TrainConfig tc = base;
        tc.latent_size = m;
        const TrainOutcome o = run_cell(tc);
        csv += metrics_row({task, std::to_string(m), std::to_string(o.model.model.param_count()),
                            format_double(o.test_metric), format_double(o.baseline_metric)});
        curve.x.push_back(static_cast<double>(m));
        curve.y.push_back(o.test_metric);
        log << task << " M=" << m << " metric=" << format_double(o.test_metric) << "\n";
      }
      curves.push_back(std::move(curve));
    } else {
      for (std::uint64_t l : depths)
        for (std::uint64_t w : widths) {
          TrainConfig tc = base;
          tc.depth = l;
          tc.width = w;
          const TrainOutcome o = run_cell(tc);
          csv += metrics_row({task, std::to_string(l), std::to_string(w), std::to_string(o.model.model.param_count()),
                              format_double(o.test_metric), format_double(o.baseline_metric)});
          hx.push_back(static_cast<double>(w));
          hy.push_back(static_cast<double>(l));
          hv.push_back(o.test_metric);
          log << task << " L=" << l << " D=" << w << " metric=" << format_double(o.test_metric) << "\n";
        }
      heatmaps.emplace_back("sweep_" + task + ".svg",
                            render_heatmap_svg(task + " test metric", "width D", "depth L", hx, hy, hv));
    }
  }
  write_text(path_in(ctx, "sweep.csv"), csv);
  manifest.add_output("sweep.csv", path_in(ctx, "sweep.csv"));
  if (kind == "latent-sweep") {
    heatmaps.emplace_back("sweep.svg", render_line_svg("latent size vs test metric", "latent size M", "test metric", curves));
  }
  for (const auto& [file, svg] : heatmaps) {
    write_text(path_in(ctx, file), svg);
    manifest.add_output(file, path_in(ctx, file));
  }
  manifest.write(ctx.out_dir);
}

void cmd_bench(const CommandContext& ctx) {
  KvConfig kv = ctx.config;
  std::ostream& log = log_of(ctx);
  const std::vector<std::uint64_t> ns = kv.get_uints("bench.n", {256, 512, 1024, 2048, 4096});
  const std::size_t m = kv.get_uint("bench.m", 32), l = kv.get_uint("bench.l", 4);
  const std::size_t width = kv.get_uint("bench.width", 64), reps = kv.get_uint("bench.repetitions", 5);
  const std::size_t fixed_n = kv.get_uint("bench.fixed_n", 1024);
  const std::vector<std::uint64_t> ms = kv.get_uints("bench.latent_sizes", {8, 16, 32, 64, 128});
  const std::vector<std::uint64_t> ls = kv.get_uints("bench.depths", {1, 2, 4, 8});
  const std::uint64_t seed = kv.get_uint("seed", 0);
  if (ns.size() < 2) throw ConfigError("bench.n needs at least two sizes");
  Manifest manifest("bench", kv);
  fs::create_directories(ctx.out_dir);

  std::vector<BenchRow> n_rows, rows;
  for (std::uint64_t n : ns) n_rows.push_back(time_forward(n, m, l, width, reps, seed));
  rows = n_rows;
  for (std::uint64_t mm : ms) rows.push_back(time_forward(fixed_n, mm, l, width, reps, seed));
  for (std::uint64_t ll : ls) rows.push_back(time_forward(fixed_n, m, ll, width, reps, seed));

  // Least-squares slope of log time against log N.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const BenchRow& r : n_rows) {
    const double x = std::log(static_cast<double>(r.n)), y = std::log(r.t_total);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double k = static_cast<double>(n_rows.size());
  const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  const BenchRow& big = n_rows.back();
  const BenchRow& half = n_rows[n_rows.size() - 2];
  const double ratio = big.t_total / half.t_total;

  write_text(path_in(ctx, "bench.csv"), bench_csv(rows));
  KvConfig summary;
  summary.set("slope_log_time_log_n", slope);
  summary.set("largest_pair", std::to_string(half.n) + "," + std::to_string(big.n));
  summary.set("largest_pair_ratio", ratio);
  summary.set("linear_check", ratio < 2.5 ? "pass" : "fail");
  summary.save(path_in(ctx, "bench_summary.txt"));
  manifest.add_output("bench.csv", path_in(ctx, "bench.csv"));
  manifest.add_output("bench_summary.txt", path_in(ctx, "bench_summary.txt"));
  manifest.write(ctx.out_dir);
  log << "slope=" << format_double(slope) << " time(" << big.n << ")/time(" << half.n
      << ")=" << format_double(ratio) << "\n";
  if (!(ratio < 2.5)) {
    throw BenchError("time(N=" + std::to_string(big.n) + ")/time(N=" + std::to_string(half.n) + ") = " +
                     format_double(ratio) + " is not below 2.5");
  }
}

void cmd_plot(const CommandContext& ctx, const std::vector<std::string>& inputs) {
  const KvConfig& kv = ctx.config;
  if (inputs.empty()) throw ContractError("plot needs at least one CSV file");
  const std::string kind = kv.get_string("plot.kind", "line");
  if (kind != "line" && kind != "heatmap") throw ConfigError("plot.kind must be 'line' or 'heatmap'");
  Manifest manifest("plot", kv);
  std::vector<std::pair<std::string, std::string>> outputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::vector<char> bytes = read_file(inputs[i]);
    CsvTable t;
    try {
      t = parse_csv(std::string(bytes.begin(), bytes.end()));
    } catch (const ParseError& e) {
      throw ParseError("'" + inputs[i] + "': " + e.what());
    }
    manifest.add_input("csv." + std::to_string(i), inputs[i]);
    if (t.rows.empty()) throw ContractError("'" + inputs[i] + "' has an empty series (no data rows)");
    std::vector<std::size_t> numeric, text;
    for (std::size_t c = 0; c < t.header.size(); ++c) (t.numeric(c) ? numeric : text).push_back(c);
    const std::string stem = fs::path(inputs[i]).stem().string();
    std::string svg;
    if (kind == "heatmap") {
      if (numeric.size() < 3 && !(kv.has("plot.x") && kv.has("plot.y") && kv.has("plot.value"))) {
        throw ContractError("'" + inputs[i] + "' needs three numeric columns for a heatmap");
      }
      const std::size_t cx = kv.has("plot.x") ? t.column(kv.get_string("plot.x")) : numeric[0];
      const std::size_t cy = kv.has("plot.y") ? t.column(kv.get_string("plot.y")) : numeric[1];
      const std::size_t cv = kv.has("plot.value") ? t.column(kv.get_string("plot.value")) : numeric.back();
      svg = render_heatmap_svg(stem, t.header[cx], t.header[cy], t.numbers(cx), t.numbers(cy), t.numbers(cv));
    } else {
      if (numeric.size() < (kv.has("plot.x") ? 1u : 2u)) {
        throw ContractError("'" + inputs[i] + "' needs an x column and at least one numeric y column");
      }
      const std::size_t cx = kv.has("plot.x") ? t.column(kv.get_string("plot.x")) : numeric[0];
      std::vector<std::size_t> ys;
      if (kv.has("plot.y")) {
        for (const std::string& name : get_list(kv, "plot.y")) ys.push_back(t.column(name));
      } else {
        for (std::size_t c : numeric)
          if (c != cx) ys.push_back(c);
      }
      std::optional<std::size_t> group;
      if (kv.has("plot.group")) {
        group = t.column(kv.get_string("plot.group"));
      } else if (!text.empty()) {
        group = text.front();
      }
      const std::vector<double> xs = t.numbers(cx);
      std::vector<Series> series;
      for (std::size_t c : ys) {
        const std::vector<double> vs = t.numbers(c);
        // Groups keep their order of first appearance.
        std::vector<std::string> keys;
        for (const auto& row : t.rows) {
          const std::string key = group ? row[*group] : "";
          if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
        }
        for (const std::string& key : keys) {
          Series s;
          s.name = key.empty() ? t.header[c] : (ys.size() > 1 ? key + " " + t.header[c] : key);
          for (std::size_t r = 0; r < t.rows.size(); ++r) {
            if (group && t.rows[r][*group] != key) continue;
            s.x.push_back(xs[r]);
            s.y.push_back(vs[r]);
          }
          series.push_back(std::move(s));
        }
      }
      svg = render_line_svg(stem, t.header[cx], ys.size() == 1 ? t.header[ys[0]] : "value", series);
    }
    outputs.emplace_back(stem + ".svg", std::move(svg));
  }
  // Nothing is written until every input rendered.
  fs::create_directories(ctx.out_dir);
  for (const auto& [file, svg] : outputs) {
    write_text(path_in(ctx, file), svg);
    manifest.add_output(file, path_in(ctx, file));
    log_of(ctx) << "wrote " << file << "\n";
  }
  manifest.write(ctx.out_dir);
}

// ---------------------------------------------------------------------------

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent-space neural operator experiments", "lno"};
  app.require_subcommand(1);
  struct Options {
    std::string config, out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    std::vector<std::string> inputs;
  } opt;
  const std::pair<const char*, const char*> commands[] = {
      {"generate", "Generate train/val/test datasets"},
      {"train", "Train a model for a task"},
      {"eval", "Evaluate a checkpoint"},
      {"sweep", "Latent-size or depth/width sweep"},
      {"bench", "Forward-pass timing benchmark"},
      {"plot", "Render CSV files to SVG"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "Config file (key=value lines)");
    sub->add_option("--seed", opt.seed, "Run seed");
    sub->add_option("--out", opt.out, "Output directory")->required();
    sub->add_option("--override", opt.overrides, "key=value override (repeatable)");
    if (std::string(name) == "plot") sub->add_option("csv", opt.inputs, "CSV files")->required();
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    CommandContext ctx;
    if (!opt.config.empty()) ctx.config = KvConfig::load(opt.config);
    for (const std::string& o : opt.overrides) ctx.config.apply_override(o);
    if (opt.seed) ctx.config.set("seed", *opt.seed);
    ctx.out_dir = opt.out;
    ctx.log = &out;
    const std::string command = app.get_subcommands().front()->get_name();
    if (command == "generate") {
      cmd_generate(ctx);
    } else if (command == "train") {
      cmd_train(ctx);
    } else if (command == "eval") {
      cmd_eval(ctx);
    } else if (command == "sweep") {
      cmd_sweep(ctx);
    } else if (command == "bench") {
      cmd_bench(ctx);
    } else {
      cmd_plot(ctx, opt.inputs);
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace lno::pipelines
