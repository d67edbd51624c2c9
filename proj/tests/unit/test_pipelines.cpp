#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lno/binary_io.hpp"
#include "lno/error.hpp"
#include "lno/pipelines.hpp"

using namespace lno;
using namespace lno::pipelines;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lno_pipe_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  const std::vector<char> b = read_file(p.string());
  return std::string(b.begin(), b.end());
}

/// Every regular file of two directories, compared byte for byte.
bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<std::string> na, nb;
  for (const auto& e : fs::directory_iterator(a)) na.push_back(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(b)) nb.push_back(e.path().filename().string());
  std::sort(na.begin(), na.end());
  std::sort(nb.begin(), nb.end());
  if (na != nb) return false;
  for (const std::string& n : na)
    if (slurp(a / n) != slurp(b / n)) return false;
  return true;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::size_t count_of(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

const std::vector<std::string> kTinyModel = {"--override", "train.epochs=2",      "--override", "train.width=16",
                                             "--override", "train.latent_size=8", "--override", "train.depth=1",
                                             "--override", "train.heads=2"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

/// Small Burgers (16 x 16) and Darcy (s = 9) datasets shared by the CLI tests.
const fs::path& tiny_data() {
  static const fs::path dir = [] {
    const fs::path d = fresh_dir("data");
    const CliResult b = cli({"generate", "--out", (d / "burgers").string(), "--seed", "3", "--override",
                             "generate.kind=burgers", "--override", "generate.train=8", "--override",
                             "generate.test=4", "--override", "burgers.nx=16", "--override", "burgers.nt=16"});
    REQUIRE(b.code == 0);
    const CliResult c = cli({"generate", "--out", (d / "darcy").string(), "--seed", "3", "--override",
                             "generate.kind=darcy", "--override", "generate.train=8", "--override", "generate.test=4",
                             "--override", "darcy.s=9", "--override", "generate.test_resolutions=9,13"});
    REQUIRE(c.code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("value scalers") {
  const Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const ValueScaler st = ValueScaler::standardize({&a});
  CHECK(st.shift == doctest::Approx(2.5));
  CHECK(st.scale == doctest::Approx(std::sqrt(1.25)));
  CHECK(max_abs_diff(st.invert(st.apply(a)), a) < 1e-15);
  const ValueScaler r = ValueScaler::rms({&a});
  CHECK(r.shift == 0.0);
  CHECK(r.scale == doctest::Approx(std::sqrt(7.5)));
  const Tensor zero = Tensor::matrix(1, 3);
  CHECK(ValueScaler::standardize({&zero}).scale == 1.0);
  CHECK_THROWS_AS(ValueScaler::rms({}), ContractError);
}

TEST_CASE("nearest-neighbor fill") {
  const SampleSequence obs(Tensor::matrix(3, 2, {0.0, 0.0, 1.0, 0.0, 0.0, 1.0}), Tensor::matrix(3, 1, {10, 20, 30}));
  const Tensor q = Tensor::matrix(4, 2, {0.0, 0.0, 0.9, 0.1, 0.1, 0.8, 0.5, 0.0});
  const Tensor out = nearest_neighbor_fill(obs, q);
  CHECK(out(0, 0) == 10);
  CHECK(out(1, 0) == 20);
  CHECK(out(2, 0) == 30);
  CHECK(out(3, 0) == 10);  // equidistant: the lower index wins
  CHECK_THROWS_AS(nearest_neighbor_fill(obs, Tensor::matrix(1, 3)), DimensionError);
  CHECK_THROWS_AS(nearest_neighbor_fill(SampleSequence(Tensor::matrix(0, 2), Tensor::matrix(0, 1)), q), ContractError);
}

TEST_CASE("bilinear sampling reproduces bilinear functions") {
  const std::size_t s = 5;
  auto f = [](double x, double y) { return 1.0 + 2.0 * x - 3.0 * y + 0.5 * x * y; };
  Tensor field = Tensor::matrix(s, s);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) field(i, j) = f(j / 4.0, i / 4.0);
  Rng rng(5);
  Tensor pos = Tensor::matrix(50, 2);
  for (double& v : pos.data()) v = rng.uniform();
  const Tensor out = bilinear_sample(field, pos);
  for (std::size_t k = 0; k < 50; ++k) CHECK(out(k, 0) == doctest::Approx(f(pos(k, 0), pos(k, 1))).epsilon(1e-12));
  CHECK(bilinear_sample(field, data::square_grid_positions(s)) .reshaped({s, s}) == field);
}

TEST_CASE("mean field and mean predictor") {
  data::PdeDataset ds;
  ds.grid.dims = {2, 1};
  for (double v : {1.0, 3.0}) {
    const Tensor pos = Tensor::matrix(2, 1, {0.0, 1.0});
    ds.pairs.push_back({SampleSequence(pos, Tensor::matrix(2, 1, {v, v})), SampleSequence(pos, Tensor::matrix(2, 1, {v, 2 * v}))});
  }
  CHECK(mean_field(ds) == Tensor::matrix(2, 1, {2.0, 4.0}));
  // |2-1| + |4-2| over 3, |2-3| + |4-6| over 9.
  CHECK(mean_predictor_metric(ds, ds, MetricKind::RelativeMae) == doctest::Approx((1.0 + 1.0 / 3.0) / 2.0));
}

TEST_CASE("completer examples follow the mask and the window") {
  data::BurgersConfig bc;
  bc.nx = 16;
  bc.nt = 16;
  const data::PdeDataset ds = data::generate_burgers_dataset(bc, 3);
  data::ObservationMask mask;
  mask.ratio = 0.25;
  mask.t_lo = 0.25;
  mask.t_hi = 0.75;
  mask.seed = 9;
  const ExampleSet vary = completer_examples(ds, mask, true);
  const ExampleSet fixed = completer_examples(ds, mask, false);
  const data::RowRange rows = data::window_rows(16, 0.25, 0.75);
  const Example e = vary.get(1, 0);
  CHECK(e.query.dim(0) == rows.count() * 16);
  CHECK(e.input.size() == static_cast<std::size_t>(std::floor(0.25 * rows.count() * 16)));
  const Tensor field = data::burgers_field(ds.pairs[1], ds.grid);
  for (std::size_t k = 0; k < e.input.size(); ++k) {
    const auto j = static_cast<std::size_t>(std::lround(e.input.positions(k, 0) * 16));
    const auto i = static_cast<std::size_t>(std::lround(e.input.positions(k, 1) * 15));
    CHECK(i >= rows.first);
    CHECK(i <= rows.last);
    CHECK(e.input.values(k, 0) == field(i, j));
  }
  CHECK(vary.get(1, 0).input == e.input);
  CHECK_FALSE(vary.get(1, 1).input == e.input);
  CHECK(fixed.get(1, 5).input == fixed.get(1, 0).input);
  CHECK_FALSE(fixed.get(0, 0).input == fixed.get(1, 0).input);
  mask.ratio = 0.0;
  CHECK_THROWS_AS(completer_examples(ds, mask, false), MaskError);
}

TEST_CASE("propagator examples map the window to the full grid") {
  data::BurgersConfig bc;
  bc.nx = 8;
  bc.nt = 9;
  const data::PdeDataset ds = data::generate_burgers_dataset(bc, 2);
  const std::vector<Example> ex = propagator_examples(ds, 0.25, 0.75);
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].input.size() == 5 * 8);  // rows 2..6
  CHECK(ex[0].query.dim(0) == 72);
  CHECK(ex[0].target == ds.pairs[0].output.values);
}

TEST_CASE("scaled model checkpoint round trip") {
  ModelConfig mc;
  mc.width = 8;
  mc.latent_size = 4;
  mc.depth = 1;
  mc.heads = 2;
  ScaledModel m{LnoModel(mc), {0.3, 1.7}, {0.0, 0.2}, {}, {0.5, 0.29}};
  m.meta.set("task", "completer");
  m.meta.set("mask.ratio", 0.1);
  const fs::path dir = fresh_dir("scaled");
  const std::string path = (dir / "m.lno").string();
  m.save(path);
  const ScaledModel back = ScaledModel::load(path);
  CHECK(back.input == m.input);
  CHECK(back.output == m.output);
  CHECK(back.position == m.position);
  CHECK(back.meta == m.meta);
  Rng rng(1);
  Tensor pos = Tensor::matrix(6, 2), val = Tensor::matrix(6, 1);
  for (double& v : pos.data()) v = rng.uniform();
  for (double& v : val.data()) v = rng.normal();
  CHECK(bit_identical(back.predict(SampleSequence(pos, val), pos), m.predict(SampleSequence(pos, val), pos)));
  // A plain model checkpoint lacks the normalization keys.
  m.model.save((dir / "plain.lno").string());
  CHECK_THROWS_AS(ScaledModel::load((dir / "plain.lno").string()), CheckpointError);
}

TEST_CASE("csv parsing reports line numbers") {
  const CsvTable t = parse_csv("a,b\n1,2\n\n3,4\n");
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  CHECK(t.rows.size() == 2);
  CHECK(t.numbers(1) == std::vector<double>{2, 4});
  try {
    parse_csv("a,b\n1,2\n3\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_csv(""), ParseError);
  CHECK_THROWS_AS(parse_csv("a,,c\n"), ParseError);
}

TEST_CASE("svg rendering") {
  const std::string svg = render_line_svg("t", "x", "y", {{"s", {1, 2}, {3, 5}}});
  CHECK(count_of(svg, "<polyline") == 1);
  const std::size_t p = svg.find("points=\"");
  const std::string pts = svg.substr(p + 8, svg.find('"', p + 8) - p - 8);
  CHECK(count_of(pts, ",") == 2);
  CHECK(render_line_svg("t", "x", "y", {{"s", {1, 2}, {3, 5}}}) == svg);
  CHECK_THROWS_AS(render_line_svg("t", "x", "y", {}), ContractError);
  CHECK_THROWS_AS(render_line_svg("t", "x", "y", {{"s", {}, {}}}), ContractError);
  const std::string heat = render_heatmap_svg("h", "D", "L", {32, 64, 32, 64}, {1, 1, 2, 2}, {0.1, 0.2, 0.3, 0.4});
  CHECK(count_of(heat, "<rect") == 5);  // background plus four cells
}

TEST_CASE("cli argument and exit-code contracts") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"frobnicate", "--out", "x"}).code == 1);
  CHECK(cli({"generate"}).code == 1);  // --out is required
  const fs::path dir = fresh_dir("exit");
  CHECK(cli({"generate", "--out", dir.string(), "--config", (dir / "missing.cfg").string()}).code == 2);
  CHECK(cli({"generate", "--out", dir.string(), "--override", "generate.kind=lava"}).code == 1);
  CHECK(cli({"generate", "--out", dir.string(), "--override", "no-equals-sign"}).code == 1);
  CHECK(cli({"train", "--out", dir.string(), "--override", "task=forward-darcy", "--override",
             "data.train=" + (dir / "none.lnod").string(), "--override", "data.test=x"})
            .code == 2);
  CHECK(cli({"generate", "--help"}).code == 0);
}

TEST_CASE("generate writes the requested counts deterministically") {
  const fs::path dir = fresh_dir("gen");
  const std::vector<std::string> burgers = {"--seed",   "11", "--override", "generate.kind=burgers", "--override",
                                            "generate.train=16", "--override", "generate.test=2", "--override",
                                            "generate.val=1"};
  const CliResult a = cli(with({"generate", "--out", (dir / "a").string()}, burgers));
  const CliResult b = cli(with({"generate", "--out", (dir / "b").string()}, burgers));
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(same_tree(dir / "a", dir / "b"));
  const data::PdeDataset train = data::read_dataset((dir / "a" / "train.lnod").string());
  CHECK(train.pairs.size() == 16);
  CHECK(train.grid.dims == std::vector<std::size_t>{32, 32});
  const data::PdeDataset val = data::read_dataset((dir / "a" / "val.lnod").string());
  CHECK_FALSE(val.pairs[0] == train.pairs[0]);  // disjoint seeds
  CHECK(a.out.find("train.lnod pairs=16 hash=" + file_content_hash((dir / "a" / "train.lnod").string())) !=
        std::string::npos);
  REQUIRE(cli({"generate", "--out", (dir / "d").string(), "--override", "generate.kind=darcy", "--override",
               "generate.train=8", "--override", "generate.test=0"})
              .code == 0);
  CHECK(data::read_dataset((dir / "d" / "train.lnod").string()).pairs.size() == 8);
  CHECK_FALSE(fs::exists(dir / "d" / "test.lnod"));
  const KvConfig manifest = KvConfig::load((dir / "a" / "manifest.txt").string());
  CHECK(manifest.get_string("config.generate.kind") == "burgers");
  CHECK(manifest.get_string("output.train.lnod.hash") == file_content_hash((dir / "a" / "train.lnod").string()));
}

TEST_CASE("frozen forward run matches the untrained model and reruns identically") {
  const fs::path& data = tiny_data();
  const fs::path dir = fresh_dir("frozen");
  const std::vector<std::string> args =
      with({"--seed", "4", "--override", "task=forward-darcy", "--override",
            "data.train=" + (data / "darcy" / "train.lnod").string(), "--override",
            "data.test=" + (data / "darcy" / "test.lnod").string(), "--override", "train.lr=0"},
           kTinyModel);
  REQUIRE(cli(with({"train", "--out", (dir / "a").string()}, args)).code == 0);
  REQUIRE(cli(with({"train", "--out", (dir / "b").string()}, args)).code == 0);
  CHECK(same_tree(dir / "a", dir / "b"));

  const ScaledModel trained = ScaledModel::load((dir / "a" / "model.lno").string());
  KvConfig kv = KvConfig::load((dir / "a" / "config.resolved").string());
  const TrainConfig tc = resolve_train_config(kv, "forward-darcy");
  ModelConfig mc;
  tc.apply_to(mc);
  CHECK(trained.model.parameters() == LnoModel(mc).parameters());
  const CsvTable metrics = parse_csv(slurp(dir / "a" / "metrics.csv"));
  const data::PdeDataset test = data::read_dataset((data / "darcy" / "test.lnod").string());
  CHECK(metrics.numbers(metrics.column("test"))[0] ==
        evaluate_scaled(trained, ExampleSet::from_vector(forward_examples(test)), MetricKind::RelativeL2));

  // Resolution generalization at the training resolution reproduces the train metric.
  const fs::path eval = dir / "eval";
  REQUIRE(cli({"eval", "--out", eval.string(), "--override", "task=resolution-gen", "--override",
               "eval.checkpoint=" + (dir / "a" / "model.lno").string(), "--override",
               "data.train=" + (data / "darcy" / "train.lnod").string(), "--override",
               "data.tests=" + (data / "darcy" / "test.lnod").string() + "," +
                   (data / "darcy" / "test_s13.lnod").string()})
              .code == 0);
  const CsvTable res = parse_csv(slurp(eval / "resolution.csv"));
  REQUIRE(res.rows.size() == 2);
  CHECK(res.rows[0][1] == metrics.rows[0][metrics.column("test")]);
  CHECK(res.rows[1][0] == "13");
  CHECK(std::isfinite(res.numbers(1)[1]));
}

TEST_CASE("completer and propagator runs with completer inputs") {
  const fs::path& data = tiny_data();
  const fs::path dir = fresh_dir("inverse");
  const std::vector<std::string> common = with({"--seed", "2", "--override",
                                                "data.train=" + (data / "burgers" / "train.lnod").string(),
                                                "--override", "data.test=" + (data / "burgers" / "test.lnod").string()},
                                               kTinyModel);
  const CliResult c = cli(with({"train", "--out", (dir / "c").string(), "--override", "task=completer", "--override",
                                "completer.ratios=0.5,0.25"},
                               common));
  REQUIRE(c.code == 0);
  const CsvTable cm = parse_csv(slurp(dir / "c" / "metrics.csv"));
  CHECK(cm.rows.size() == 2);
  CHECK(fs::exists(dir / "c" / "completer_r0.5.lno"));
  for (double v : cm.numbers(1)) CHECK(std::isfinite(v));

  const CliResult p = cli(with({"train", "--out", (dir / "p").string(), "--override", "task=propagator",
                                "--override", "propagator.completers=" + (dir / "c" / "completer_r0.5.lno").string()},
                               common));
  REQUIRE(p.code == 0);
  const CsvTable pm = parse_csv(slurp(dir / "p" / "propagator.csv"));
  REQUIRE(pm.rows.size() == 2);
  CHECK(pm.rows[0][0] == "ground-truth");
  CHECK(pm.rows[1][0] == "completer_r0.5");
  for (std::size_t col = 1; col < 4; ++col)
    for (double v : pm.numbers(col)) CHECK(std::isfinite(v));

  // Evaluating the saved propagator reuses the checkpoint and reproduces the table.
  const CliResult e = cli({"eval", "--out", (dir / "e").string(), "--override", "task=inverse-stage2", "--override",
                           "eval.checkpoint=" + (dir / "p" / "propagator.lno").string(), "--override",
                           "data.test=" + (data / "burgers" / "test.lnod").string(), "--override",
                           "propagator.completers=" + (dir / "c" / "completer_r0.5.lno").string()});
  REQUIRE(e.code == 0);
  CHECK(slurp(dir / "e" / "propagator.csv") == slurp(dir / "p" / "propagator.csv"));
}

TEST_CASE("sweeps produce one row per cell") {
  const fs::path& data = tiny_data();
  const fs::path dir = fresh_dir("sweep");
  const std::vector<std::string> common = with(
      {"--seed", "1", "--override", "sweep.tasks=forward-darcy", "--override",
       "data.train=" + (data / "darcy" / "train.lnod").string(), "--override",
       "data.test=" + (data / "darcy" / "test.lnod").string(), "--override", "train.epochs=1"},
      {});
  REQUIRE(cli(with({"sweep", "--out", (dir / "dw").string(), "--override", "task=depth-width-sweep", "--override",
                    "sweep.depths=1,2", "--override", "sweep.widths=8,16,32", "--override", "train.heads=2",
                    "--override", "train.latent_size=4"},
                   common))
              .code == 0);
  const CsvTable dw = parse_csv(slurp(dir / "dw" / "sweep.csv"));
  REQUIRE(dw.rows.size() == 6);
  const std::vector<double> params = dw.numbers(dw.column("param_count"));
  CHECK(params[0] < params[1]);
  CHECK(params[1] < params[2]);
  CHECK(params[3] < params[4]);
  CHECK(params[4] < params[5]);
  CHECK(fs::exists(dir / "dw" / "sweep_forward-darcy.svg"));

  const std::vector<std::string> latent = with({"--override", "task=latent-sweep", "--override",
                                                "sweep.latent_sizes=2,4", "--override", "train.width=8",
                                                "--override", "train.heads=2", "--override", "train.depth=1"},
                                               common);
  REQUIRE(cli(with({"sweep", "--out", (dir / "m1").string()}, latent)).code == 0);
  REQUIRE(cli(with({"sweep", "--out", (dir / "m2").string()}, latent)).code == 0);
  CHECK(count_lines(slurp(dir / "m1" / "sweep.csv")) == 3);
  CHECK(same_tree(dir / "m1", dir / "m2"));
  CHECK(count_of(slurp(dir / "m1" / "sweep.svg"), "<polyline") == 1);
}

TEST_CASE("plot command") {
  const fs::path dir = fresh_dir("plot");
  std::ofstream(dir / "good.csv") << "task,M,metric\na,8,0.5\na,64,0.2\nb,8,0.7\nb,64,0.4\n";
  std::ofstream(dir / "empty.csv") << "M,metric\n";
  std::ofstream(dir / "bad.csv") << "M,metric\n8,0.5\n16\n";
  const CliResult a = cli({"plot", "--out", (dir / "a").string(), (dir / "good.csv").string()});
  REQUIRE(a.code == 0);
  REQUIRE(cli({"plot", "--out", (dir / "b").string(), (dir / "good.csv").string()}).code == 0);
  CHECK(slurp(dir / "a" / "good.svg") == slurp(dir / "b" / "good.svg"));
  CHECK(count_of(slurp(dir / "a" / "good.svg"), "<polyline") == 2);

  const CliResult e = cli({"plot", "--out", (dir / "e").string(), (dir / "empty.csv").string()});
  CHECK(e.code == 1);
  CHECK_FALSE(fs::exists(dir / "e" / "empty.svg"));
  const CliResult p = cli({"plot", "--out", (dir / "p").string(), (dir / "bad.csv").string()});
  CHECK(p.code == 1);
  CHECK(p.err.find("line 3") != std::string::npos);
  CHECK(cli({"plot", "--out", (dir / "q").string(), (dir / "nope.csv").string()}).code == 2);
}

TEST_CASE("bench timing rows") {
  const BenchRow r = time_forward(256, 8, 2, 16, 3, 1);
  CHECK(r.n == 256);
  CHECK(r.t_encode > 0.0);
  CHECK(r.t_latent > 0.0);
  CHECK(r.t_decode > 0.0);
  CHECK(r.t_total > 0.0);
  const std::string csv = bench_csv({r});
  CHECK(csv.rfind("N,M,L,t_encode,t_latent,t_decode,t_total\n", 0) == 0);
  CHECK(count_lines(csv) == 2);
  CHECK_THROWS_AS(time_forward(0, 8, 2, 16, 3, 1), ContractError);
}
