#include <algorithm>
#include <chrono>
#include <cstdio>

#include "lno/error.hpp"
#include "lno/pipelines.hpp"

namespace lno::pipelines {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Smallest observable positive step of the clock.
double timer_resolution() {
  double best = 1.0;
  for (int i = 0; i < 50; ++i) {
    const Clock::time_point a = Clock::now();
    Clock::time_point b = Clock::now();
    while (b == a) b = Clock::now();
    best = std::min(best, std::chrono::duration<double>(b - a).count());
  }
  return best;
}

}  // namespace

BenchRow time_forward(std::size_t n, std::size_t m, std::size_t l, std::size_t width, std::size_t repetitions,
                      std::uint64_t seed) {
  if (n == 0 || repetitions == 0) throw ContractError("benchmark needs N > 0 and at least one repetition");
  ModelConfig mc;
  mc.width = width;
  mc.latent_size = m;
  mc.depth = l;
  mc.heads = 4;
  mc.seed = seed;
  const LnoModel model(mc);

  Rng rng(seed, 0x42454e4348);
  Tensor pos = Tensor::matrix(n, 2), val = Tensor::matrix(n, 1);
  for (double& v : pos.data()) v = rng.uniform();
  for (double& v : val.data()) v = rng.normal();
  const SampleSequence input(pos, val);

  std::vector<double> enc, lat, dec, tot;
  // One untimed warm-up pass so allocation and cache effects do not land in the first sample.
  for (std::size_t rep = 0; rep <= repetitions; ++rep) {
    Tape tape;
    const BoundModel bound = model.bind(tape, false);
    const Clock::time_point t0 = Clock::now();
    const Embedding emb = embed_inputs(bound, input);
    const Var z0 = phca_encode(emb.positions, emb.values, bound.phca.encoder_projector, bound.phca.encoder_value);
    const double te = seconds_since(t0);
    const Clock::time_point t1 = Clock::now();
    const Var z = latent_forward(z0, bound.blocks, mc.heads, mc.attention);
    const double tl = seconds_since(t1);
    const Clock::time_point t2 = Clock::now();
    const Var out = phca_decode(bound, pos, z);
    const double td = seconds_since(t2);
    if (!all_finite(out.value())) throw BenchError("benchmark forward pass produced non-finite values");
    if (rep == 0) continue;
    enc.push_back(te);
    lat.push_back(tl);
    dec.push_back(td);
    tot.push_back(te + tl + td);
  }
  BenchRow row{n, m, l, median(enc), median(lat), median(dec), median(tot)};
  const double res = timer_resolution();
  if (row.t_total < 100.0 * res) {
    throw BenchError("forward pass at N=" + std::to_string(n) + " took " + format_double(row.t_total) +
                     " s, too close to the timer resolution " + format_double(res) + " s; use a larger N");
  }
  return row;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = "N,M,L,t_encode,t_latent,t_decode,t_total\n";
  char buf[256];
  for (const BenchRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.9f,%.9f,%.9f,%.9f\n", r.n, r.m, r.l, r.t_encode, r.t_latent,
                  r.t_decode, r.t_total);
    out += buf;
  }
  return out;
}

}  // namespace lno::pipelines
