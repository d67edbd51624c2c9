#include "lno/binary_io.hpp"
#include "lno/data.hpp"
#include "lno/error.hpp"

namespace lno::data {

void PdeDataset::validate() const {
  if (pairs.empty()) return;
  const SamplePair& first = pairs.front();
  const std::size_t d_pos = first.input.pos_dim();
  const std::size_t n = first.input.value_dim();
  const std::size_t n_out = first.output.value_dim();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const SamplePair& p = pairs[i];
    p.input.validate();
    p.output.validate();
    if (p.input.pos_dim() != d_pos || p.output.pos_dim() != d_pos || p.input.value_dim() != n ||
        p.output.value_dim() != n_out) {
      throw DimensionError("pair " + std::to_string(i) + " has (d_pos, n, n_out) = (" +
                           std::to_string(p.input.pos_dim()) + "/" + std::to_string(p.output.pos_dim()) + ", " +
                           std::to_string(p.input.value_dim()) + ", " + std::to_string(p.output.value_dim()) +
                           "), dataset uses (" + std::to_string(d_pos) + ", " + std::to_string(n) + ", " +
                           std::to_string(n_out) + ")");
    }
  }
}

namespace {

constexpr char kMagic[] = "LNOD";

void put_sequence(ByteWriter& w, const SampleSequence& s) {
  w.u64(s.size());
  w.u64(s.pos_dim());
  w.u64(s.value_dim());
  w.f64s(s.positions.data());
  w.f64s(s.values.data());
}

SampleSequence get_sequence(ByteReader& r) {
  const std::size_t rows = r.u64();
  const std::size_t d_pos = r.u64();
  const std::size_t n = r.u64();
  // Guard the allocation against corrupt headers before trusting the counts.
  const std::size_t cells = rows * (d_pos + n);
  if ((d_pos + n != 0 && cells / (d_pos + n) != rows) || cells > r.remaining() / 8) {
    r.fail("sequence of " + std::to_string(rows) + " rows does not fit in the remaining bytes");
  }
  Tensor pos = Tensor::matrix(rows, d_pos);
  Tensor val = Tensor::matrix(rows, n);
  r.f64s(pos.data());
  r.f64s(val.data());
  return SampleSequence(std::move(pos), std::move(val));
}

}  // namespace

std::vector<char> encode_dataset(const PdeDataset& ds) {
  ds.validate();
  ByteWriter w;
  w.raw(kMagic);
  w.u8(kDatasetVersion);
  w.str(ds.config_echo);
  w.u32(static_cast<std::uint32_t>(ds.grid.dims.size()));
  for (std::size_t d : ds.grid.dims) w.u64(d);
  w.u32(static_cast<std::uint32_t>(ds.grid.spacing.size()));
  w.f64s(ds.grid.spacing);
  w.u64(ds.pairs.size());
  for (const SamplePair& p : ds.pairs) {
    ByteWriter body;
    put_sequence(body, p.input);
    put_sequence(body, p.output);
    w.u64(body.size());
    w.raw(std::string_view(body.bytes().data(), body.size()));
  }
  return w.take();
}

PdeDataset decode_dataset(std::span<const char> bytes) {
  ByteReader r(bytes, "dataset");
  if (r.remaining() < 4 || r.raw(4) != kMagic) {
    throw FormatError("dataset header at offset 0: expected \"LNOD\"");
  }
  const std::size_t version_at = r.offset();
  const std::uint8_t version = r.u8();
  if (version != kDatasetVersion) {
    throw FormatError("dataset version " + std::to_string(version) + " at offset " + std::to_string(version_at) +
                      " is not supported (expected " + std::to_string(kDatasetVersion) + ")");
  }
  PdeDataset ds;
  ds.config_echo = r.str();
  const std::uint32_t rank = r.u32();
  if (rank > 8) r.fail("grid rank " + std::to_string(rank) + " is implausible");
  for (std::uint32_t i = 0; i < rank; ++i) ds.grid.dims.push_back(r.u64());
  const std::uint32_t nspacing = r.u32();
  if (nspacing > 8) r.fail("grid spacing count " + std::to_string(nspacing) + " is implausible");
  ds.grid.spacing.resize(nspacing);
  r.f64s(ds.grid.spacing);
  const std::uint64_t count = r.u64();
  if (count > r.remaining() / 8) r.fail("pair count " + std::to_string(count) + " exceeds the file size");
  ds.pairs.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t length = r.u64();
    const std::size_t start = r.offset();
    if (length > r.remaining()) {
      r.fail("pair " + std::to_string(i) + " declares " + std::to_string(length) + " bytes but only " +
             std::to_string(r.remaining()) + " remain (truncated)");
    }
    SamplePair p;
    p.input = get_sequence(r);
    p.output = get_sequence(r);
    if (r.offset() - start != length) {
      r.fail("pair " + std::to_string(i) + " length prefix " + std::to_string(length) + " does not match its body");
    }
    ds.pairs.push_back(std::move(p));
  }
  if (!r.at_end()) r.fail("unexpected trailing bytes after the last pair");
  try {
    ds.validate();
  } catch (const DimensionError& e) {
    throw FormatError(std::string("dataset pairs are inconsistent: ") + e.what());
  }
  return ds;
}

void write_dataset(const PdeDataset& ds, const std::string& path) { write_file(path, encode_dataset(ds)); }

PdeDataset read_dataset(const std::string& path) {
  const std::vector<char> bytes = read_file(path);
  return decode_dataset(bytes);
}

PdeDataset generate_burgers_dataset(const BurgersConfig& config, std::size_t count) {
  config.validate();
  PdeDataset ds;
  KvConfig echo;
  config.write(echo);
  echo.set("dataset.kind", "burgers");
  echo.set("dataset.count", static_cast<std::uint64_t>(count));
  ds.config_echo = echo.serialize();
  ds.grid.dims = {config.nt, config.nx};
  ds.grid.spacing = {1.0 / static_cast<double>(config.nt - 1), 1.0 / static_cast<double>(config.nx)};

  const Rng root(config.seed);
  const std::vector<double> x = spatial_grid(config.nx);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = root.split(i);
    std::vector<double> u0;
    Tensor field;
    try {
      u0 = sample_periodic_gp(config, rng);
      field = solve_burgers(u0, config);
    } catch (const Error& e) {
      throw GenerationError("burgers sample " + std::to_string(i) + ": " + e.what());
    }
    // The initial condition lives on the t = 0 slice of the space-time domain.
    Tensor pos = Tensor::matrix(config.nx, 2);
    Tensor val = Tensor::matrix(config.nx, 1);
    for (std::size_t j = 0; j < config.nx; ++j) {
      pos(j, 0) = x[j];
      val(j, 0) = u0[j];
    }
    ds.pairs.push_back({SampleSequence(std::move(pos), std::move(val)), field_rows(field, {0, config.nt - 1})});
  }
  return ds;
}

PdeDataset generate_darcy_dataset(const DarcyConfig& config, std::size_t count) {
  config.validate();
  PdeDataset ds;
  KvConfig echo;
  config.write(echo);
  echo.set("dataset.kind", "darcy");
  echo.set("dataset.count", static_cast<std::uint64_t>(count));
  ds.config_echo = echo.serialize();
  const double h = 1.0 / static_cast<double>(config.s - 1);
  ds.grid.dims = {config.s, config.s};
  ds.grid.spacing = {h, h};

  const Rng root(config.seed);
  const Tensor pos = square_grid_positions(config.s);
  const std::size_t n = config.s * config.s;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = root.split(i);
    DarcySample sample;
    try {
      sample = generate_darcy(config, rng);
    } catch (const Error& e) {
      throw GenerationError("darcy sample " + std::to_string(i) + ": " + e.what());
    }
    ds.pairs.push_back({SampleSequence(pos, sample.coefficient.reshaped({n, 1})),
                        SampleSequence(pos, sample.solution.reshaped({n, 1}))});
  }
  return ds;
}

Tensor burgers_field(const SamplePair& pair, const GridMeta& grid) {
  if (grid.dims.size() != 2 || pair.output.size() != grid.dims[0] * grid.dims[1] || pair.output.value_dim() != 1) {
    throw DimensionError("pair output does not cover the " + shape_string(grid.dims) + " grid");
  }
  return pair.output.values.reshaped({grid.dims[0], grid.dims[1]});
}

}  // namespace lno::data
