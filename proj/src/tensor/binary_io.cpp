#include "lno/binary_io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lno/error.hpp"

namespace lno {

namespace {

constexpr std::string_view kArchiveMagic = "LNO1";

template <typename T>
void put_le(std::vector<char>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

void ByteWriter::u32(std::uint32_t v) { put_le(bytes_, v); }
void ByteWriter::u64(std::uint64_t v) { put_le(bytes_, v); }
void ByteWriter::f64(double v) { put_le(bytes_, std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  raw(s);
}

void ByteWriter::f64s(std::span<const double> values) {
  bytes_.reserve(bytes_.size() + 8 * values.size());
  for (double v : values) f64(v);
}

void ByteReader::fail(const std::string& message) const {
  throw FormatError(what_ + ": " + message + " at offset " + std::to_string(offset_));
}

void ByteReader::need(std::size_t n) {
  if (n > remaining()) {
    fail("truncated data (need " + std::to_string(n) + " bytes, have " + std::to_string(remaining()) + ")");
  }
}

std::uint8_t ByteReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(bytes_[offset_++]);
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<std::uint8_t>(bytes_[offset_ + i])} << (8 * i);
  offset_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<std::uint8_t>(bytes_[offset_ + i])} << (8 * i);
  offset_ += 8;
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::raw(std::size_t n) {
  need(n);
  std::string s(bytes_.data() + offset_, n);
  offset_ += n;
  return s;
}

std::string ByteReader::str() {
  const std::uint32_t n = u32();
  return raw(n);
}

void ByteReader::f64s(std::span<double> out) {
  need(8 * out.size());
  for (double& v : out) v = f64();
}

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const char> bytes) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  // Write to a sibling temp file first so a failed write never clobbers an existing file.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, p, ec);
  if (ec) throw IoError("cannot move '" + tmp + "' into place: " + ec.message());
}

std::string content_hash(std::span<const char> bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string file_content_hash(const std::string& path) { return content_hash(read_file(path)); }

const Tensor* TensorArchive::find(std::string_view name) const {
  for (const NamedTensor& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

std::vector<char> encode_archive(const TensorArchive& archive) {
  ByteWriter w;
  w.raw(kArchiveMagic);
  w.str(archive.config_text);
  for (const NamedTensor& t : archive.tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) w.u64(d);
    w.f64s(t.value.data());
  }
  return w.take();
}

TensorArchive decode_archive(std::span<const char> bytes) {
  ByteReader r(bytes, "tensor archive");
  if (r.remaining() < kArchiveMagic.size() || r.raw(kArchiveMagic.size()) != kArchiveMagic) {
    throw FormatError("tensor archive: bad magic, expected \"LNO1\" at offset 0");
  }
  TensorArchive archive;
  archive.config_text = r.str();
  while (!r.at_end()) {
    NamedTensor t;
    t.name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) r.fail("tensor '" + t.name + "' has invalid rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = r.u64();
      if (d > (std::size_t{1} << 40)) r.fail("tensor '" + t.name + "' has implausible dimension");
      numel *= d;
    }
    if (numel * 8 > r.remaining()) r.fail("truncated payload for tensor '" + t.name + "'");
    std::vector<double> data(numel);
    r.f64s(data);
    t.value = Tensor(std::move(shape), std::move(data));
    archive.tensors.push_back(std::move(t));
  }
  return archive;
}

void write_archive(const std::string& path, const TensorArchive& archive) {
  write_file(path, encode_archive(archive));
}

TensorArchive read_archive(const std::string& path) { return decode_archive(read_file(path)); }

}  // namespace lno
