#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lno/tensor.hpp"

namespace lno {

/// Little-endian byte sink.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  /// u32 length followed by the bytes.
  void str(std::string_view s);
  void f64s(std::span<const double> values);

  const std::vector<char>& bytes() const { return bytes_; }
  std::vector<char> take() { return std::move(bytes_); }
  std::size_t size() const { return bytes_.size(); }

 private:
  std::vector<char> bytes_;
};

/// Little-endian byte source; every read past the end throws FormatError
/// naming the offset where the data ran out.
class ByteReader {
 public:
  ByteReader(std::span<const char> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string raw(std::size_t n);
  std::string str();
  void f64s(std::span<double> out);

  std::size_t offset() const { return offset_; }
  bool at_end() const { return offset_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - offset_; }
  [[noreturn]] void fail(const std::string& message) const;

 private:
  void need(std::size_t n);

  std::span<const char> bytes_;
  std::string what_;
  std::size_t offset_ = 0;
};

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const char> bytes);

/// Git-style content hash: SHA-1 over "blob <size>\0" followed by the bytes, hex encoded.
std::string content_hash(std::span<const char> bytes);
std::string file_content_hash(const std::string& path);

struct NamedTensor {
  std::string name;
  Tensor value;
  bool operator==(const NamedTensor&) const = default;
};

/// "LNO1" tensor container: magic, u32-length-prefixed UTF-8 config text,
/// then tensors as (u32 name length, name, u32 rank, u64 dims..., f64 payload)
/// until end of file.
struct TensorArchive {
  std::string config_text;
  std::vector<NamedTensor> tensors;

  const Tensor* find(std::string_view name) const;
  bool operator==(const TensorArchive&) const = default;
};

std::vector<char> encode_archive(const TensorArchive& archive);
TensorArchive decode_archive(std::span<const char> bytes);
void write_archive(const std::string& path, const TensorArchive& archive);
TensorArchive read_archive(const std::string& path);

}  // namespace lno
