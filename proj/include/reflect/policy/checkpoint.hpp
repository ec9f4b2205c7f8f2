#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "reflect/policy/model.hpp"

namespace reflect::policy {

// Binary container, all integers and doubles little-endian:
//   magic "RFLXCKPT", u32 version,
//   u32 layers, width, heads, context, ffn_mult,
//   u32 token count, then per token u32 length + bytes,
//   u32 tensor count, then per tensor u32 name length + name, u32 rows,
//       u32 cols, rows*cols IEEE-754 binary64,
//   u64 FNV-1a hash of all preceding bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize(const PolicyParams& params);
// Throws FormatError on a bad magic, version, shape or checksum.
PolicyParams deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::filesystem::path& path);  // FileError, FormatError

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t size);

// Little-endian byte writer/reader shared by the binary formats.
class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void bytes(const void* data, std::size_t size);
  void str(const std::string& s);
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  void bytes(void* out, std::size_t size);
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  void need(std::size_t n) const;
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace reflect::policy
