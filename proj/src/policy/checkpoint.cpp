#include "reflect/policy/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "reflect/error.hpp"

namespace reflect::policy {

namespace {
constexpr char kMagic[8] = {'R', 'F', 'L', 'X', 'C', 'K', 'P', 'T'};
}

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::bytes(const void* data, std::size_t size) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  buf_.insert(buf_.end(), p, p + size);
}

void ByteWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void ByteReader::need(std::size_t n) const {
  if (size_ - pos_ < n) throw FormatError("truncated binary data");
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
  const std::uint32_t n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
  pos_ += n;
  return s;
}

void ByteReader::bytes(void* out, std::size_t size) {
  need(size);
  std::memcpy(out, data_ + pos_, size);
  pos_ += size;
}

std::vector<std::uint8_t> serialize(const PolicyParams& params) {
  ByteWriter w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  const auto& c = params.config();
  for (const int v : {c.layers, c.width, c.heads, c.context, c.ffn_mult}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u32(static_cast<std::uint32_t>(params.vocab().size()));
  for (const auto& t : params.vocab().tokens()) w.str(t);
  const auto& tensors = params.layout().tensors;
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.rows));
    w.u32(static_cast<std::uint32_t>(t.cols));
    for (std::size_t i = 0; i < t.size(); ++i) w.f64(params.data()[t.offset + i]);
  }
  const std::uint64_t h = fnv1a(w.buffer().data(), w.buffer().size());
  w.u64(h);
  return std::move(w.buffer());
}

PolicyParams deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kMagic + 12 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a policy checkpoint");
  }
  const std::size_t body = bytes.size() - 8;
  ByteReader tail(bytes.data() + body, 8);
  if (tail.u64() != fnv1a(bytes.data(), body)) throw FormatError("checkpoint checksum mismatch");

  ByteReader r(bytes.data(), body);
  char magic[8];
  r.bytes(magic, sizeof magic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig c;
  c.layers = static_cast<int>(r.u32());
  c.width = static_cast<int>(r.u32());
  c.heads = static_cast<int>(r.u32());
  c.context = static_cast<int>(r.u32());
  c.ffn_mult = static_cast<int>(r.u32());
  const std::uint32_t ntok = r.u32();
  std::vector<std::string> tokens;
  for (std::uint32_t i = 0; i < ntok; ++i) tokens.push_back(r.str());
  PolicyParams params(c, Vocab(std::move(tokens)));
  const auto& tensors = params.layout().tensors;
  if (r.u32() != tensors.size()) throw FormatError("tensor count mismatch");
  for (const auto& t : tensors) {
    if (r.str() != t.name || r.u32() != t.rows || r.u32() != t.cols) {
      throw FormatError("tensor '" + t.name + "' has an unexpected name or shape");
    }
    for (std::size_t i = 0; i < t.size(); ++i) params.data()[t.offset + i] = r.f64();
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes in checkpoint");
  return params;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot open " + tmp + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FileError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params) {
  write_file_bytes(path, serialize(params));
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  return deserialize(read_file_bytes(path));
}

}  // namespace reflect::policy
