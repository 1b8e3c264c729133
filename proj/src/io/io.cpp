#include "auxvae/io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "auxvae/error.hpp"

namespace auxvae::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written by byte copy on little-endian hosts");

Digest sha256(const void* data, std::size_t size) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(data, size, out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
    throw IoError("sha256: digest computation failed");
  }
  return out;
}

Digest sha256(const std::string& text) { return sha256(text.data(), text.size()); }

Digest sha256_file(const std::filesystem::path& path) {
  const std::string content = read_text(path);
  return sha256(content);
}

std::string to_hex(const Digest& digest) {
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (auto b : digest) {
    s += hex[b >> 4];
    s += hex[b & 15];
  }
  return s;
}

void BinaryWriter::bytes(const void* data, std::size_t size) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  buf_.insert(buf_.end(), p, p + size);
}

void BinaryWriter::u32(std::uint32_t v) { bytes(&v, sizeof v); }
void BinaryWriter::u64(std::uint64_t v) { bytes(&v, sizeof v); }
void BinaryWriter::f32(float v) { bytes(&v, sizeof v); }
void BinaryWriter::f32s(const float* data, std::size_t count) { bytes(data, count * sizeof(float)); }

void BinaryWriter::str(const std::string& s) {
  if (s.size() > UINT32_MAX) throw IoError("string too long for a u32 length prefix");
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void BinaryWriter::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  if (!f) throw IoError("write to '" + path.string() + "' failed");
}

BinaryReader BinaryReader::open(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return BinaryReader(std::move(data), path.string());
}

BinaryReader::BinaryReader(std::vector<std::uint8_t> data, std::string origin)
    : data_(std::move(data)), origin_(std::move(origin)) {}

void BinaryReader::bytes(void* out, std::size_t size) {
  if (size > remaining()) {
    throw IoError(origin_ + ": truncated (wanted " + std::to_string(size) + " bytes at offset " +
                  std::to_string(pos_) + ", " + std::to_string(remaining()) + " left)");
  }
  std::memcpy(out, data_.data() + pos_, size);
  pos_ += size;
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v;
  bytes(&v, sizeof v);
  return v;
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  bytes(&v, sizeof v);
  return v;
}

float BinaryReader::f32() {
  float v;
  bytes(&v, sizeof v);
  return v;
}

void BinaryReader::f32s(float* out, std::size_t count) {
  if (count > remaining() / sizeof(float)) {
    throw IoError(origin_ + ": truncated float block of " + std::to_string(count) + " values");
  }
  bytes(out, count * sizeof(float));
}

std::string BinaryReader::str() {
  const std::uint32_t n = u32();
  if (n > remaining()) throw IoError(origin_ + ": string length " + std::to_string(n) + " exceeds file");
  std::string s(n, '\0');
  bytes(s.data(), n);
  return s;
}

void BinaryReader::expect_end() const {
  if (remaining() != 0) {
    throw IoError(origin_ + ": " + std::to_string(remaining()) + " unexpected trailing bytes");
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace auxvae::io
