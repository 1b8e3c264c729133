#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace auxvae::io {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(const void* data, std::size_t size);
Digest sha256(const std::string& text);
// Throws IoError when the file cannot be read.
Digest sha256_file(const std::filesystem::path& path);
std::string to_hex(const Digest& digest);

// Little-endian primitive encoding over an in-memory buffer.
class BinaryWriter {
 public:
  void bytes(const void* data, std::size_t size);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f32s(const float* data, std::size_t count);
  // u32 length prefix followed by the raw bytes.
  void str(const std::string& s);

  const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }
  // Writes the buffer to path (IoError on failure).
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

class BinaryReader {
 public:
  // Loads the whole file (IoError on failure).
  static BinaryReader open(const std::filesystem::path& path);
  explicit BinaryReader(std::vector<std::uint8_t> data, std::string origin = "buffer");

  void bytes(void* out, std::size_t size);
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  void f32s(float* out, std::size_t count);
  std::string str();

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  // IoError unless every byte was consumed.
  void expect_end() const;
  const std::string& origin() const noexcept { return origin_; }

 private:
  std::vector<std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string origin_;
};

// Whole-file text helpers (IoError on failure).
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace auxvae::io
