/**
 * @file bytes.hpp
 * @brief Little-endian byte buffers and CRC32 used by the binary formats.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlhc/error.hpp"

namespace mlhc {

std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t seed = 0);

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void u64(std::uint64_t v);
    void f32(float v);
    void f64(double v);
    /// u16 length prefix followed by the raw UTF-8 bytes.
    void str16(std::string_view s);
    void raw(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

    /// Appends CRC32 of everything written so far.
    void crc_trailer() { u32(crc32(buf_)); }

    const std::vector<std::uint8_t>& bytes() const noexcept { return buf_; }
    std::size_t size() const noexcept { return buf_.size(); }

private:
    std::vector<std::uint8_t> buf_;
};

/// Sequential reader; running past the end throws ParseError(truncated).
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string what) : data_(bytes), what_(std::move(what)) {}

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    std::uint64_t u64();
    float f32();
    double f64();
    std::string str16();
    std::span<const std::uint8_t> raw(std::size_t n);

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

private:
    void need(std::size_t n);

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    std::string what_;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text_file(const std::filesystem::path& path);
/// Creates parent directories as needed.
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Checks and strips a trailing CRC32; throws ParseError on mismatch.
std::span<const std::uint8_t> verify_crc_trailer(std::span<const std::uint8_t> bytes, const std::string& what);

/// CRC32 of a file's contents as 8 lowercase hex digits.
std::string file_crc_hex(const std::filesystem::path& path);
std::string crc_hex(std::uint32_t crc);

} // namespace mlhc
