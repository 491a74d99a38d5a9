#include "mlhc/bytes.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <zlib.h>

namespace mlhc {

std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t seed)
{
    uLong crc = seed;
    const std::uint8_t* p = bytes.data();
    std::size_t left = bytes.size();
    while (left > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
        crc = ::crc32(crc, p, chunk);
        p += chunk;
        left -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

void ByteWriter::u16(std::uint16_t v)
{
    buf_.push_back(static_cast<std::uint8_t>(v));
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v)
{
    for (int k = 0; k < 4; ++k)
        buf_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

void ByteWriter::u64(std::uint64_t v)
{
    for (int k = 0; k < 8; ++k)
        buf_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str16(std::string_view s)
{
    if (s.size() > 0xFFFF)
        throw Error("string too long for u16 length prefix");
    u16(static_cast<std::uint16_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
}

void ByteReader::need(std::size_t n)
{
    if (data_.size() - pos_ < n)
        throw ParseError(ParseError::Kind::truncated, what_ + ": truncated at byte " + std::to_string(pos_));
}

std::uint8_t ByteReader::u8()
{
    need(1);
    return data_[pos_++];
}

std::uint16_t ByteReader::u16()
{
    need(2);
    const auto v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
}

std::uint32_t ByteReader::u32()
{
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k)
        v |= static_cast<std::uint32_t>(data_[pos_ + static_cast<std::size_t>(k)]) << (8 * k);
    pos_ += 4;
    return v;
}

std::uint64_t ByteReader::u64()
{
    need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k)
        v |= static_cast<std::uint64_t>(data_[pos_ + static_cast<std::size_t>(k)]) << (8 * k);
    pos_ += 8;
    return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str16()
{
    const auto n = u16();
    auto r = raw(n);
    return {reinterpret_cast<const char*>(r.data()), r.size()};
}

std::span<const std::uint8_t> ByteReader::raw(std::size_t n)
{
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw MissingInputError("cannot open '" + path.string() + "'");
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(size);
    if (size > 0)
        in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in)
        throw Error("failed reading '" + path.string() + "'");
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error("failed writing '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    return {bytes.begin(), bytes.end()};
}

void write_text_file(const std::filesystem::path& path, std::string_view text)
{
    write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::span<const std::uint8_t> verify_crc_trailer(std::span<const std::uint8_t> bytes, const std::string& what)
{
    if (bytes.size() < 4)
        throw ParseError(ParseError::Kind::truncated, what + ": truncated (no checksum)");
    auto body = bytes.first(bytes.size() - 4);
    ByteReader tail(bytes.last(4), what);
    if (tail.u32() != crc32(body))
        throw ParseError(ParseError::Kind::checksum_mismatch, what + ": checksum mismatch");
    return body;
}

std::string crc_hex(std::uint32_t crc)
{
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", crc);
    return buf;
}

std::string file_crc_hex(const std::filesystem::path& path) { return crc_hex(crc32(read_file_bytes(path))); }

} // namespace mlhc
