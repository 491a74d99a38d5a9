/**
 * @file ogf.hpp
 * @brief OGF v1, the binary on-disk format for FieldSeries.
 *
 * Layout (little-endian):
 *   "OGF1" | u32 version=1 | u32 n_lat | u32 n_lon | u32 T | i32 start_year |
 *   u8 start_month | u16-prefixed name | u16-prefixed units |
 *   f64 lat[n_lat] | f64 lon[n_lon] | ocean mask bits, row-major, LSB first,
 *   padded to a byte | f32 values [t][lat][lon], land = 0x7FC00000 |
 *   u32 CRC32 of every preceding byte.
 *
 * Values are stored as f32: a series round-trips bit-exactly when its ocean
 * values are representable in single precision (see quantize_f32).
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mlhc/grid.hpp"

namespace mlhc {

inline constexpr std::uint32_t ogf_version = 1;
inline constexpr std::uint32_t ogf_land_bits = 0x7FC00000u;

std::vector<std::uint8_t> ogf_encode(const FieldSeries& series);
FieldSeries ogf_decode(std::span<const std::uint8_t> bytes);

void ogf_write(const FieldSeries& series, const std::filesystem::path& path);
FieldSeries ogf_read(const std::filesystem::path& path);

/// Exact byte size of an OGF file for the given shape and metadata lengths.
std::size_t ogf_file_size(std::size_t n_lat, std::size_t n_lon, std::size_t n_time, std::size_t name_bytes,
                          std::size_t units_bytes);

/// Rounds every ocean value to the nearest float, so the series survives an
/// OGF round trip unchanged.
void quantize_f32(FieldSeries& series);

} // namespace mlhc
