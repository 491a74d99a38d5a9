#include "mlhc/ogf.hpp"

#include <bit>
#include <cmath>

#include "mlhc/bytes.hpp"

namespace mlhc {

namespace {

constexpr std::uint8_t magic[4] = {'O', 'G', 'F', '1'};

} // namespace

std::size_t ogf_file_size(std::size_t n_lat, std::size_t n_lon, std::size_t n_time, std::size_t name_bytes,
                          std::size_t units_bytes)
{
    const std::size_t cells = n_lat * n_lon;
    return 4 + 4 + 3 * 4 + 4 + 1 + (2 + name_bytes) + (2 + units_bytes) + 8 * (n_lat + n_lon) + (cells + 7) / 8 +
           4 * n_time * cells + 4;
}

std::vector<std::uint8_t> ogf_encode(const FieldSeries& series)
{
    const GeoGrid& g = *series.grid();
    ByteWriter w;
    w.raw(magic);
    w.u32(ogf_version);
    w.u32(static_cast<std::uint32_t>(g.n_lat()));
    w.u32(static_cast<std::uint32_t>(g.n_lon()));
    w.u32(static_cast<std::uint32_t>(series.length()));
    w.i32(series.time().start().year);
    w.u8(static_cast<std::uint8_t>(series.time().start().month));
    w.str16(series.name());
    w.str16(series.units());
    for (double v : g.lat())
        w.f64(v);
    for (double v : g.lon())
        w.f64(v);

    std::vector<std::uint8_t> bits((g.n_cells() + 7) / 8, 0);
    for (std::size_t c = 0; c < g.n_cells(); ++c)
        if (g.is_ocean(c))
            bits[c / 8] |= static_cast<std::uint8_t>(1u << (c % 8));
    w.raw(bits);

    for (int t = 0; t < series.length(); ++t) {
        const auto s = series.slice(t);
        for (std::size_t c = 0; c < g.n_cells(); ++c) {
            if (!g.is_ocean(c)) {
                w.u32(ogf_land_bits);
                continue;
            }
            const auto f = static_cast<float>(s[c]);
            if (!std::isfinite(f))
                throw NumericalError("ogf_encode: '" + series.name() + "' has a value not representable as f32");
            w.f32(f);
        }
    }
    w.crc_trailer();
    return w.bytes();
}

FieldSeries ogf_decode(std::span<const std::uint8_t> bytes)
{
    using Kind = ParseError::Kind;
    const std::string what = "OGF";
    ByteReader r(bytes, what);
    const auto m = r.raw(4);
    if (!std::equal(m.begin(), m.end(), std::begin(magic)))
        throw ParseError(Kind::bad_magic, "OGF: bad magic");
    const auto version = r.u32();
    if (version != ogf_version)
        throw ParseError(Kind::bad_version, "OGF: unsupported version " + std::to_string(version));
    const std::size_t n_lat = r.u32();
    const std::size_t n_lon = r.u32();
    const std::size_t n_time = r.u32();
    const int start_year = r.i32();
    const int start_month = r.u8();
    std::string name = r.str16();
    std::string units = r.str16();

    const std::size_t expected = ogf_file_size(n_lat, n_lon, n_time, name.size(), units.size());
    if (bytes.size() < expected)
        throw ParseError(Kind::truncated, "OGF: truncated (" + std::to_string(bytes.size()) + " of " +
                                              std::to_string(expected) + " bytes)");
    if (bytes.size() > expected)
        throw ParseError(Kind::shape_mismatch, "OGF: file size does not match the declared shape");
    verify_crc_trailer(bytes, what);
    if (n_lat == 0 || n_lon == 0 || n_time == 0 || start_month < 1 || start_month > 12)
        throw ParseError(Kind::shape_mismatch, "OGF: degenerate header");

    std::vector<double> lat(n_lat), lon(n_lon);
    for (auto& v : lat)
        v = r.f64();
    for (auto& v : lon)
        v = r.f64();
    const std::size_t cells = n_lat * n_lon;
    const auto bits = r.raw((cells + 7) / 8);
    std::vector<std::uint8_t> mask(cells);
    for (std::size_t c = 0; c < cells; ++c)
        mask[c] = (bits[c / 8] >> (c % 8)) & 1u;

    GridPtr grid;
    try {
        grid = std::make_shared<const GeoGrid>(std::move(lat), std::move(lon), std::move(mask));
    } catch (const Error& e) {
        throw ParseError(Kind::shape_mismatch, std::string("OGF: invalid grid: ") + e.what());
    }

    std::vector<double> values(n_time * cells);
    for (std::size_t k = 0; k < values.size(); ++k) {
        const auto raw = r.u32();
        const bool ocean = grid->is_ocean(k % cells);
        if (!ocean) {
            if (raw != ogf_land_bits)
                throw ParseError(Kind::shape_mismatch, "OGF: land cell without sentinel");
            values[k] = land_value;
            continue;
        }
        const float f = std::bit_cast<float>(raw);
        if (!std::isfinite(f))
            throw ParseError(Kind::shape_mismatch, "OGF: non-finite ocean value");
        values[k] = f;
    }
    return FieldSeries(std::move(grid), TimeAxis({start_year, start_month}, static_cast<int>(n_time)),
                       std::move(name), std::move(units), std::move(values));
}

void ogf_write(const FieldSeries& series, const std::filesystem::path& path)
{
    write_file_bytes(path, ogf_encode(series));
}

FieldSeries ogf_read(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    try {
        return ogf_decode(bytes);
    } catch (ParseError& e) {
        throw ParseError(e.kind(), path.string() + ": " + e.what());
    }
}

void quantize_f32(FieldSeries& series)
{
    for (std::size_t c : series.grid()->ocean_cells())
        for (int t = 0; t < series.length(); ++t) {
            double& v = series.at(t, c);
            v = static_cast<double>(static_cast<float>(v));
        }
}

} // namespace mlhc
