#include "mlhc/concepts.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mlhc/error.hpp"

namespace mlhc {

namespace {

void require_aligned(const FieldSeries& a, const FieldSeries& b, const char* op)
{
    if (!same_grid(a.grid(), b.grid()) || !(a.time() == b.time()))
        throw Error(std::string(op) + ": '" + a.name() + "' and '" + b.name() + "' are not aligned");
}

FieldSeries like(const FieldSeries& ref, int first, int count, const char* name, const char* units)
{
    return FieldSeries(ref.grid(), ref.time().slice(first, count), name, units);
}

} // namespace

const FieldSeries& ConceptSet::operator[](std::size_t k) const
{
    switch (k) {
    case 0: return vos2;
    case 1: return von2;
    case 2: return vohfe;
    case 3: return mxl_tendency;
    }
    throw Error("ConceptSet: index out of range");
}

FieldSeries& ConceptSet::operator[](std::size_t k)
{
    return const_cast<FieldSeries&>(std::as_const(*this)[k]);
}

FieldSeries linear_eos_density_delta(const FieldSeries& dT, const FieldSeries& dS, const PhysConstants& k)
{
    require_aligned(dT, dS, "linear_eos_density_delta");
    FieldSeries out = like(dT, 0, dT.length(), "drho", "kg m-3");
    for (int t = 0; t < dT.length(); ++t)
        for (std::size_t c : dT.grid()->ocean_cells())
            out.at(t, c) = k.rho0 * (-k.alpha * dT.at(t, c) + k.beta * dS.at(t, c));
    return out;
}

FieldSeries vertical_shear(const FieldSeries& u_ml, const FieldSeries& v_ml, const FieldSeries& h)
{
    require_aligned(u_ml, v_ml, "vertical_shear");
    require_aligned(u_ml, h, "vertical_shear");
    FieldSeries out = like(h, 0, h.length(), "vos2", "s-2");
    for (int t = 0; t < h.length(); ++t) {
        for (std::size_t c : h.grid()->ocean_cells()) {
            const double depth = h.at(t, c);
            if (!(depth > 0.0))
                throw Error("vertical_shear: non-positive mixed layer depth at t=" + std::to_string(t) +
                            " cell=" + std::to_string(c));
            const double du = u_ml.at(t, c) / depth;
            const double dv = v_ml.at(t, c) / depth;
            out.at(t, c) = du * du + dv * dv;
        }
    }
    return out;
}

FieldSeries buoyancy_frequency(const FieldSeries& dT, const FieldSeries& dS, const PhysConstants& k)
{
    FieldSeries out = linear_eos_density_delta(dT, dS, k);
    out.rename("von2", "s-2");
    const double scale = -(k.g / k.rho0) / k.transition_thickness;
    for (int t = 0; t < out.length(); ++t)
        for (std::size_t c : out.grid()->ocean_cells())
            out.at(t, c) *= scale;
    return out;
}

FieldSeries mld_tendency(const FieldSeries& h, const PhysConstants& k)
{
    if (h.length() < 2)
        throw Error("mld_tendency: need at least two months");
    FieldSeries out = like(h, 1, h.length() - 1, "mxl_tendency", "m s-1");
    for (int t = 1; t < h.length(); ++t)
        for (std::size_t c : h.grid()->ocean_cells())
            out.at(t - 1, c) = (h.at(t, c) - h.at(t - 1, c)) / k.seconds_per_month;
    return out;
}

FieldSeries heat_flux_entrainment(const FieldSeries& h, const FieldSeries& dT, const PhysConstants& k)
{
    require_aligned(h, dT, "heat_flux_entrainment");
    const FieldSeries dhdt = mld_tendency(h, k);
    FieldSeries out = like(h, 1, h.length() - 1, "vohfe", "W m-2");
    for (int t = 0; t < out.length(); ++t) {
        for (std::size_t c : h.grid()->ocean_cells()) {
            const double we = std::max(dhdt.at(t, c), 0.0);
            out.at(t, c) = we > 0.0 ? k.rho0 * k.c_p * we * dT.at(t + 1, c) : 0.0;
        }
    }
    return out;
}

FieldSeries wind_stress_curl(const FieldSeries& taux, const FieldSeries& tauy, const PhysConstants& k)
{
    require_aligned(taux, tauy, "wind_stress_curl");
    const GeoGrid& g = *taux.grid();
    const std::size_t ny = g.n_lat(), nx = g.n_lon();
    if (ny < 3 || nx < 3)
        throw Error("wind_stress_curl: grid must be at least 3x3");

    auto uniform = [](const std::vector<double>& a) {
        const double d = a[1] - a[0];
        for (std::size_t i = 1; i < a.size(); ++i)
            if (std::abs((a[i] - a[i - 1]) - d) > 1e-9 * std::abs(d))
                return false;
        return true;
    };
    if (!uniform(g.lat()) || !uniform(g.lon()))
        throw Error("wind_stress_curl: grid spacing must be uniform in degrees");

    const double deg = std::numbers::pi / 180.0;
    const double dphi = (g.lat()[1] - g.lat()[0]) * deg;
    const double dlam = (g.lon()[1] - g.lon()[0]) * deg;
    const double dy = k.earth_radius * dphi;

    FieldSeries out = like(taux, 0, taux.length(), "sowsc", "N m-3");
    for (int t = 0; t < taux.length(); ++t) {
        const auto tx = taux.slice(t);
        const auto ty = tauy.slice(t);
        auto dst = out.slice(t);
        for (std::size_t i = 0; i < ny; ++i) {
            const double dx = k.earth_radius * std::cos(g.lat()[i] * deg) * dlam;
            for (std::size_t j = 0; j < nx; ++j) {
                const std::size_t c = i * nx + j;
                if (!g.is_ocean(c))
                    continue;
                const std::size_t jw = j == 0 ? j : j - 1;
                const std::size_t je = j == nx - 1 ? j : j + 1;
                const std::size_t is = i == 0 ? i : i - 1;
                const std::size_t in = i == ny - 1 ? i : i + 1;
                if (!g.is_ocean(i, jw) || !g.is_ocean(i, je) || !g.is_ocean(is, j) || !g.is_ocean(in, j)) {
                    dst[c] = land_value;
                    continue;
                }
                const double dtydx = (ty[i * nx + je] - ty[i * nx + jw]) / (static_cast<double>(je - jw) * dx);
                const double dtxdy = (tx[in * nx + j] - tx[is * nx + j]) / (static_cast<double>(in - is) * dy);
                dst[c] = dtydx - dtxdy;
            }
        }
    }
    return out;
}

FieldSeries derive_mlhc(const FieldSeries& T_ml, const FieldSeries& h, const PhysConstants& k)
{
    require_aligned(T_ml, h, "derive_mlhc");
    FieldSeries out = like(h, 0, h.length(), "mlhc", "J m-2");
    for (int t = 0; t < h.length(); ++t) {
        for (std::size_t c : h.grid()->ocean_cells()) {
            if (!(h.at(t, c) > 0.0))
                throw Error("derive_mlhc: non-positive mixed layer depth at t=" + std::to_string(t));
            out.at(t, c) = k.rho0 * k.c_p * T_ml.at(t, c) * h.at(t, c);
        }
    }
    return out;
}

ConceptSet derive_concepts(const Dataset& dataset, const PhysConstants& k)
{
    const auto& h = dataset.get("somxl010");
    const auto& u = dataset.get("vozocrtx_ml");
    const auto& v = dataset.get("vomecrty_ml");
    const auto& dT = dataset.get("votempdiff");
    const auto& dS = dataset.get("vosaldiff");
    if (h.length() < 2)
        throw Error("derive_concepts: need at least two months");
    const int n = h.length() - 1;

    ConceptSet cs;
    cs.vos2 = vertical_shear(u, v, h).slice_time(1, n);
    cs.von2 = buoyancy_frequency(dT, dS, k).slice_time(1, n);
    cs.vohfe = heat_flux_entrainment(h, dT, k);
    cs.mxl_tendency = mld_tendency(h, k);
    return cs;
}

MemberData align_member(const Dataset& inputs, const ConceptSet& concepts, const FieldSeries& mlhc)
{
    const TimeAxis& target = mlhc.time();
    auto trim = [&](const FieldSeries& s) {
        const int first = s.time().index_of(target.start());
        if (first < 0 || first + target.length() > s.length())
            throw Error("align_member: '" + s.name() + "' does not cover the target period");
        return s.slice_time(first, target.length());
    };
    MemberData m;
    for (const auto& [name, s] : inputs.vars())
        m.inputs.put(trim(s));
    for (std::size_t k = 0; k < 4; ++k)
        m.concepts[k] = trim(concepts[k]);
    m.mlhc = mlhc;
    return m;
}

} // namespace mlhc
