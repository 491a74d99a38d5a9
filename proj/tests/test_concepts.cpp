#include <cmath>
#include <numbers>

#include "doctest.h"
#include "mlhc/concepts.hpp"
#include "mlhc/error.hpp"
#include "test_util.hpp"

using namespace mlhc;
using namespace mlhc::testing;

namespace {

FieldSeries filled(const GridPtr& g, int months, double v)
{
    FieldSeries s(g, TimeAxis({2000, 1}, months), "x", "1");
    for (int t = 0; t < months; ++t)
        for (auto c : g->ocean_cells())
            s.at(t, c) = v;
    return s;
}

// Independent per-cell formulas.
double shear_oracle(double u, double v, double h) { return std::pow(u / h, 2) + std::pow(v / h, 2); }
double eos_oracle(double dT, double dS) { return 1025.0 * (2.0e-4 * -dT + 7.6e-4 * dS); }
double n2_oracle(double dT, double dS) { return -9.81 / 1025.0 * eos_oracle(dT, dS) / 10.0; }
double tendency_oracle(double h1, double h0) { return (h1 - h0) / 2.6298e6; }
double qe_oracle(double h1, double h0, double dT)
{
    const double we = tendency_oracle(h1, h0);
    return we > 0 ? 1025.0 * 3985.0 * we * dT : 0.0;
}

} // namespace

TEST_CASE("linear equation of state closed forms")
{
    auto g = make_grid(1, 1);
    CHECK(linear_eos_density_delta(filled(g, 1, 0), filled(g, 1, 0)).at(0, 0) == 0.0);
    CHECK(rel_err(linear_eos_density_delta(filled(g, 1, 1), filled(g, 1, 0)).at(0, 0), -0.205) < 1e-12);
    CHECK(rel_err(linear_eos_density_delta(filled(g, 1, 0), filled(g, 1, 1)).at(0, 0), 0.779) < 1e-12);
}

TEST_CASE("vertical shear")
{
    auto g = make_grid(1, 2);
    CHECK(vertical_shear(filled(g, 1, 0), filled(g, 1, 0), filled(g, 1, 30)).at(0, 1) == 0.0);
    CHECK(rel_err(vertical_shear(filled(g, 1, 0.1), filled(g, 1, 0), filled(g, 1, 50)).at(0, 0), 4e-6) < 1e-12);
    CHECK_THROWS_AS(vertical_shear(filled(g, 1, 0.1), filled(g, 1, 0), filled(g, 1, 0)), Error);

    auto cg = make_coastal_grid(7, 9, 0.2, 4);
    const auto u = random_series(cg, 5, 1, -0.5, 0.5);
    const auto v = random_series(cg, 5, 2, -0.5, 0.5);
    const auto h = random_series(cg, 5, 3, 10, 200);
    const auto s2 = vertical_shear(u, v, h);
    for (int t = 0; t < 5; ++t)
        for (auto c : cg->ocean_cells()) {
            CHECK(s2.at(t, c) >= 0.0);
            CHECK(rel_err(s2.at(t, c), shear_oracle(u.at(t, c), v.at(t, c), h.at(t, c))) <= 1e-14);
        }
}

TEST_CASE("buoyancy frequency")
{
    auto g = make_grid(1, 1);
    CHECK(buoyancy_frequency(filled(g, 1, 0), filled(g, 1, 0)).at(0, 0) == 0.0);
    CHECK(rel_err(buoyancy_frequency(filled(g, 1, 2), filled(g, 1, 0)).at(0, 0), 3.924e-4) < 1e-12);

    auto cg = make_coastal_grid(6, 6, 0.2, 5);
    const auto dT = random_series(cg, 4, 7, -3, 3);
    const auto dS = random_series(cg, 4, 8, -1, 1);
    const auto n2 = buoyancy_frequency(dT, dS);
    for (int t = 0; t < 4; ++t)
        for (auto c : cg->ocean_cells())
            CHECK(rel_err(n2.at(t, c), n2_oracle(dT.at(t, c), dS.at(t, c))) <= 1e-14);
}

TEST_CASE("mixed layer depth tendency and entrainment heat flux")
{
    auto g = make_grid(1, 1);
    CHECK_THROWS_AS(mld_tendency(filled(g, 1, 10)), Error);
    const auto flat = mld_tendency(filled(g, 4, 42.0));
    for (double v : flat.values())
        CHECK(v == 0.0);

    FieldSeries h(g, TimeAxis({2000, 1}, 2), "h", "m", {50.0, 76.298});
    const auto dh = mld_tendency(h);
    CHECK(dh.length() == 1);
    CHECK(dh.time().start() == YearMonth{2000, 2});
    CHECK(rel_err(dh.at(0, 0), 1e-5) < 1e-12);

    FieldSeries dT(g, TimeAxis({2000, 1}, 2), "dT", "degC", {0.0, 2.0});
    CHECK(rel_err(heat_flux_entrainment(h, dT).at(0, 0), 81.6925) < 1e-12);

    // shoaling everywhere gives no entrainment
    FieldSeries shoal(g, TimeAxis({2000, 1}, 3), "h", "m", {80.0, 60.0, 40.0});
    const auto none = heat_flux_entrainment(shoal, filled(g, 3, 5.0));
    for (double v : none.values())
        CHECK(v == 0.0);

    auto cg = make_coastal_grid(5, 8, 0.25, 6);
    const auto hr = random_series(cg, 12, 9, 10, 150);
    const auto dTr = random_series(cg, 12, 10, -2, 4);
    const auto tend = mld_tendency(hr);
    const auto qe = heat_flux_entrainment(hr, dTr);
    for (int t = 1; t < 12; ++t)
        for (auto c : cg->ocean_cells()) {
            CHECK(tend.at(t - 1, c) == tendency_oracle(hr.at(t, c), hr.at(t - 1, c)));
            CHECK(qe.at(t - 1, c) == qe_oracle(hr.at(t, c), hr.at(t - 1, c), dTr.at(t, c)));
            if (tend.at(t - 1, c) < 0)
                CHECK(qe.at(t - 1, c) == 0.0);
        }
}

TEST_CASE("wind stress curl")
{
    auto g = make_grid(6, 8);
    CHECK_THROWS_AS(wind_stress_curl(filled(make_grid(2, 8), 1, 0), filled(make_grid(2, 8), 1, 0)), Error);

    const auto uni = wind_stress_curl(filled(g, 1, 0.1), filled(g, 1, -0.05));
    for (std::size_t i = 1; i < 5; ++i)
        for (std::size_t j = 1; j < 7; ++j)
            CHECK(std::abs(uni.at(0, i * 8 + j)) < 1e-20);

    // tau_y = a * j * dx_i, a linear ramp in x, has curl a
    const double a = 3.0e-7;
    const double deg = std::numbers::pi / 180.0;
    const double dlam = (g->lon()[1] - g->lon()[0]) * deg;
    FieldSeries tx = filled(g, 1, 0.0), ty = filled(g, 1, 0.0);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 8; ++j)
            ty.at(0, i * 8 + j) = a * static_cast<double>(j) * 6.371e6 * std::cos(g->lat()[i] * deg) * dlam;
    const auto curl = wind_stress_curl(tx, ty);
    for (std::size_t i = 1; i < 5; ++i)
        for (std::size_t j = 1; j < 7; ++j)
            CHECK(rel_err(curl.at(0, i * 8 + j), a) < 1e-12);
}

TEST_CASE("wind stress curl matches a scalar stencil")
{
    auto g = make_coastal_grid(9, 11, 0.15, 12);
    const auto tx = random_series(g, 3, 1, -0.2, 0.2);
    const auto ty = random_series(g, 3, 2, -0.2, 0.2);
    const auto curl = wind_stress_curl(tx, ty);
    const double R = 6.371e6, deg = std::numbers::pi / 180.0;
    const double dphi = (g->lat()[1] - g->lat()[0]) * deg, dlam = (g->lon()[1] - g->lon()[0]) * deg;
    for (int t = 0; t < 3; ++t) {
        for (int i = 0; i < 9; ++i) {
            for (int j = 0; j < 11; ++j) {
                const auto c = static_cast<std::size_t>(i * 11 + j);
                if (!g->is_ocean(c)) {
                    CHECK(std::isnan(curl.at(t, c)));
                    continue;
                }
                const int w = std::max(j - 1, 0), e = std::min(j + 1, 10);
                const int s = std::max(i - 1, 0), n = std::min(i + 1, 8);
                auto at = [&](const FieldSeries& f, int ii, int jj) { return f.at(t, static_cast<std::size_t>(ii * 11 + jj)); };
                const bool coastal = !g->is_ocean(static_cast<std::size_t>(i * 11 + w)) ||
                                     !g->is_ocean(static_cast<std::size_t>(i * 11 + e)) ||
                                     !g->is_ocean(static_cast<std::size_t>(s * 11 + j)) ||
                                     !g->is_ocean(static_cast<std::size_t>(n * 11 + j));
                if (coastal) {
                    CHECK(std::isnan(curl.at(t, c)));
                    continue;
                }
                const double dx = R * std::cos(g->lat()[static_cast<std::size_t>(i)] * deg) * dlam * (e - w);
                const double dy = R * dphi * (n - s);
                const double expect = (at(ty, i, e) - at(ty, i, w)) / dx - (at(tx, n, j) - at(tx, s, j)) / dy;
                CHECK(curl.at(t, c) == expect);
            }
        }
    }
}

TEST_CASE("mixed layer heat content")
{
    auto g = make_grid(1, 1);
    CHECK(derive_mlhc(filled(g, 1, 0), filled(g, 1, 50)).at(0, 0) == 0.0);
    CHECK(rel_err(derive_mlhc(filled(g, 1, 10), filled(g, 1, 50)).at(0, 0), 2.0423125e9) < 1e-12);
    CHECK(derive_mlhc(filled(g, 1, 7), filled(g, 1, 80)).at(0, 0) ==
          2.0 * derive_mlhc(filled(g, 1, 7), filled(g, 1, 40)).at(0, 0));
    CHECK_THROWS_AS(derive_mlhc(filled(g, 1, 7), filled(g, 1, -1)), Error);
}

namespace {

Dataset random_inputs(const GridPtr& g, int months, std::uint64_t seed)
{
    Dataset d;
    auto put = [&](const char* name, double lo, double hi, std::uint64_t s) {
        auto f = random_series(g, months, seed * 31 + s, lo, hi);
        f.rename(name, "1");
        d.put(std::move(f));
    };
    put("somxl010", 10, 150, 1);
    put("vozocrtx_ml", -0.4, 0.4, 2);
    put("vomecrty_ml", -0.4, 0.4, 3);
    put("votempdiff", -1, 3, 4);
    put("vosaldiff", -0.3, 0.3, 5);
    return d;
}

} // namespace

TEST_CASE("derive_concepts spot checks and invariants")
{
    auto g = make_coastal_grid(6, 7, 0.2, 30);
    const auto d = random_inputs(g, 10, 3);
    const auto cs = derive_concepts(d);
    const auto& h = d.get("somxl010");
    CHECK(cs.vos2.length() == 9);
    CHECK(cs.vos2.time() == cs.mxl_tendency.time());
    CHECK(cs.von2.time() == cs.vohfe.time());
    for (int t = 1; t < 10; ++t) {
        for (auto c : g->ocean_cells()) {
            CHECK(cs.vos2.at(t - 1, c) >= 0.0);
            CHECK(rel_err(cs.vos2.at(t - 1, c),
                          shear_oracle(d.get("vozocrtx_ml").at(t, c), d.get("vomecrty_ml").at(t, c), h.at(t, c))) <=
                  1e-12);
            CHECK(rel_err(cs.von2.at(t - 1, c), n2_oracle(d.get("votempdiff").at(t, c), d.get("vosaldiff").at(t, c))) <=
                  1e-12);
            CHECK(cs.mxl_tendency.at(t - 1, c) == tendency_oracle(h.at(t, c), h.at(t - 1, c)));
            CHECK(cs.vohfe.at(t - 1, c) == qe_oracle(h.at(t, c), h.at(t - 1, c), d.get("votempdiff").at(t, c)));
            CHECK(cs.vohfe.at(t - 1, c) * std::min(cs.mxl_tendency.at(t - 1, c), 0.0) == 0.0);
        }
    }

    Dataset missing;
    missing.put(d.get("somxl010"));
    try {
        derive_concepts(missing);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("vozocrtx_ml") != std::string::npos);
    }
}

TEST_CASE("constant inputs give zero tendency and entrainment")
{
    auto g = make_grid(3, 3);
    Dataset d;
    for (auto [name, v] : {std::pair{"somxl010", 40.0}, {"vozocrtx_ml", 0.1}, {"vomecrty_ml", 0.2},
                           {"votempdiff", 1.0}, {"vosaldiff", 0.1}}) {
        auto f = filled(g, 6, v);
        f.rename(name, "1");
        d.put(std::move(f));
    }
    const auto cs = derive_concepts(d);
    for (double v : cs.mxl_tendency.values())
        CHECK(v == 0.0);
    for (double v : cs.vohfe.values())
        CHECK(v == 0.0);
}

TEST_CASE("unit scaling of derived fields")
{
    auto g = make_coastal_grid(4, 5, 0.2, 41);
    const auto d = random_inputs(g, 5, 8);
    const double a = 100.0, b = 0.01;  // velocity in cm/s, depth in hm
    Dataset scaled = d;
    for (auto name : {"vozocrtx_ml", "vomecrty_ml"})
        for (auto& v : scaled.get(name).values())
            v *= a;
    for (auto& v : scaled.get("somxl010").values())
        v *= b;
    const auto s0 = vertical_shear(d.get("vozocrtx_ml"), d.get("vomecrty_ml"), d.get("somxl010"));
    const auto s1 = vertical_shear(scaled.get("vozocrtx_ml"), scaled.get("vomecrty_ml"), scaled.get("somxl010"));
    for (auto c : g->ocean_cells())
        CHECK(rel_err(s1.at(2, c), s0.at(2, c) * a * a / (b * b)) < 1e-12);

    auto dT2 = d.get("votempdiff");
    for (auto& v : dT2.values())
        v *= 3.0;
    const auto q0 = heat_flux_entrainment(d.get("somxl010"), d.get("votempdiff"));
    const auto q1 = heat_flux_entrainment(d.get("somxl010"), dT2);
    for (auto c : g->ocean_cells())
        CHECK(rel_err(q1.at(1, c), 3.0 * q0.at(1, c)) < 1e-12);
}
