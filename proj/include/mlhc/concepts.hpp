/**
 * @file concepts.hpp
 * @brief Physics-derived concept fields (vertical shear, buoyancy frequency,
 *        entrainment heat flux, mixed-layer-depth tendency), wind stress curl
 *        and mixed layer heat content.
 *
 * Conventions:
 *  - votempdiff / vosaldiff are upper minus lower across the mixed layer
 *    base, so a stable warm-over-cold column has dT > 0 and N^2 > 0.
 *  - Vertical gradients of velocity use the mixed-layer mean over depth h
 *    against quiescent water below: du/dz ~ u_ml / h.
 *  - N^2 uses a fixed transition thickness delta, not h.
 *  - Time derivatives are backward differences over a fixed month length;
 *    the first month has none, so tendency-based outputs start at t = 1.
 */
#pragma once

#include "mlhc/dataset.hpp"
#include "mlhc/grid.hpp"

namespace mlhc {

struct PhysConstants {
    double g = 9.81;                   // m s-2
    double rho0 = 1025.0;              // kg m-3
    double c_p = 3985.0;               // J kg-1 K-1
    double alpha = 2.0e-4;             // K-1
    double beta = 7.6e-4;              // psu-1
    double T_ref = 15.0;               // degC
    double S_ref = 35.0;               // psu
    double seconds_per_month = 2.6298e6;
    double transition_thickness = 10.0;  // m
    double earth_radius = 6.371e6;     // m
};

struct ConceptSet {
    FieldSeries vos2;          // S^2 [s-2]
    FieldSeries von2;          // N^2 [s-2]
    FieldSeries vohfe;         // Q_e [W m-2]
    FieldSeries mxl_tendency;  // dh/dt [m s-1]

    const FieldSeries& operator[](std::size_t k) const;
    FieldSeries& operator[](std::size_t k);
    static constexpr std::size_t size() { return 4; }
};

/// rho0 * (-alpha dT + beta dS), per cell and time.
FieldSeries linear_eos_density_delta(const FieldSeries& dT, const FieldSeries& dS, const PhysConstants& k = {});

/// Inputs, concepts and MLHC target of one member on a shared time axis.
struct MemberData {
    Dataset inputs;
    ConceptSet concepts;
    FieldSeries mlhc;
};

/// Trims inputs and concepts to the target's time axis.
MemberData align_member(const Dataset& inputs, const ConceptSet& concepts, const FieldSeries& mlhc);

/// (u/h)^2 + (v/h)^2. Throws if h <= 0 on an ocean cell.
FieldSeries vertical_shear(const FieldSeries& u_ml, const FieldSeries& v_ml, const FieldSeries& h);

/// -(g / rho0) * drho / delta with drho from linear_eos_density_delta.
FieldSeries buoyancy_frequency(const FieldSeries& dT, const FieldSeries& dS, const PhysConstants& k = {});

/// (h(t) - h(t-1)) / seconds_per_month for t = 1..T-1; the result's axis
/// starts one month after h's.
FieldSeries mld_tendency(const FieldSeries& h, const PhysConstants& k = {});

/// rho0 * c_p * max(dh/dt, 0) * dT(t) for t = 1..T-1.
FieldSeries heat_flux_entrainment(const FieldSeries& h, const FieldSeries& dT, const PhysConstants& k = {});

/// d(tau_y)/dx - d(tau_x)/dy on the sphere. Central differences inside,
/// one-sided at the grid edges; an ocean cell whose stencil touches land
/// gets the land sentinel (the result is therefore not validated).
FieldSeries wind_stress_curl(const FieldSeries& taux, const FieldSeries& tauy, const PhysConstants& k = {});

/// rho0 * c_p * T_ml * h [J m-2].
FieldSeries derive_mlhc(const FieldSeries& T_ml, const FieldSeries& h, const PhysConstants& k = {});

/// All four concepts from somxl010, vozocrtx_ml, vomecrty_ml, votempdiff and
/// vosaldiff, on the common valid range (the first month is dropped).
ConceptSet derive_concepts(const Dataset& dataset, const PhysConstants& k = {});

} // namespace mlhc
