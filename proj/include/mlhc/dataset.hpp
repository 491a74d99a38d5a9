/**
 * @file dataset.hpp
 * @brief Named collection of FieldSeries sharing one grid and time axis.
 */
#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>

#include "mlhc/grid.hpp"

namespace mlhc {

/// The twelve model inputs, in channel order.
inline constexpr std::array<std::string_view, 12> input_variables = {
    "sosstsst", "sosaline", "sossheig",  "somxl010", "sohefldo", "vozocrtx_ml",
    "vomecrty_ml", "votempdiff", "vosaldiff", "mbathy", "ff", "sowsc",
};

inline constexpr std::array<std::string_view, 12> input_units = {
    "degC", "psu", "m", "m", "W m-2", "m s-1", "m s-1", "degC", "psu", "m", "s-1", "N m-3",
};

/// Prescribed concepts, in bottleneck channel order.
inline constexpr std::array<std::string_view, 4> concept_variables = {"vos2", "von2", "vohfe", "mxl_tendency"};
inline constexpr std::array<std::string_view, 4> concept_units = {"s-2", "s-2", "W m-2", "m s-1"};

inline constexpr std::string_view target_variable = "mlhc";

class Dataset {
public:
    /// Adds or replaces a series. All series must share grid and time axis.
    void put(FieldSeries series);
    const FieldSeries& get(std::string_view name) const;
    FieldSeries& get(std::string_view name);
    bool contains(std::string_view name) const { return vars_.find(std::string(name)) != vars_.end(); }
    std::size_t size() const noexcept { return vars_.size(); }

    const GridPtr& grid() const;
    const TimeAxis& time() const;

    /// Throws naming the first absent input variable.
    void require_inputs() const;

    const std::map<std::string, FieldSeries, std::less<>>& vars() const noexcept { return vars_; }

private:
    std::map<std::string, FieldSeries, std::less<>> vars_;
};

} // namespace mlhc
