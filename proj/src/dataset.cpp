#include "mlhc/dataset.hpp"

#include "mlhc/error.hpp"

namespace mlhc {

void Dataset::put(FieldSeries series)
{
    if (!vars_.empty()) {
        const auto& ref = vars_.begin()->second;
        if (!same_grid(ref.grid(), series.grid()))
            throw Error("Dataset: '" + series.name() + "' is on a different grid");
        if (!(ref.time() == series.time()))
            throw Error("Dataset: '" + series.name() + "' has a different time axis");
    }
    std::string key = series.name();
    vars_.insert_or_assign(std::move(key), std::move(series));
}

const FieldSeries& Dataset::get(std::string_view name) const
{
    auto it = vars_.find(name);
    if (it == vars_.end())
        throw Error("Dataset: missing variable '" + std::string(name) + "'");
    return it->second;
}

FieldSeries& Dataset::get(std::string_view name)
{
    auto it = vars_.find(name);
    if (it == vars_.end())
        throw Error("Dataset: missing variable '" + std::string(name) + "'");
    return it->second;
}

const GridPtr& Dataset::grid() const
{
    if (vars_.empty())
        throw Error("Dataset: empty");
    return vars_.begin()->second.grid();
}

const TimeAxis& Dataset::time() const
{
    if (vars_.empty())
        throw Error("Dataset: empty");
    return vars_.begin()->second.time();
}

void Dataset::require_inputs() const
{
    for (auto name : input_variables)
        if (!contains(name))
            throw Error("Dataset: missing input variable '" + std::string(name) + "'");
}

} // namespace mlhc
