#pragma once

#include <cstddef>
#include <vector>

#include "cgheat/errors.hpp"

namespace cgheat {

/// Dense scalar field on a regular cell grid over the unit square.
/// Storage is row-major with y varying slowest: index = iy * nx + ix.
struct Grid {
    int nx = 0;
    int ny = 0;
    std::vector<double> values;

    Grid() = default;
    Grid(int nx_, int ny_, double fill = 0.0) : nx(nx_), ny(ny_) {
        if (nx_ < 1 || ny_ < 1) throw ConfigError("Grid: dimensions must be >= 1");
        values.assign(static_cast<std::size_t>(nx_) * ny_, fill);
    }

    std::size_t size() const { return values.size(); }
    double& at(int ix, int iy) { return values[static_cast<std::size_t>(iy) * nx + ix]; }
    double at(int ix, int iy) const { return values[static_cast<std::size_t>(iy) * nx + ix]; }
};

}  // namespace cgheat
