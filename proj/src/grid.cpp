#include "fan/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fan/errors.hpp"

namespace fan {

ActionGrid::ActionGrid(std::vector<double> lo_in, std::vector<double> hi_in, int bins_in)
    : dims(static_cast<int>(lo_in.size())), bins(bins_in), lo(std::move(lo_in)), hi(std::move(hi_in)) {
    if (dims < 1) {
        throw ConfigError("grid: need at least one action dimension");
    }
    if (hi.size() != lo.size()) {
        throw ShapeError("grid: lo/hi length mismatch");
    }
    if (bins < 2) {
        throw ConfigError("grid: bins must be >= 2, got " + std::to_string(bins));
    }
    for (int d = 0; d < dims; ++d) {
        if (!(lo[d] < hi[d])) {
            throw ConfigError("grid: lo < hi violated in dimension " + std::to_string(d));
        }
    }
}

ActionGrid ActionGrid::uniform(int dims, int bins, double lo, double hi) {
    return ActionGrid(std::vector<double>(static_cast<std::size_t>(dims), lo),
                      std::vector<double>(static_cast<std::size_t>(dims), hi), bins);
}

void ActionGrid::check_index(int d, int j) const {
    if (d < 0 || d >= dims) {
        throw IndexError("grid: dimension " + std::to_string(d) + " out of range");
    }
    if (j < 0 || j >= bins) {
        throw IndexError("grid: bin " + std::to_string(j) + " out of range in dimension " + std::to_string(d));
    }
}

double ActionGrid::bin_width(int d) const {
    check_index(d, 0);
    return (hi[d] - lo[d]) / static_cast<double>(bins);
}

double ActionGrid::bin_center(int d, int j) const {
    check_index(d, j);
    return lo[d] + (static_cast<double>(j) + 0.5) * (hi[d] - lo[d]) / static_cast<double>(bins);
}

std::vector<int> ActionGrid::encode(std::span<const double> action) const {
    if (static_cast<int>(action.size()) != dims) {
        throw ShapeError("grid: encode expected " + std::to_string(dims) + " components, got " +
                         std::to_string(action.size()));
    }
    std::vector<int> out(static_cast<std::size_t>(dims));
    for (int d = 0; d < dims; ++d) {
        const double a = std::clamp(action[static_cast<std::size_t>(d)], lo[d], hi[d]);
        const double t = (a - lo[d]) / (hi[d] - lo[d]);
        int j = static_cast<int>(std::floor(t * static_cast<double>(bins)));
        j = std::clamp(j, 0, bins - 1);
        out[static_cast<std::size_t>(d)] = j;
    }
    return out;
}

std::vector<double> ActionGrid::decode(std::span<const int> index) const {
    if (static_cast<int>(index.size()) != dims) {
        throw ShapeError("grid: decode expected " + std::to_string(dims) + " indices, got " +
                         std::to_string(index.size()));
    }
    std::vector<double> out(static_cast<std::size_t>(dims));
    for (int d = 0; d < dims; ++d) {
        out[static_cast<std::size_t>(d)] = bin_center(d, index[static_cast<std::size_t>(d)]);
    }
    return out;
}

}  // namespace fan
