#pragma once

#include <span>
#include <vector>

namespace fan {

// Uniform discretization of continuous action dimensions into bins.
// Bin centers sit at interval midpoints, so decoding is unbiased and the
// quantization error is symmetric. Immutable after construction.
struct ActionGrid {
    int dims = 0;
    int bins = 0;
    std::vector<double> lo;  // per-dimension lower range, action units
    std::vector<double> hi;  // per-dimension upper range

    ActionGrid() = default;
    ActionGrid(std::vector<double> lo_in, std::vector<double> hi_in, int bins_in);

    // Same [lo, hi] range for every dimension.
    static ActionGrid uniform(int dims, int bins, double lo, double hi);

    double bin_width(int d) const;

    // Center of bin j in dimension d: lo + (j + 0.5) * width.
    double bin_center(int d, int j) const;

    // Clamp each component to [lo, hi], then map to the containing bin;
    // the upper boundary maps to bin B-1.
    std::vector<int> encode(std::span<const double> action) const;

    // Component-wise bin centers.
    std::vector<double> decode(std::span<const int> index) const;

    void check_index(int d, int j) const;
};

}  // namespace fan
