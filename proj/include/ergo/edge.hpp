#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ergo/grid.hpp"

namespace ergo {

// A subset of the coordinates {0, ..., ambient-1} of Z_P^ambient.
// For lifted grids the ambient dimension is l+1 and index l is the
// diagonal (fiber) coordinate.
struct Edge {
    std::uint32_t mask = 0;
    int ambient = 0;

    static Edge of(int ambient, std::initializer_list<int> idx);
    static Edge of(int ambient, const std::vector<int>& idx);
    static Edge full(int ambient);
    static Edge empty(int ambient) { return Edge{0, ambient}; }

    bool contains(int i) const { return (mask >> i) & 1u; }
    int size() const { return __builtin_popcount(mask); }
    Edge complement() const;
    std::vector<int> indices() const;
    std::string to_string() const; // "{0,2}"

    bool operator==(const Edge&) const = default;
    bool operator<(const Edge& o) const { return mask < o.mask; }
};

Edge parse_edge(int ambient, const std::string& csv_indices);

// sup over the domain of |f - E(f | coordinates in e and x)|.
// Zero exactly when f depends only on the e-coordinates (and x).
double max_edge_deviation(const RandomizedGridFunction& f, Edge e);

// Conditional expectation onto the e-coordinates: averages f uniformly
// over the coordinates outside e, broadcast back to the full domain.
RandomizedGridFunction edge_project(const RandomizedGridFunction& f, Edge e);

// A function on Z_P^{l+1} x X that depends only on the coordinates in `edge`
// (and x). The constructor validates this within `tol`.
struct EdgeFunction {
    RandomizedGridFunction f;
    Edge edge;

    EdgeFunction() = default;
    EdgeFunction(RandomizedGridFunction fn, Edge e, double tol = 1e-9);

    // Skips the measurability check; for values produced by edge_project.
    static EdgeFunction unchecked(RandomizedGridFunction fn, Edge e);
};

// Randomized spot check used alongside the exact deviation: resamples
// coordinates outside e and compares values. Returns the max observed
// difference over `trials` random pairs.
double resample_edge_deviation(const RandomizedGridFunction& f, Edge e,
                               std::uint64_t seed, int trials);

} // namespace ergo
