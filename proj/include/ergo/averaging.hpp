#pragma once

#include <span>

#include "ergo/edge.hpp"
#include "ergo/grid.hpp"

namespace ergo {

// A_N(f_1..f_l)(a) = mean over n in [N] of prod_i f_i(a + n e_i).
// All f_i share one shape (P, l) with l >= 1. The fast kernel exploits the
// period-P structure of the n-orbit; the oracle runs the literal N-term loop.
GridFunction multiple_average(std::span<const GridFunction> fs, std::int64_t N);
GridFunction multiple_average_oracle(std::span<const GridFunction> fs, std::int64_t N);

// S_N g(v) = mean over n in [N] of g(v + n), on Z_P (shape l = 1).
GridFunction sliding_average(const GridFunction& g, std::int64_t N);
GridFunction sliding_average_oracle(const GridFunction& g, std::int64_t N);

// Precomputes circular prefix sums once; each eval(N) costs O(P).
class SlidingAverager {
public:
    explicit SlidingAverager(const GridFunction& g);
    GridFunction eval(std::int64_t N) const;

private:
    GridShape shape_;
    std::vector<double> prefix_; // prefix_[i] = sum of g[0..i)
};

// Delta_N f(v, x) = mean over n in [N] of f((v, -sigma(v) - n), x),
// mapping shape (P, l+1) down to (P, l). l = 0 is allowed.
RandomizedGridFunction diagonal_projection(const RandomizedGridFunction& f, std::int64_t N);
GridFunction diagonal_projection(const GridFunction& f, std::int64_t N);
RandomizedGridFunction diagonal_projection_oracle(const RandomizedGridFunction& f, std::int64_t N);
GridFunction diagonal_projection_oracle(const GridFunction& f, std::int64_t N);

// Delta_N of a pointwise product of edge functions, evaluated lazily per
// fiber so the product is never materialized on Z_P^{l+1}.
RandomizedGridFunction diagonal_average_product(std::span<const EdgeFunction> gs, std::int64_t N);

// Lifts f_1..f_l on Z_P^l to edge functions on Z_P^{l+1}:
// lift_i(v_0..v_l) = f_i(v_0, .., v_{i-1}, -(sum_{j != i} v_j), v_{i+1}, .., v_{l-1}),
// which misses coordinate i, and Delta_N of their product recovers A_N.
std::vector<EdgeFunction> lift_functions(std::span<const GridFunction> fs);

// For g measurable in the first l coordinates, Delta_N(g * h) equals
// (g restricted to Z_P^l) * Delta_N(h) pointwise. Returns Delta_N(g * h)
// after asserting that identity to 1e-12.
RandomizedGridFunction module_multiply(const EdgeFunction& g_full, const RandomizedGridFunction& h,
                                       std::int64_t N);

// Splits a window of length N over Z_P into q full cycles plus r leftovers.
struct WindowSplit {
    std::int64_t q, r;
};
inline WindowSplit split_window(std::int64_t N, std::int64_t P) {
    require(N >= 1, "window length must be >= 1");
    return {N / P, N % P};
}

} // namespace ergo
