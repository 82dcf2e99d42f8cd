#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ergo/edge.hpp"
#include "ergo/grid.hpp"

namespace ergo {

// A dual certificate of non-uniformity at scale M, attached to an edge e of
// the ambient grid Z_P^{l+1} (the fiber coordinate is index l).
//
// Single-coordinate form (ambient l+1 = 1, e = {0}):
//   phi(v) = E_{m in [M]} b(v - m).
// Edge form (e contains the fiber coordinate):
//   phi_e(v) = E_{m in [M]} prod_{i in e} b_i(v_{e minus i}, sigma(v_e) + m),
// where each block b_i lives on Z_P^{|e|} with the e-minus-i coordinates in
// ascending order followed by the scalar slot.
struct AntiUniform {
    Edge e;
    std::int64_t M = 1;
    std::vector<GridFunction> blocks; // one per i in e, ascending i
    GridFunction realized;            // cached on the ambient grid
};

// phi(v) = E_{m in [M]} b(v - m) for b on Z_P with |b| <= 1. The result is
// 1/M-Lipschitz along the window: |phi(v+n) - phi(v)| <= 2|n|/M.
AntiUniform basic_antiuniform_1(const GridFunction& b, std::int64_t M);

// phi_e as above, realized on Z_P^{|e|} fibers and broadcast to the ambient
// grid. Any nonempty edge is allowed; every |b_i| <= 1. M may exceed P; the
// window mean is computed exactly.
AntiUniform basic_antiuniform_e(GridShape ambient, Edge e, std::span<const GridFunction> blocks,
                                std::int64_t M);

struct CorrelationWitness {
    AntiUniform phi;
    double correlation = 0.0; // <g, phi.realized>, re-verified by direct summation
    double deviation = 0.0;   // the measured uniformity deviation that triggered the search
    double threshold = 0.0;   // acceptance bar the witness cleared
    std::int64_t shift = 0;   // window offset located by the scan
    std::vector<std::int64_t> frozen; // edge search: pigeonholed complement coordinates
};

// Scans every window offset s in (-N, N) for the correlation of g with the
// sliding mean E_{m in [M]} g(v + s + m), exhaustively, smallest s first.
// The returned block is the corresponding shift of g itself. Guarantee: if
// ||S_N g||_2 >= eps then the best correlation is at least eps^2/2 (found by
// the exhaustive scan; a shortfall is an InvariantViolation). Below
// accept_threshold (default eps^2/200) returns nullopt.
// Preconditions: |g| <= 1 and N >= 10 M / eps^2.
std::optional<CorrelationWitness> correlate_search_1(const GridFunction& g, std::int64_t M,
                                                     std::int64_t N, double eps,
                                                     double accept_threshold = -1.0);

// Edge analogue. gs holds one function per distinct edge, all of one size
// d <= l and all containing the fiber coordinate, each e-measurable with
// values in [-1,1] and |X| = 1;
// target picks e0 by index into gs. If ||Delta_N(prod g_e)||_2 >= eps there
// is a scale-M certificate phi_{e0} with |<g_{e0}, phi_{e0}>| >= eps^2/2;
// the scan exhausts the frozen complement coordinates v_f and the window
// offset n, and rebuilds the witness blocks from the located (v_f, n):
// the diagonal average (lifted back) lands in the fiber block, each
// non-target g_e in block min(e0 minus e), unused blocks stay 1.
// Preconditions as above, plus N >= 10 M / eps^2.
std::optional<CorrelationWitness> correlate_search_e(std::span<const EdgeFunction> gs,
                                                     std::size_t target, std::int64_t M,
                                                     std::int64_t N, double eps,
                                                     double accept_threshold = -1.0);

} // namespace ergo
