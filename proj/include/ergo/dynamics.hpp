#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ergo/grid.hpp"

namespace ergo {

// Point on the torus T^r held as 64-bit fixed-point fractions: coordinate i
// represents x[i] / 2^64. All map applications are integer arithmetic mod
// 2^64, so commuting maps commute bitwise; doubles appear only at read-out.
struct TorusState {
    std::vector<std::uint64_t> x;

    bool operator==(const TorusState&) const = default;
};

std::uint64_t to_fixed(double v);     // reduces v mod 1, truncates to 2^-64
double to_unit(std::uint64_t f);      // f / 2^64 in [0, 1)
TorusState make_state(std::span<const double> coords);

// One invertible map acting on a contiguous coordinate block.
//   Rotation: x[c]        -> x[c] + alpha                  (block width 1)
//   Skew:     (x[c], x[c+1]) -> (x[c] + alpha, x[c+1] + x[c])  (width 2)
struct Generator {
    enum class Kind { Rotation, Skew };

    Kind kind = Kind::Rotation;
    int coord = 0;
    std::uint64_t alpha = 0;

    int block_width() const { return kind == Kind::Skew ? 2 : 1; }
};

// Read-out map from a state into [-1, 1]. Cosine samples cos(2*pi*x[coord]);
// Indicator is the 0/1 indicator of the arc [lo, hi) in the fraction.
struct Observable {
    enum class Kind { Cosine, Indicator };

    Kind kind = Kind::Cosine;
    int coord = 0;
    double lo = 0.0;
    double hi = 0.5;

    double operator()(const TorusState& s) const;
};

// l commuting maps on T^dim plus one observable per map. Generators act on
// pairwise disjoint coordinate blocks, which is what makes commutation exact;
// validate() rejects overlaps and orbit_sample additionally witnesses
// T_i T_j == T_j T_i bitwise from the supplied start state.
struct DynamicalSystem {
    int dim = 0;
    std::vector<Generator> gens;
    std::vector<Observable> obs;

    void validate() const;

    // One rotation generator per entry of alphas, each on its own circle,
    // observed through the cosine of its own coordinate.
    static DynamicalSystem rotation(std::span<const double> alphas);

    // Single skew map (x, y) -> (x + alpha, y + x) on T^2, observed through
    // the cosine of the sheared coordinate y.
    static DynamicalSystem skew(double alpha);

    // Side-by-side product: b's coordinates are shifted past a's.
    static DynamicalSystem product(const DynamicalSystem& a, const DynamicalSystem& b);
};

// T_i^n applied to s, exact for any n (negative powers invert the map).
TorusState apply_generator(const DynamicalSystem& sys, std::size_t gi, const TorusState& s,
                           std::int64_t n);

// Returns true iff all generator pairs commute bitwise when applied to s.
bool commutation_witness(const DynamicalSystem& sys, const TorusState& s);

// Samples g_i(v) = f_i(T_1^{v_1} ... T_l^{v_l} x0) for v in {0..P-1}^l,
// read onto Z_P^l. Powers beyond P-1 never occur, so the only wraparound is
// the deliberate reinterpretation of [P]^l as Z_P^l recorded here.
struct OrbitSample {
    std::vector<GridFunction> g;
    bool wraparound_truncation = true; // [P]^l orbit data reinterpreted mod P
    std::string system_id;
};

OrbitSample orbit_sample(const DynamicalSystem& sys, const TorusState& x0, std::int64_t P);

} // namespace ergo
