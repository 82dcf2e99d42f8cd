#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ergo/grid.hpp"

namespace ergo {

// Growth function F with F(M) >= M, kept as data so reports stay
// reproducible. Three forms: affine a*M+b (a >= 1, b >= 0), power
// round(M^c) with c >= 1, or an explicit table indexed from M = 1.
// Monotonicity and F(M) >= M are enforced at construction (tables are
// checked entry by entry), so evaluation only bounds-checks.
struct GrowthFunction {
    enum class Kind { Affine, Power, Table };

    Kind kind = Kind::Affine;
    std::int64_t a = 1;
    std::int64_t b = 0;
    double c = 1.0;
    std::vector<std::int64_t> table;

    std::int64_t operator()(std::int64_t M) const;
    std::string to_string() const;

    static GrowthFunction affine(std::int64_t a, std::int64_t b);
    static GrowthFunction power(double c);
    static GrowthFunction from_table(std::vector<std::int64_t> table);

    // Accepts the CLI forms "M^2", "M*8", "8*M", "8M", "M+5", "8M+3", "M".
    static GrowthFunction parse(const std::string& text);
};

enum class WindowStatus { Certified, NoWindowFound };

std::string to_string(WindowStatus s);

// Certificate that seq is eps-stable on [M, F(M)]: every pair N, N' in the
// window has ||seq(N) - seq(N')||_2 <= max_deviation <= eps. In triangle
// mode the bound is 2 * max_N ||seq(N) - seq(M)|| and pairs_checked counts
// the (M, N) evaluations; in exhaustive mode it is the true pairwise max.
struct MetastabilityReport {
    WindowStatus status = WindowStatus::NoWindowFound;
    std::int64_t M = 0;
    std::int64_t F_M = 0;
    double eps = 0.0;
    double max_deviation = 0.0;
    std::int64_t pairs_checked = 0;
    bool exhaustive = false;
    std::int64_t scanned_up_to = 0; // last window start examined
    std::string sequence_id;
};

// Scans M = M_star .. M_cap for the first eps-stable window. NoWindowFound
// is an answer, not an error: the cap was reached with every window
// rejected. seq must be defined for all N in [M_star, F(M_cap)].
MetastabilityReport find_metastable_window(const std::function<GridFunction(std::int64_t)>& seq,
                                           const GrowthFunction& F, double eps,
                                           std::int64_t M_star, std::int64_t M_cap,
                                           bool exhaustive = false,
                                           std::string sequence_id = "");

// Re-checks a certified report by brute force: max over all pairs
// N, N' in [M, min(F_M, N_limit)]. Used by tests and the CLI's
// --exhaustive flag as an independent audit of the triangle bound.
double exhaustive_pair_deviation(const std::function<GridFunction(std::int64_t)>& seq,
                                 std::int64_t M, std::int64_t F_M,
                                 std::int64_t* pairs = nullptr);

// Glues J functions over X into one function over X x {1..J} with weights
// w_x / J; part k occupies slices [k*|X|, (k+1)*|X|). The L2 norm of any
// slice-wise construction aggregates as
//   sqrt(J) * ||h~||_{X x {1..J}} = sqrt(sum_k ||h_k||_X^2),
// which is asserted on the diagonal-average differences of the parts for a
// few sampled window pairs before returning.
RandomizedGridFunction extend_probability_space(std::span<const RandomizedGridFunction> parts);

// Both sides of the aggregation identity for one window pair:
//   lhs = sqrt(J) * ||Delta_N g~ - Delta_N' g~||   over X x {1..J}
//   rhs = sqrt(sum_k ||Delta_N g_k - Delta_N' g_k||^2)   over X
// plus the sum-side comparison ||Delta_N(sum g_k) - Delta_N'(sum g_k)||,
// which Cauchy-Schwarz bounds by sqrt(J) * rhs.
struct AggregationCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double sum_side = 0.0;
};

AggregationCheck aggregation_identity(std::span<const RandomizedGridFunction> parts,
                                      std::int64_t N, std::int64_t Np);

// Instance-level probe of dominated-convergence structure: given per-point
// data f(n, n', x) in [0, 1] on a finite space, find the first M <= cap
// with integral(f(n, n')) <= eps for every pair n, n' in [M, F(M)].
struct DctProbeReport {
    bool certified = false;
    std::int64_t M = 0;
    std::int64_t F_M = 0;
    double max_integral = 0.0;
    std::int64_t pairs_checked = 0;
    std::int64_t scanned_up_to = 0;
};

DctProbeReport finitary_dct_probe(
    const std::function<double(std::int64_t, std::int64_t, std::size_t)>& f,
    const FiniteProbabilitySpace& space, const GrowthFunction& F, double eps,
    std::int64_t window_cap);

} // namespace ergo
