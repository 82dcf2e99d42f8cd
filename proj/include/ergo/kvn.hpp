#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ergo/antiuniform.hpp"
#include "ergo/factors.hpp"

namespace ergo {

// Scales 1 = M_1 <= M_2 <= ... <= M_K driving the greedy decompositions.
struct ScaleLadder {
    std::vector<std::int64_t> M;

    explicit ScaleLadder(std::vector<std::int64_t> scales);
    static ScaleLadder from_growth(const std::function<std::int64_t(std::int64_t)>& F, int K);
    int K() const { return int(M.size()); }
};

enum class KvnStatus {
    Uniform,           // the stop test passed at the final level
    TerminatedAtFloor, // ran out of ladder levels; possible at relaxed constants
    NoProgress,        // best correlation under the descent gate; honest stall
};

const char* to_string(KvnStatus s);

// One greedy descent. The energy columns are recomputed from scratch when the
// row is written, never accumulated. For hypergraph runs they hold the
// combined energy summed over the family.
struct LedgerRow {
    int iteration = 0; // 1-based descent counter
    int level = 0;     // witness level j, at scale ladder.M[j-1]
    std::size_t edge_index = 0;
    std::string edge; // "{0,2}"; "{0}" for runs on the line
    std::int64_t scale = 1;
    std::int64_t failed_N = 0;
    double probe_value = 0.0; // uniformity deviation that triggered the descent
    double correlation = 0.0;
    double energy_before = 0.0;
    double energy_after = 0.0;
};

struct KvnWitness {
    int level = 0;
    std::size_t edge_index = 0;
    AntiUniform phi;
    double alpha = 0.0; // offset of the level-set factor built from phi
    double correlation = 0.0;
};

// Where and why a run stalled (status NoProgress).
struct StallInfo {
    int level = 0;
    std::size_t edge_index = 0;
    std::int64_t failed_N = 0;
    double probe_value = 0.0;
    double best_correlation = 0.0;
    double gate = 0.0;
};

// A constant this run used next to the conservative worst-case value the
// source analysis prescribes. Reports list every row where they differ.
struct ConstantDeviation {
    std::string name;
    double used = 0.0;
    double reference = 0.0;
};

struct KvnConfig {
    double eps = 0.1;
    double eta0 = 0.0;                  // level-set factor width
    double correlation_threshold = 0.0; // minimum acceptable witness correlation
    double energy_increment = 0.0;      // guaranteed energy gain per descent
    int K_max = 12;                     // longest ladder this config accepts
    double uniformity_factor = 0.0;     // stop test covers N >= uniformity_factor * scale
    std::vector<std::int64_t> check_extra; // caller-relevant N, probed when in range
    int random_probes = 16;             // random profiles in the hypergraph stop test
    std::uint64_t seed = 1;

    // Feasible defaults. The worst-case analysis wants eta0 = eps^2/400,
    // threshold eps^2/200, increment eps^4/10^6 (all divided by powers of the
    // family size m in the hypergraph case) and a ladder longer than
    // 10^6/eps^4; those produce astronomically long runs, so the defaults
    // trade guarantee strength for runtime and deviations() reports the gap.
    static KvnConfig for_1d(double eps);
    static KvnConfig for_hypergraph(double eps, std::size_t m);

    // Descents are accepted only at |correlation| >= gate(). Taking the max
    // with sqrt(energy_increment) + eta0 makes every accepted descent provably
    // raise the energy by energy_increment (correlation c forces an increment
    // of (c - eta0)^2), so the ledger invariant holds by construction. At the
    // worst-case constants the max is the plain threshold.
    double gate() const;

    std::vector<ConstantDeviation> deviations(std::size_t m = 1) const;
    void validate() const;
};

struct Decomposition {
    GridFunction g_structured; // E(g | factor), values in [0,1]
    GridFunction g_uniform;    // g - g_structured
    int k = 0;                 // final level; K+1 down to 2, or 1 at the floor
    Factor factor;
    KvnStatus status = KvnStatus::Uniform;
    std::vector<KvnWitness> witnesses; // acquisition order (levels descending)
    std::vector<LedgerRow> ledger;
    std::vector<double> energy_by_level; // ||E(g|Y)||_2^2 per visited level
    std::optional<StallInfo> stall;
};

struct HypergraphDecomposition {
    std::vector<Edge> edges;
    std::vector<GridFunction> structured; // ambient, e-measurable, in [0,1]
    std::vector<GridFunction> uniform;
    std::vector<Factor> factors;
    int k = 0;
    KvnStatus status = KvnStatus::Uniform;
    std::vector<KvnWitness> witnesses;
    std::vector<LedgerRow> ledger;
    std::vector<double> combined_energy; // sum over the family per visited level
    std::optional<StallInfo> stall;
};

// Finite stand-in for "every N >= base": {base * 2^i} capped at P, plus the
// caller's declared values in range, ascending, deduplicated. Empty when
// base > P (windows of length >= P collapse toward the global mean, so the
// condition holds trivially there).
std::vector<std::int64_t> uniformity_check_grid(std::int64_t base, std::int64_t P,
                                                std::span<const std::int64_t> extra);

// ||Delta_N(u * prod_{j != skip} profile[j])||_2, the hypergraph stop-test
// statistic for one probe profile.
double uniformity_probe(const GridFunction& u, std::span<const GridFunction> profile,
                        std::size_t skip, std::int64_t N);

// Deterministic probe profiles for the hypergraph stop test: the current
// structured parts, the inputs themselves, all-ones, then cfg.random_probes
// seeded random e-measurable profiles (fixed for the whole run).
std::vector<std::vector<GridFunction>> kvn_probe_profiles(std::span<const EdgeFunction> gs,
                                                          std::span<const GridFunction> structured,
                                                          const KvnConfig& cfg);

// Greedy decomposition of g: Z_P -> [0,1] into a structured part measurable
// against a join of level-set factors of located window certificates and a
// remainder whose sliding averages pass the stop test. Each failed stop test
// triggers an exhaustive shift search at the current ladder scale; witnesses
// below gate() end the run with status NoProgress.
Decomposition kvn_decompose_1d(const GridFunction& g, const ScaleLadder& ladder,
                               const KvnConfig& cfg);

// Parallel version over an edge family: each g_e is split against its own
// factor chain, the stop test probes products with profile functions on the
// other edges, and a failed probe triggers the edge-family search for the
// offending edge. The combined energy across the family grows by at least
// cfg.energy_increment per descent.
HypergraphDecomposition kvn_decompose_hypergraph(std::span<const EdgeFunction> gs,
                                                 const ScaleLadder& ladder, const KvnConfig& cfg);

// ||Delta_N(prod g_e) - Delta_N(prod structured)||_2, checked against the
// term-by-term telescoping budget (sum of the mixed-term norms) plus 1e-10.
double telescoping_residual(std::span<const EdgeFunction> gs, const HypergraphDecomposition& dec,
                            std::int64_t N);

} // namespace ergo
