#include "ergo/kvn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ergo/averaging.hpp"

namespace ergo {

namespace {

constexpr double kExactTol = 1e-12;

double energy_of(const GridFunction& s) {
    const double n = lp_norm(s, Norm::L2);
    return n * n;
}

void require_unit_interval(const GridFunction& g, const char* what) {
    for (double x : g.v)
        require(x >= -1e-12 && x <= 1.0 + 1e-12, std::string(what) + " must take values in [0,1]");
}

struct SplitState {
    GridFunction s, u;
    double energy = 0.0;
};

// E(g|Y) and the remainder, with the split identities enforced on the spot.
SplitState split_against(const GridFunction& g, const Factor& Y) {
    SplitState st;
    st.s = cond_expectation(g, Y);
    st.u = g;
    for (std::size_t i = 0; i < st.u.v.size(); ++i) st.u.v[i] -= st.s.v[i];
    for (std::size_t i = 0; i < g.v.size(); ++i) {
        ensure(std::abs(g.v[i] - st.s.v[i] - st.u.v[i]) <= kExactTol, "split is not exact");
        ensure(st.s.v[i] >= -1e-9 && st.s.v[i] <= 1.0 + 1e-9,
               "structured part left the unit interval");
        ensure(std::abs(st.u.v[i]) <= 1.0 + 1e-9, "uniform part left [-1,1]");
    }
    GridFunction again = cond_expectation(st.s, Y);
    for (std::size_t i = 0; i < again.v.size(); ++i)
        ensure(std::abs(again.v[i] - st.s.v[i]) <= kExactTol,
               "structured part is not measurable against its factor");
    st.energy = energy_of(st.s);
    return st;
}

double seeded_offset(std::uint64_t seed, int level, std::size_t edge_index) {
    std::uint64_t h = seed;
    h ^= 0x9E3779B97F4A7C15ULL * (std::uint64_t(level) + 1);
    h ^= 0xC2B2AE3D27D4EB4FULL * (std::uint64_t(edge_index) + 1);
    std::mt19937_64 r(h);
    return std::uniform_real_distribution<double>(0.0, 1.0)(r);
}

Factor level_set_factor(const GridFunction& phi, double eta0, double alpha) {
    return build_interval_factor(phi, Interval{-1.0 - 1e-9, 1.0 + 1e-9}, eta0, alpha);
}

std::int64_t grid_base(double uniformity_factor, std::int64_t scale, std::int64_t P) {
    const double b = uniformity_factor * double(scale);
    if (b > double(P)) return P + 1;
    return std::max<std::int64_t>(1, std::int64_t(std::ceil(b - 1e-9)));
}

double search_eps(double stop_bound, std::int64_t M, std::int64_t N) {
    // large enough that the window-search precondition N >= 10 M / eps^2
    // holds; never below the stop-test bound itself
    return std::max(stop_bound, std::sqrt(10.0 * double(M) / double(N)) * (1.0 + 1e-12));
}

GridFunction random_edge_measurable(GridShape amb, Edge e, std::mt19937_64& r) {
    GridFunction table({amb.P, e.size()}, 0.0);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (auto& x : table.v) x = d(r);
    GridFunction g(amb);
    const auto idx = e.indices();
    std::vector<std::int64_t> v(std::size_t(amb.l), 0);
    for (std::size_t f = 0; f < g.v.size(); ++f) {
        coords_of(amb, f, v);
        std::size_t key = 0;
        for (int i : idx) key = key * std::size_t(amb.P) + std::size_t(v[std::size_t(i)]);
        g.v[f] = table.v[key];
    }
    return g;
}

} // namespace

ScaleLadder::ScaleLadder(std::vector<std::int64_t> scales) : M(std::move(scales)) {
    require(!M.empty(), "scale ladder must be nonempty");
    require(M.front() == 1, "scale ladder must start at 1");
    for (std::size_t i = 0; i + 1 < M.size(); ++i)
        require(M[i] <= M[i + 1], "scale ladder must be nondecreasing");
}

ScaleLadder ScaleLadder::from_growth(const std::function<std::int64_t(std::int64_t)>& F, int K) {
    require(K >= 1, "ladder length must be positive");
    std::vector<std::int64_t> scales{1};
    for (int i = 1; i < K; ++i) {
        const std::int64_t prev = scales.back();
        const std::int64_t next = F(prev);
        require(next >= prev, "growth function must satisfy F(M) >= M");
        require(next <= (std::int64_t(1) << 62) / 4, "scale ladder overflow");
        scales.push_back(next);
    }
    return ScaleLadder(std::move(scales));
}

const char* to_string(KvnStatus s) {
    switch (s) {
    case KvnStatus::Uniform: return "uniform";
    case KvnStatus::TerminatedAtFloor: return "terminated_at_floor";
    case KvnStatus::NoProgress: return "no_progress";
    }
    return "unknown";
}

KvnConfig KvnConfig::for_1d(double eps) { return for_hypergraph(eps, 1); }

KvnConfig KvnConfig::for_hypergraph(double eps, std::size_t m) {
    require(eps > 0.0 && eps <= 2.0, "eps must lie in (0,2]");
    require(m >= 1, "family size must be positive");
    const double md = double(m);
    KvnConfig c;
    c.eps = eps;
    c.eta0 = eps * eps / (16.0 * md * md);
    c.correlation_threshold = eps * eps / (8.0 * md * md);
    c.energy_increment = std::pow(eps, 4) / (64.0 * std::pow(md, 4));
    c.K_max = 12;
    c.uniformity_factor = 1000.0 * md * md / (eps * eps);
    c.random_probes = 16;
    c.seed = 1;
    return c;
}

double KvnConfig::gate() const {
    return std::max(correlation_threshold, std::sqrt(energy_increment) + eta0);
}

void KvnConfig::validate() const {
    require(eps > 0.0 && eps <= 2.0, "eps must lie in (0,2]");
    require(eta0 > 0.0, "eta0 must be positive");
    require(correlation_threshold > 0.0, "correlation threshold must be positive");
    require(energy_increment > 0.0, "energy increment must be positive");
    require(K_max >= 2, "K_max must be at least 2");
    require(uniformity_factor > 0.0, "uniformity factor must be positive");
    require(random_probes >= 0, "random probe count must be nonnegative");
}

std::vector<ConstantDeviation> KvnConfig::deviations(std::size_t m) const {
    const double md = double(m);
    const double e2 = eps * eps, e4 = e2 * e2;
    std::vector<ConstantDeviation> out;
    out.push_back({"eta0", eta0, e2 / (400.0 * md * md)});
    out.push_back({"correlation_threshold", correlation_threshold, e2 / (200.0 * md * md)});
    out.push_back({"energy_increment", energy_increment, e4 / (1e6 * md * md * md * md)});
    out.push_back({"uniformity_factor", uniformity_factor, 1000.0 * md * md / e2});
    out.push_back({"ladder_length_cap", double(K_max), std::floor(1e6 * std::pow(md, 5) / e4) + 3.0});
    out.push_back({"descent_gate", gate(), e2 / (200.0 * md * md)});
    return out;
}

std::vector<std::int64_t> uniformity_check_grid(std::int64_t base, std::int64_t P,
                                                std::span<const std::int64_t> extra) {
    require(P >= 1, "grid modulus must be positive");
    std::vector<std::int64_t> out;
    if (base < 1) base = 1;
    for (std::int64_t n = base; n <= P; n *= 2) {
        out.push_back(n);
        if (n > P / 2) break;
    }
    for (std::int64_t x : extra)
        if (x >= base && x <= P) out.push_back(x);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

double uniformity_probe(const GridFunction& u, std::span<const GridFunction> profile,
                        std::size_t skip, std::int64_t N) {
    GridFunction prod = u;
    for (std::size_t j = 0; j < profile.size(); ++j) {
        if (j == skip) continue;
        require(profile[j].shape == u.shape, "probe profile shape mismatch");
        for (std::size_t i = 0; i < prod.v.size(); ++i) prod.v[i] *= profile[j].v[i];
    }
    return lp_norm(diagonal_projection(prod, N), Norm::L2);
}

std::vector<std::vector<GridFunction>> kvn_probe_profiles(std::span<const EdgeFunction> gs,
                                                          std::span<const GridFunction> structured,
                                                          const KvnConfig& cfg) {
    require(gs.size() == structured.size(), "one structured part per input required");
    const std::size_t m = gs.size();
    std::vector<std::vector<GridFunction>> profiles;
    profiles.emplace_back(structured.begin(), structured.end());
    std::vector<GridFunction> originals;
    originals.reserve(m);
    for (const auto& ef : gs) originals.push_back(to_grid(ef.f));
    const GridShape amb = originals.front().shape;
    profiles.push_back(std::move(originals));
    profiles.emplace_back(m, GridFunction(amb, 1.0));
    std::mt19937_64 r(cfg.seed ^ 0xD1B54A32D192ED03ULL);
    for (int k = 0; k < cfg.random_probes; ++k) {
        std::vector<GridFunction> prof;
        prof.reserve(m);
        for (std::size_t j = 0; j < m; ++j)
            prof.push_back(random_edge_measurable(amb, gs[j].edge, r));
        profiles.push_back(std::move(prof));
    }
    return profiles;
}

Decomposition kvn_decompose_1d(const GridFunction& g, const ScaleLadder& ladder,
                               const KvnConfig& cfg) {
    cfg.validate();
    require(g.shape.l == 1, "decomposition runs on functions over the line");
    require_unit_interval(g, "input");
    const int K = ladder.K();
    require(K <= cfg.K_max, "ladder longer than K_max");
    const std::int64_t P = g.shape.P;
    const double stop_bound = cfg.eps / 10.0;
    const double gate = cfg.gate();
    const std::size_t max_descents =
        std::min<std::size_t>(std::size_t(K), std::size_t(std::ceil(1.0 / cfg.energy_increment)) + 1);

    Decomposition out;
    out.factor = trivial_factor(g.shape, FiniteProbabilitySpace::point());
    SplitState st = split_against(g, out.factor);
    out.energy_by_level.push_back(st.energy);

    int k = K + 1;
    int iter = 0;
    for (;;) {
        const std::int64_t scale = ladder.M[std::size_t(k - 2)];
        const auto grid =
            uniformity_check_grid(grid_base(cfg.uniformity_factor, scale, P), P, cfg.check_extra);
        SlidingAverager sa(st.u);
        std::optional<std::pair<std::int64_t, double>> fail;
        for (std::int64_t N : grid) {
            const double val = lp_norm(sa.eval(N), Norm::L2);
            if (val > stop_bound) {
                fail = {N, val};
                break;
            }
        }
        if (!fail) {
            out.status = KvnStatus::Uniform;
            break;
        }
        const double eps_s = search_eps(stop_bound, scale, fail->first);
        auto w = correlate_search_1(st.u, scale, fail->first, eps_s, 0.0);
        ensure(w.has_value(), "exhaustive shift scan returned no candidate");
        if (std::abs(w->correlation) < gate) {
            out.status = KvnStatus::NoProgress;
            out.stall = StallInfo{k - 1, 0, fail->first, fail->second, w->correlation, gate};
            break;
        }
        ++iter;
        const double alpha = seeded_offset(cfg.seed, k - 1, 0);
        Factor refined = join(level_set_factor(w->phi.realized, cfg.eta0, alpha), out.factor);
        SplitState next = split_against(g, refined);
        ensure(next.energy >= st.energy + cfg.energy_increment * (1.0 - 1e-9) - 1e-12,
               "accepted descent raised the energy by less than the configured increment");
        ensure(std::size_t(iter) <= max_descents, "descent count exceeded the guaranteed bound");
        out.ledger.push_back({iter, k - 1, 0, "{0}", scale, fail->first, fail->second,
                              w->correlation, st.energy, next.energy});
        out.witnesses.push_back({k - 1, 0, std::move(w->phi), alpha, w->correlation});
        out.factor = std::move(refined);
        st = std::move(next);
        out.energy_by_level.push_back(st.energy);
        --k;
        if (k == 1) {
            out.status = KvnStatus::TerminatedAtFloor;
            break;
        }
    }
    out.k = k;
    out.g_structured = std::move(st.s);
    out.g_uniform = std::move(st.u);
    return out;
}

HypergraphDecomposition kvn_decompose_hypergraph(std::span<const EdgeFunction> gs,
                                                 const ScaleLadder& ladder,
                                                 const KvnConfig& cfg) {
    cfg.validate();
    require(!gs.empty(), "edge family must be nonempty");
    const std::size_t m = gs.size();
    const GridShape amb = gs.front().f.shape;
    const int fiber = amb.l - 1;
    const int d = gs.front().edge.size();
    require(d <= amb.l - 1, "edge size must leave room for the window direction");
    for (std::size_t a = 0; a < m; ++a) {
        require(gs[a].f.shape == amb, "family members must share one grid");
        require(gs[a].f.space.size() == 1, "hypergraph runs need a single-point sample space");
        require(gs[a].edge.size() == d, "edges must share one size");
        require(gs[a].edge.contains(fiber), "every edge must contain the window coordinate");
        for (std::size_t b = a + 1; b < m; ++b)
            require(!(gs[a].edge == gs[b].edge), "edges must be distinct");
    }
    const int K = ladder.K();
    require(K <= cfg.K_max, "ladder longer than K_max");
    const std::int64_t P = amb.P;
    const double stop_bound = cfg.eps / (10.0 * double(m));
    const double gate = cfg.gate();
    const std::size_t max_descents = std::min<std::size_t>(
        std::size_t(K), std::size_t(std::ceil(double(m) / cfg.energy_increment)) + 1);

    HypergraphDecomposition out;
    std::vector<GridFunction> inputs;
    inputs.reserve(m);
    std::vector<SplitState> st;
    for (const auto& ef : gs) {
        out.edges.push_back(ef.edge);
        inputs.push_back(to_grid(ef.f));
        require_unit_interval(inputs.back(), "input");
        out.factors.push_back(trivial_factor(amb, FiniteProbabilitySpace::point()));
        st.push_back(split_against(inputs.back(), out.factors.back()));
    }
    auto combined = [&st] {
        double c = 0.0;
        for (const auto& s : st) c += s.energy;
        return c;
    };
    out.combined_energy.push_back(combined());

    int k = K + 1;
    int iter = 0;
    for (;;) {
        const std::int64_t scale = ladder.M[std::size_t(k - 2)];
        const auto grid =
            uniformity_check_grid(grid_base(cfg.uniformity_factor, scale, P), P, cfg.check_extra);
        std::vector<GridFunction> structured;
        structured.reserve(m);
        for (const auto& s : st) structured.push_back(s.s);
        const auto profiles = kvn_probe_profiles(gs, structured, cfg);

        struct Failure {
            std::int64_t N;
            std::size_t edge, profile;
            double value;
        };
        std::optional<Failure> fail;
        for (std::int64_t N : grid) {
            for (std::size_t e = 0; e < m && !fail; ++e)
                for (std::size_t p = 0; p < profiles.size() && !fail; ++p) {
                    const double val = uniformity_probe(st[e].u, profiles[p], e, N);
                    if (val > stop_bound) fail = Failure{N, e, p, val};
                }
            if (fail) break;
        }
        if (!fail) {
            out.status = KvnStatus::Uniform;
            break;
        }

        const std::size_t e0 = fail->edge;
        std::vector<EdgeFunction> family;
        family.reserve(m);
        for (std::size_t j = 0; j < m; ++j) {
            // deviation of these values from exact edge-measurability is
            // bounded by the inputs' own certificate, so skip the re-check
            const GridFunction& vals = (j == e0) ? st[j].u : profiles[fail->profile][j];
            family.push_back(EdgeFunction::unchecked(to_randomized(vals), out.edges[j]));
        }
        const double eps_s = search_eps(stop_bound, scale, fail->N);
        auto w = correlate_search_e(family, e0, scale, fail->N, eps_s, 0.0);
        ensure(w.has_value(), "exhaustive edge scan returned no candidate");
        if (std::abs(w->correlation) < gate) {
            out.status = KvnStatus::NoProgress;
            out.stall = StallInfo{k - 1, e0, fail->N, fail->value, w->correlation, gate};
            break;
        }
        ++iter;
        const double before = combined();
        const double alpha = seeded_offset(cfg.seed, k - 1, e0);
        Factor refined = join(level_set_factor(w->phi.realized, cfg.eta0, alpha), out.factors[e0]);
        SplitState next = split_against(inputs[e0], refined);
        const double delta = next.energy - st[e0].energy;
        ensure(delta >= cfg.energy_increment * (1.0 - 1e-9) - 1e-12,
               "accepted descent raised the energy by less than the configured increment");
        ensure(std::size_t(iter) <= max_descents, "descent count exceeded the guaranteed bound");
        out.factors[e0] = std::move(refined);
        st[e0] = std::move(next);
        const double after = combined();
        out.ledger.push_back({iter, k - 1, e0, out.edges[e0].to_string(), scale, fail->N,
                              fail->value, w->correlation, before, after});
        out.witnesses.push_back({k - 1, e0, std::move(w->phi), alpha, w->correlation});
        out.combined_energy.push_back(after);
        --k;
        if (k == 1) {
            out.status = KvnStatus::TerminatedAtFloor;
            break;
        }
    }
    out.k = k;
    out.structured.reserve(m);
    out.uniform.reserve(m);
    for (auto& s : st) {
        out.structured.push_back(std::move(s.s));
        out.uniform.push_back(std::move(s.u));
    }
    return out;
}

double telescoping_residual(std::span<const EdgeFunction> gs, const HypergraphDecomposition& dec,
                            std::int64_t N) {
    require(gs.size() == dec.structured.size(), "decomposition does not match the family");
    const std::size_t m = gs.size();
    const GridShape amb = gs.front().f.shape;
    GridFunction diff(amb, 1.0), prod_s(amb, 1.0);
    std::vector<GridFunction> originals;
    originals.reserve(m);
    for (const auto& ef : gs) originals.push_back(to_grid(ef.f));
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < diff.v.size(); ++i) {
            diff.v[i] *= originals[j].v[i];
            prod_s.v[i] *= dec.structured[j].v[i];
        }
    for (std::size_t i = 0; i < diff.v.size(); ++i) diff.v[i] -= prod_s.v[i];
    const double lhs = lp_norm(diagonal_projection(diff, N), Norm::L2);

    double budget = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        GridFunction term = dec.uniform[j];
        for (std::size_t jp = 0; jp < j; ++jp)
            for (std::size_t i = 0; i < term.v.size(); ++i) term.v[i] *= dec.structured[jp].v[i];
        for (std::size_t jp = j + 1; jp < m; ++jp)
            for (std::size_t i = 0; i < term.v.size(); ++i) term.v[i] *= originals[jp].v[i];
        budget += lp_norm(diagonal_projection(term, N), Norm::L2);
    }
    ensure(lhs <= budget + 1e-10, "telescoping residual exceeded its triangle budget");
    return lhs;
}

} // namespace ergo
