#include "ergo/antiuniform.hpp"

#include <algorithm>
#include <cmath>

#include "ergo/averaging.hpp"
#include "ergo/errors.hpp"

namespace ergo {

namespace {

void check_unit(const GridFunction& f, const char* what, double tol = 1e-9) {
    for (double x : f.v)
        require(std::abs(x) <= 1.0 + tol, std::string(what) + " leaves [-1,1]");
}

std::vector<std::size_t> strides_of(const GridShape& s) {
    std::vector<std::size_t> st(std::size_t(s.l), 1);
    for (int k = s.l - 2; k >= 0; --k) st[std::size_t(k)] = st[std::size_t(k) + 1] * std::size_t(s.P);
    return st;
}

} // namespace

AntiUniform basic_antiuniform_1(const GridFunction& b, std::int64_t M) {
    require(b.shape.l == 1, "block must live on Z_P");
    require(M >= 1, "scale must be positive");
    check_unit(b, "block");
    const std::int64_t P = b.shape.P;

    std::vector<double> pre(std::size_t(P) + 1, 0.0);
    for (std::int64_t i = 0; i < P; ++i) pre[std::size_t(i) + 1] = pre[std::size_t(i)] + b.v[std::size_t(i)];
    const auto [q, r] = split_window(M, P);

    GridFunction phi(b.shape);
    for (std::int64_t v = 0; v < P; ++v) {
        double arc = 0.0;
        if (r > 0) {
            // backward arc of length r ending at v
            const std::int64_t a = mod_p(v - r + 1, P);
            arc = a <= v ? pre[std::size_t(v) + 1] - pre[std::size_t(a)]
                         : pre[std::size_t(v) + 1] + pre[std::size_t(P)] - pre[std::size_t(a)];
        }
        phi.v[std::size_t(v)] = (double(q) * pre[std::size_t(P)] + arc) / double(M);
    }

    AntiUniform out;
    out.e = Edge::of(1, {0});
    out.M = M;
    out.blocks = {b};
    out.realized = std::move(phi);
    return out;
}

AntiUniform basic_antiuniform_e(GridShape ambient, Edge e, std::span<const GridFunction> blocks,
                                std::int64_t M) {
    require(ambient.l >= 1, "ambient grid needs at least one coordinate");
    require(e.ambient == ambient.l, "edge ambient dimension does not match the grid");
    const int d = e.size();
    require(d >= 1, "edge must be nonempty");
    require(int(blocks.size()) == d, "need one block per edge coordinate");
    require(M >= 1, "scale must be positive");
    const std::int64_t P = ambient.P;
    const GridShape bshape{P, d};
    for (const auto& b : blocks) {
        require(b.shape == bshape, "blocks must live on Z_P^{|e|}");
        check_unit(b, "block", 1e-6);
    }

    const auto idx = e.indices();
    const GridShape fshape{P, d};
    const std::size_t fsz = fshape.size();
    guard_alloc(fsz);
    std::vector<double> fib(fsz);

    const auto [q, r] = split_window(M, P);
    const std::int64_t laps = q > 0 ? P : r;
    std::vector<std::int64_t> w(std::size_t(d), 0);
    for (std::size_t t = 0; t < fsz; ++t) {
        coords_of(fshape, t, w);
        std::int64_t s0 = 0;
        for (auto x : w) s0 += x;
        s0 %= P;
        double cyc = 0.0, rest = 0.0;
        for (std::int64_t m = 0; m < laps; ++m) {
            const std::size_t s = std::size_t(mod_p(s0 + m, P));
            double prod = 1.0;
            for (int i = 0; i < d; ++i) {
                std::size_t base = 0;
                for (int k = 0; k < d; ++k)
                    if (k != i) base = base * std::size_t(P) + std::size_t(w[std::size_t(k)]);
                prod *= blocks[std::size_t(i)].v[base * std::size_t(P) + s];
            }
            cyc += prod;
            if (m < r) rest += prod;
        }
        fib[t] = (q > 0 ? double(q) * cyc + rest : cyc) / double(M);
    }

    GridFunction out(ambient);
    std::vector<std::int64_t> c(std::size_t(ambient.l));
    for (std::size_t g = 0; g < out.v.size(); ++g) {
        coords_of(ambient, g, c);
        std::size_t key = 0;
        for (int i : idx) key = key * std::size_t(P) + std::size_t(c[std::size_t(i)]);
        out.v[g] = fib[key];
    }

    AntiUniform res;
    res.e = e;
    res.M = M;
    res.blocks.assign(blocks.begin(), blocks.end());
    res.realized = std::move(out);
    return res;
}

std::optional<CorrelationWitness> correlate_search_1(const GridFunction& g, std::int64_t M,
                                                     std::int64_t N, double eps,
                                                     double accept_threshold) {
    require(g.shape.l == 1, "search expects a function on Z_P");
    check_unit(g, "input");
    require(M >= 1 && N >= 1, "scales must be positive");
    require(eps > 0.0, "deviation bound must be positive");
    require(double(N) * eps * eps >= 10.0 * double(M) - 1e-9,
            "window too short for the scale: need N >= 10 M / eps^2");
    const std::int64_t P = g.shape.P;

    SlidingAverager sa(g);
    const double dev = lp_norm(sa.eval(N), Norm::L2);
    const GridFunction h = sa.eval(M);

    // Q(t) = <g, S_M g(. + t)>, scanned over every distinct shift, most
    // negative first so ties resolve to the smallest shift
    const std::int64_t T = std::min<std::int64_t>(2 * N - 1, P);
    double bestq = 0.0;
    std::int64_t bestt = 0;
    bool first = true;
    for (std::int64_t k = 0; k < T; ++k) {
        const std::int64_t t = -(N - 1) + k;
        const std::int64_t tm = mod_p(t, P);
        double acc = 0.0;
        for (std::int64_t v = 0; v < P; ++v) {
            std::int64_t u = v + tm;
            if (u >= P) u -= P;
            acc += g.v[std::size_t(v)] * h.v[std::size_t(u)];
        }
        acc /= double(P);
        if (first || std::abs(acc) > std::abs(bestq)) {
            bestq = acc;
            bestt = t;
            first = false;
        }
    }

    // rebuild the witness from its block and re-verify by direct summation
    const std::vector<std::int64_t> off{bestt + M - 1};
    AntiUniform phi = basic_antiuniform_1(shift(g, off), M);
    const double corr = inner_product(g, phi.realized);
    ensure(std::abs(corr - bestq) <= 1e-9, "witness realization disagrees with the scan");
    if (dev >= eps * (1.0 - 1e-12))
        ensure(std::abs(corr) >= 0.5 * eps * eps * (1.0 - 1e-12),
               "exhaustive scan fell below the guaranteed correlation");

    const double thr = accept_threshold < 0.0 ? eps * eps / 200.0 : accept_threshold;
    if (std::abs(corr) < thr) return std::nullopt;
    CorrelationWitness wit;
    wit.phi = std::move(phi);
    wit.correlation = corr;
    wit.deviation = dev;
    wit.threshold = thr;
    wit.shift = bestt;
    return wit;
}

std::optional<CorrelationWitness> correlate_search_e(std::span<const EdgeFunction> gs,
                                                     std::size_t target, std::int64_t M,
                                                     std::int64_t N, double eps,
                                                     double accept_threshold) {
    require(!gs.empty(), "need at least one edge function");
    require(target < gs.size(), "target index out of range");
    const GridShape ambient = gs[0].f.shape;
    const int amb = ambient.l;
    const std::int64_t P = ambient.P;
    require(amb >= 2, "edge search needs at least one base coordinate");
    const int fiber = amb - 1;
    const int d = gs[0].edge.size();
    for (const auto& ef : gs) {
        require(ef.f.shape == ambient && ef.f.space.size() == 1,
                "edge functions must share one deterministic grid");
        require(ef.edge.contains(fiber), "every edge must contain the fiber coordinate");
        require(ef.edge.size() == d, "edges must share one size");
        for (double x : ef.f.v) require(std::abs(x) <= 1.0 + 1e-9, "edge function leaves [-1,1]");
    }
    for (std::size_t a = 0; a < gs.size(); ++a)
        for (std::size_t b = a + 1; b < gs.size(); ++b)
            require(gs[a].edge.mask != gs[b].edge.mask, "edges must be distinct");
    require(d <= amb - 1, "the target edge needs a nonempty complement");
    require(M >= 1 && N >= 1, "scales must be positive");
    require(eps > 0.0, "deviation bound must be positive");
    require(double(N) * eps * eps >= 10.0 * double(M) - 1e-9,
            "window too short for the scale: need N >= 10 M / eps^2");

    const Edge e0 = gs[target].edge;
    const auto st = strides_of(ambient);

    // deviation source: the diagonal average of the full product
    GridFunction F(ambient, 1.0);
    for (const auto& ef : gs)
        for (std::size_t i = 0; i < F.v.size(); ++i) F.v[i] *= ef.f.v[i];
    const GridFunction h = diagonal_projection(F, N);
    const double dev = lp_norm(h, Norm::L2);

    // scan table: (diagonal average lifted back) times the non-target factors
    GridFunction QF(ambient);
    for (std::size_t i = 0; i < QF.v.size(); ++i) QF.v[i] = h.v[i / std::size_t(P)];
    for (std::size_t k = 0; k < gs.size(); ++k) {
        if (k == target) continue;
        for (std::size_t i = 0; i < QF.v.size(); ++i) QF.v[i] *= gs[k].f.v[i];
    }

    const auto comp = e0.complement().indices();
    const int j = comp[0];
    const std::vector<int> fco(comp.begin() + 1, comp.end());
    const auto eidx = e0.indices();

    // circular prefix sums of QF along the j-axis, one line per fixed choice
    // of the other coordinates
    const std::size_t stj = st[std::size_t(j)];
    const std::size_t gsz = QF.v.size();
    const std::size_t lines = gsz / std::size_t(P);
    guard_alloc(lines * (std::size_t(P) + 1));
    std::vector<double> pre(lines * (std::size_t(P) + 1));
    for (std::size_t lid = 0; lid < lines; ++lid) {
        const std::size_t hi = lid / stj, lo = lid % stj;
        const std::size_t base = hi * stj * std::size_t(P) + lo;
        double acc = 0.0;
        double* p = &pre[lid * (std::size_t(P) + 1)];
        p[0] = 0.0;
        for (std::int64_t t = 0; t < P; ++t) {
            acc += QF.v[base + std::size_t(t) * stj];
            p[t + 1] = acc;
        }
    }
    const auto [q, r] = split_window(M, P);
    auto wmean = [&](std::size_t lid, std::int64_t t0) {
        const double* p = &pre[lid * (std::size_t(P) + 1)];
        double arc = 0.0;
        if (r > 0) {
            const std::int64_t a = mod_p(t0 - r + 1, P);
            arc = a <= t0 ? p[t0 + 1] - p[a] : p[t0 + 1] + p[P] - p[a];
        }
        return (double(q) * p[P] + arc) / double(M);
    };

    // per e0-pattern: its flat index with all other coordinates zero, its
    // coordinate sum, and the target's value there
    const GridFunction g0 = to_grid(gs[target].f);
    const GridShape dshape{P, d};
    const std::size_t dsz = dshape.size();
    std::vector<double> g0v(dsz);
    std::vector<std::int64_t> sig(dsz);
    std::vector<std::size_t> fl0(dsz);
    {
        std::vector<std::int64_t> w(std::size_t(d), 0);
        for (std::size_t t = 0; t < dsz; ++t) {
            coords_of(dshape, t, w);
            std::size_t flat = 0;
            std::int64_t s = 0;
            for (int k = 0; k < d; ++k) {
                flat += std::size_t(w[std::size_t(k)]) * st[std::size_t(eidx[std::size_t(k)])];
                s += w[std::size_t(k)];
            }
            fl0[t] = flat;
            sig[t] = s % P;
            g0v[t] = g0.v[flat];
        }
    }

    // exhaustive pigeonhole scan over the frozen coordinates and the window
    // offset; first strict improvement wins, so ties resolve to scan order
    const GridShape fshape{P, int(fco.size())};
    const std::size_t fsz = fco.empty() ? 1 : fshape.size();
    const std::int64_t T = std::min<std::int64_t>(N, P);
    double bestW = 0.0;
    std::int64_t bestn = 0;
    std::size_t bestf = 0;
    bool first = true;
    std::vector<std::int64_t> vf(fco.size());
    for (std::size_t fi = 0; fi < fsz; ++fi) {
        std::int64_t sf = 0;
        std::size_t flatf = 0;
        if (!fco.empty()) {
            coords_of(fshape, fi, vf);
            for (std::size_t k = 0; k < fco.size(); ++k) {
                sf += vf[k];
                flatf += std::size_t(vf[k]) * st[std::size_t(fco[k])];
            }
        }
        for (std::int64_t n = 0; n < T; ++n) {
            double acc = 0.0;
            for (std::size_t t = 0; t < dsz; ++t) {
                const std::size_t flat = fl0[t] + flatf; // v_j = 0 here
                const std::size_t lid = (flat / (stj * std::size_t(P))) * stj + flat % stj;
                const std::int64_t t0 = mod_p(-sig[t] - sf - n, P);
                acc += g0v[t] * wmean(lid, t0);
            }
            acc /= double(dsz);
            if (first || std::abs(acc) > std::abs(bestW)) {
                bestW = acc;
                bestn = n;
                bestf = fi;
                first = false;
            }
        }
    }

    // rebuild witness blocks at the located (v_f, n): the lifted diagonal
    // average lands in the fiber block, each non-target factor in the block
    // of the smallest e0-coordinate its edge misses, unused blocks stay 1
    std::vector<std::int64_t> vfstar(fco.size());
    std::int64_t sfstar = 0;
    if (!fco.empty()) {
        coords_of(fshape, bestf, vfstar);
        for (auto x : vfstar) sfstar += x;
    }
    const std::int64_t c = mod_p(sfstar + bestn, P);

    std::vector<GridFunction> blocks(std::size_t(d), GridFunction(dshape, 1.0));
    for (int pos = 0; pos < d; ++pos) {
        const int i = eidx[std::size_t(pos)];
        const bool takes_h = (i == fiber);
        std::vector<std::size_t> assigned;
        for (std::size_t k = 0; k < gs.size(); ++k) {
            if (k == target) continue;
            int i0 = -1;
            for (int cand : eidx)
                if (!gs[k].edge.contains(cand)) {
                    i0 = cand;
                    break;
                }
            ensure(i0 >= 0, "distinct equal-size edges must differ somewhere");
            if (i0 == i) assigned.push_back(k);
        }
        if (!takes_h && assigned.empty()) continue;

        std::vector<int> others;
        for (int k : eidx)
            if (k != i) others.push_back(k);
        std::vector<std::int64_t> a(std::size_t(d), 0);
        auto& tbl = blocks[std::size_t(pos)];
        for (std::size_t t = 0; t < dsz; ++t) {
            coords_of(dshape, t, a);
            const std::int64_t s = a[std::size_t(d) - 1];
            const std::int64_t vj = mod_p(-s - c, P);
            std::size_t flat = std::size_t(vj) * stj;
            for (std::size_t k = 0; k < others.size(); ++k)
                flat += std::size_t(a[k]) * st[std::size_t(others[k])];
            for (std::size_t k = 0; k < vfstar.size(); ++k)
                flat += std::size_t(vfstar[k]) * st[std::size_t(fco[k])];
            double val = 1.0;
            if (takes_h) val *= h.v[flat / std::size_t(P)];
            for (auto k : assigned) val *= gs[k].f.v[flat];
            tbl.v[t] = val;
        }
    }

    AntiUniform phi = basic_antiuniform_e(ambient, e0, blocks, M);
    const double corr = inner_product(g0, phi.realized);
    ensure(std::abs(corr - bestW) <= 1e-9, "witness factorization disagrees with the scan");
    if (dev >= eps * (1.0 - 1e-12))
        ensure(std::abs(corr) >= 0.5 * eps * eps * (1.0 - 1e-12),
               "exhaustive scan fell below the guaranteed correlation");

    const double thr = accept_threshold < 0.0 ? eps * eps / 200.0 : accept_threshold;
    if (std::abs(corr) < thr) return std::nullopt;
    CorrelationWitness wit;
    wit.phi = std::move(phi);
    wit.correlation = corr;
    wit.deviation = dev;
    wit.threshold = thr;
    wit.shift = bestn;
    wit.frozen = std::move(vfstar);
    return wit;
}

} // namespace ergo
