#include "ergo/factors.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "ergo/errors.hpp"

namespace ergo {

void Factor::validate() const {
    require(atom_count >= 1, "factor needs at least one atom");
    require(label.size() == domain_size(), "factor label table does not match its domain");
    for (std::uint32_t lab : label)
        require(lab < atom_count, "factor label out of range");
}

std::vector<std::size_t> Factor::atom_sizes() const {
    std::vector<std::size_t> sz(atom_count, 0);
    for (std::uint32_t lab : label) sz[lab]++;
    return sz;
}

std::vector<double> Factor::atom_masses() const {
    const std::size_t gs = shape.size();
    std::vector<double> mass(atom_count, 0.0);
    std::size_t i = 0;
    for (std::size_t x = 0; x < space.size(); ++x) {
        const double wp = space.w[x] / double(gs);
        for (std::size_t g = 0; g < gs; ++g, ++i) mass[label[i]] += wp;
    }
    return mass;
}

Factor trivial_factor(GridShape shape, FiniteProbabilitySpace space) {
    Factor Y;
    Y.shape = shape;
    Y.space = std::move(space);
    Y.label.assign(Y.domain_size(), 0);
    Y.atom_count = 1;
    Y.prov = TrivialProvenance{};
    return Y;
}

Factor edge_factor(GridShape shape, FiniteProbabilitySpace space, Edge e) {
    require(e.ambient == shape.l, "edge ambient dimension does not match the grid");
    const std::size_t gs = shape.size();
    const auto idx = e.indices();
    // pattern id of the e-coordinates, then one atom per (pattern, x)
    std::vector<std::uint32_t> pat(gs);
    std::vector<std::int64_t> c(size_t(shape.l));
    std::size_t npat = 1;
    for (int k = 0; k < e.size(); ++k) npat *= std::size_t(shape.P);
    guard_alloc(npat * space.size());
    for (std::size_t g = 0; g < gs; ++g) {
        coords_of(shape, g, c);
        std::size_t id = 0;
        for (int i : idx) id = id * std::size_t(shape.P) + std::size_t(c[size_t(i)]);
        pat[g] = std::uint32_t(id);
    }
    Factor Y;
    Y.shape = shape;
    Y.space = std::move(space);
    Y.label.resize(gs * Y.space.size());
    std::size_t i = 0;
    for (std::size_t x = 0; x < Y.space.size(); ++x)
        for (std::size_t g = 0; g < gs; ++g, ++i)
            Y.label[i] = std::uint32_t(x * npat + pat[g]);
    Y.atom_count = std::uint32_t(npat * Y.space.size());
    Y.prov = EdgeProvenance{e};
    return Y;
}

Factor build_interval_factor(const RandomizedGridFunction& phi, Interval range, double eta0,
                             double alpha) {
    require(eta0 > 0.0, "interval factor needs a positive cell width");
    require(alpha >= 0.0 && alpha < 1.0, "interval factor offset must lie in [0,1)");
    require(range.hi > range.lo, "interval factor needs a nondegenerate range");

    const std::size_t n = phi.v.size();
    for (double t : phi.v)
        require(t >= range.lo - 1e-12 && t <= range.hi + 1e-12,
                "generating function leaves the declared range");

    // cells are [(n+alpha) eta0, (n+1+alpha) eta0); floor gives the
    // lower-inclusive bin of each value
    auto bin = [&](double t) { return (std::int64_t)std::floor(t / eta0 - alpha); };
    const std::int64_t n_min = bin(range.lo);
    const std::int64_t n_max = bin(range.hi);
    const std::int64_t cells = n_max - n_min + 1;
    guard_alloc(std::size_t(cells));

    Factor Y;
    Y.shape = phi.shape;
    Y.space = phi.space;
    Y.label.resize(n);
    Y.atom_count = std::uint32_t(cells);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = std::clamp(phi.v[i], range.lo, range.hi);
        const std::int64_t b = std::clamp(bin(t), n_min, n_max);
        Y.label[i] = std::uint32_t(b - n_min);
    }

    IntervalProvenance prov;
    prov.eta0 = eta0;
    prov.alpha = alpha;
    prov.range = range;
    prov.cells.reserve(std::size_t(cells));
    for (std::int64_t b = n_min; b <= n_max; ++b)
        prov.cells.push_back({(double(b) + alpha) * eta0, (double(b) + 1.0 + alpha) * eta0});
    prov.phi = std::make_shared<RandomizedGridFunction>(phi);
    Y.prov = std::move(prov);
    return Y;
}

Factor build_interval_factor(const GridFunction& phi, Interval range, double eta0, double alpha) {
    return build_interval_factor(to_randomized(phi), range, eta0, alpha);
}

static void require_compatible(const Factor& a, const Factor& b) {
    require(a.shape.P == b.shape.P && a.shape.l == b.shape.l, "factors live on different grids");
    require(a.space.size() == b.space.size(), "factors live over different sample spaces");
    for (std::size_t x = 0; x < a.space.size(); ++x)
        require(std::abs(a.space.w[x] - b.space.w[x]) <= 1e-12,
                "factors live over different sample spaces");
}

Factor join(const Factor& a, const Factor& b) {
    require_compatible(a, b);
    const std::size_t n = a.label.size();

    Factor Y;
    Y.shape = a.shape;
    Y.space = a.space;
    Y.label.resize(n);
    std::unordered_map<std::uint64_t, std::uint32_t> seen;
    seen.reserve(std::size_t(a.atom_count) + b.atom_count);
    std::uint32_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t key = std::uint64_t(a.label[i]) * b.atom_count + b.label[i];
        auto [it, fresh] = seen.emplace(key, next);
        if (fresh) ++next;
        Y.label[i] = it->second;
    }
    Y.atom_count = next;
    Y.prov = JoinProvenance{std::make_shared<Factor>(a), std::make_shared<Factor>(b)};
    return Y;
}

RandomizedGridFunction cond_expectation(const RandomizedGridFunction& f, const Factor& Y) {
    require(f.shape.P == Y.shape.P && f.shape.l == Y.shape.l && f.space.size() == Y.space.size(),
            "function and factor live on different domains");
    require(f.v.size() == Y.label.size(), "function and factor live on different domains");

    const std::size_t gs = f.shape.size();
    std::vector<double> sum(Y.atom_count, 0.0), mass(Y.atom_count, 0.0);
    std::size_t i = 0;
    for (std::size_t x = 0; x < f.space.size(); ++x) {
        const double wp = f.space.w[x] / double(gs);
        for (std::size_t g = 0; g < gs; ++g, ++i) {
            sum[Y.label[i]] += wp * f.v[i];
            mass[Y.label[i]] += wp;
        }
    }
    std::vector<double> mean(Y.atom_count, 0.0);
    for (std::uint32_t aid = 0; aid < Y.atom_count; ++aid)
        if (mass[aid] > 0.0) mean[aid] = sum[aid] / mass[aid];

    RandomizedGridFunction out = f;
    for (std::size_t j = 0; j < out.v.size(); ++j) out.v[j] = mean[Y.label[j]];
    return out;
}

GridFunction cond_expectation(const GridFunction& f, const Factor& Y) {
    require(Y.space.size() == 1, "grid function conditioned on a randomized factor");
    auto rg = cond_expectation(to_randomized(f), Y);
    GridFunction out;
    out.shape = f.shape;
    out.v = std::move(rg.v);
    return out;
}

EdgeFunction edge_factor_project(const RandomizedGridFunction& f, Edge e) {
    return EdgeFunction(edge_project(f, e), e);
}

namespace {

// quintic crossfade: 0 below u=-1, 1 above u=1, C^2 across the joints
double smooth01(double u) {
    if (u <= -1.0) return 0.0;
    if (u >= 1.0) return 1.0;
    const double t = (u + 1.0) * 0.5;
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

} // namespace

AtomPolynomial atom_polynomial(const Factor& Y, std::uint32_t atom, double eta1,
                               const AtomPolyOptions& opts) {
    require(eta1 > 0.0, "atom polynomial needs a positive error budget");
    require(atom < Y.atom_count, "atom index out of range");
    const auto* iv = std::get_if<IntervalProvenance>(&Y.prov);
    require(iv != nullptr, "atom polynomials are only defined for interval factors");
    require(iv->phi != nullptr, "interval factor lost its generating function");
    const RandomizedGridFunction& phi = *iv->phi;

    const Interval range = iv->range;
    const Interval cell = iv->cells[atom];
    const double span = range.hi - range.lo;

    // geometric width ladder, floored at the conservative default eta1^2 eta0
    const double w_lo = std::max(eta1 * eta1 * iv->eta0, 1e-12);
    const double w_hi = std::max(w_lo * 1.0000001, std::min(iv->eta0, span) * 0.5);
    std::vector<double> widths;
    if (opts.width_steps <= 1) {
        widths.push_back(w_lo);
    } else {
        const double r = std::pow(w_hi / w_lo, 1.0 / double(opts.width_steps - 1));
        for (int i = 0; i < opts.width_steps; ++i) widths.push_back(w_lo * std::pow(r, i));
    }

    std::vector<int> degrees;
    for (int d : {16, 32, 64, 128})
        if (d < opts.degree_cap) degrees.push_back(d);
    degrees.push_back(opts.degree_cap);

    const std::size_t gs = phi.shape.size();
    auto indicator = [&](std::size_t i) { return Y.label[i] == atom ? 1.0 : 0.0; };

    for (int deg : degrees) {
        bool have = false;
        AtomPolynomial best{};
        for (double h : widths) {
            auto ramp = [&](double t) {
                const double up = cell.lo <= range.lo ? 1.0 : smooth01((t - cell.lo) / h);
                const double dn = cell.hi >= range.hi ? 1.0 : smooth01((cell.hi - t) / h);
                return up * dn;
            };
            Polynomial p = chebyshev_interpolant(ramp, range, deg);
            const RangeEstimate re = range_on_grid(p, opts.range_samples);
            if (re.lo < -opts.range_slack || re.hi > 1.0 + opts.range_slack) continue;

            double l1 = 0.0, sup = 0.0;
            bool ok = true;
            std::size_t i = 0;
            for (std::size_t x = 0; x < phi.space.size() && ok; ++x) {
                const double wp = phi.space.w[x] / double(gs);
                for (std::size_t g = 0; g < gs; ++g, ++i) {
                    const double pv = p(phi.v[i]);
                    const double err = std::abs(indicator(i) - pv);
                    if (std::abs(pv) > 1.0 + opts.range_slack || err > 1.0 + 1e-9) {
                        ok = false;
                        break;
                    }
                    l1 += wp * err;
                    sup = std::max(sup, err);
                }
            }
            if (!ok || l1 > eta1) continue;
            if (!have || l1 < best.l1_error) {
                best = AtomPolynomial{std::move(p), l1, sup, h, atom};
                have = true;
            }
        }
        if (have) return best;
    }
    throw PreconditionError(
        "no atom polynomial certified at the degree cap; re-randomize the factor offset");
}

} // namespace ergo
