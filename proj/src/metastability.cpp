#include "ergo/metastability.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>

#include "ergo/averaging.hpp"
#include "ergo/errors.hpp"

namespace ergo {

namespace {

constexpr std::int64_t kGrowthCeiling = std::int64_t(1) << 62;

std::int64_t parse_int(const std::string& s) {
    require(!s.empty(), "growth function: empty integer field");
    std::size_t used = 0;
    std::int64_t val = 0;
    try {
        val = std::stoll(s, &used);
    } catch (const std::exception&) {
        throw PreconditionError("growth function: bad integer '" + s + "'");
    }
    require(used == s.size(), "growth function: trailing junk in '" + s + "'");
    return val;
}

double l2_distance(const GridFunction& a, const GridFunction& b) {
    require(a.shape == b.shape, "sequence elements changed shape");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a.v[i] - b.v[i];
        acc += d * d;
    }
    return std::sqrt(acc / double(a.size()));
}

double l2_distance(const RandomizedGridFunction& a, const RandomizedGridFunction& b) {
    require(a.shape == b.shape && a.space.size() == b.space.size(),
            "mismatched functions in distance");
    double acc = 0.0;
    const std::size_t n = a.grid_size();
    for (std::size_t x = 0; x < a.space.size(); ++x) {
        double cell = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = a.v[x * n + i] - b.v[x * n + i];
            cell += d * d;
        }
        acc += a.space.w[x] * cell / double(n);
    }
    return std::sqrt(acc);
}

// Extension without the construction-time identity asserts, shared by
// extend_probability_space and aggregation_identity.
RandomizedGridFunction glue_parts(std::span<const RandomizedGridFunction> parts) {
    require(!parts.empty(), "need at least one part");
    const auto shape = parts[0].shape;
    const auto xs = parts[0].space.size();
    for (const auto& p : parts) {
        require(p.shape == shape, "parts must share one grid shape");
        require(p.space.size() == xs, "parts must share one sample space");
        for (std::size_t x = 0; x < xs; ++x)
            require(std::abs(p.space.w[x] - parts[0].space.w[x]) <= 1e-12,
                    "parts must share one sample space");
    }
    const std::size_t J = parts.size();
    guard_alloc(J * xs * shape.size());
    std::vector<double> w(J * xs);
    for (std::size_t k = 0; k < J; ++k)
        for (std::size_t x = 0; x < xs; ++x)
            w[k * xs + x] = parts[0].space.w[x] / double(J);
    RandomizedGridFunction out(shape, FiniteProbabilitySpace(std::move(w)));
    const std::size_t n = out.grid_size();
    for (std::size_t k = 0; k < J; ++k)
        std::copy(parts[k].v.begin(), parts[k].v.end(), out.v.begin() + std::ptrdiff_t(k * xs * n));
    return out;
}

} // namespace

std::int64_t GrowthFunction::operator()(std::int64_t M) const {
    require(M >= 1, "growth functions are defined on positive integers");
    switch (kind) {
    case Kind::Affine: {
        auto wide = static_cast<__int128>(a) * M + b;
        require(wide < static_cast<__int128>(kGrowthCeiling), "growth function overflow");
        return static_cast<std::int64_t>(wide);
    }
    case Kind::Power: {
        double val = std::pow(double(M), c);
        require(val < double(kGrowthCeiling), "growth function overflow");
        auto r = std::llround(val);
        return std::max<std::int64_t>(r, M); // guard rounding at c near 1
    }
    case Kind::Table:
        require(M <= std::int64_t(table.size()),
                "table growth function evaluated beyond its domain");
        return table[std::size_t(M - 1)];
    }
    throw PreconditionError("corrupt growth function");
}

std::string GrowthFunction::to_string() const {
    char buf[64];
    switch (kind) {
    case Kind::Affine:
        if (a == 1 && b == 0) return "M";
        if (a == 1) {
            std::snprintf(buf, sizeof buf, "M+%lld", static_cast<long long>(b));
        } else if (b == 0) {
            std::snprintf(buf, sizeof buf, "%lld*M", static_cast<long long>(a));
        } else {
            std::snprintf(buf, sizeof buf, "%lld*M+%lld", static_cast<long long>(a),
                          static_cast<long long>(b));
        }
        return buf;
    case Kind::Power:
        std::snprintf(buf, sizeof buf, "M^%g", c);
        return buf;
    case Kind::Table:
        std::snprintf(buf, sizeof buf, "table[%zu]", table.size());
        return buf;
    }
    return "?";
}

GrowthFunction GrowthFunction::affine(std::int64_t a, std::int64_t b) {
    require(a >= 1 && b >= 0, "affine growth needs a >= 1, b >= 0 so that F(M) >= M");
    GrowthFunction f;
    f.kind = Kind::Affine;
    f.a = a;
    f.b = b;
    return f;
}

GrowthFunction GrowthFunction::power(double c) {
    require(std::isfinite(c) && c >= 1.0, "power growth needs exponent >= 1");
    GrowthFunction f;
    f.kind = Kind::Power;
    f.c = c;
    return f;
}

GrowthFunction GrowthFunction::from_table(std::vector<std::int64_t> table) {
    require(!table.empty(), "table growth function needs at least one entry");
    for (std::size_t i = 0; i < table.size(); ++i) {
        require(table[i] >= std::int64_t(i) + 1, "table growth must satisfy F(M) >= M");
        if (i) require(table[i] >= table[i - 1], "table growth must be non-decreasing");
    }
    GrowthFunction f;
    f.kind = Kind::Table;
    f.table = std::move(table);
    return f;
}

GrowthFunction GrowthFunction::parse(const std::string& text) {
    std::string s;
    for (char ch : text)
        if (!std::isspace(static_cast<unsigned char>(ch))) s.push_back(ch);
    require(!s.empty(), "empty growth function");

    auto mpos = s.find('M');
    require(mpos != std::string::npos && s.find('M', mpos + 1) == std::string::npos,
            "growth function must mention M exactly once, e.g. \"M^2\" or \"8*M+3\"");

    if (auto caret = s.find('^'); caret != std::string::npos) {
        require(mpos == 0 && caret == 1, "power form is \"M^c\"");
        std::size_t used = 0;
        double c = 0;
        try {
            c = std::stod(s.substr(2), &used);
        } catch (const std::exception&) {
            throw PreconditionError("growth function: bad exponent in '" + text + "'");
        }
        require(used == s.size() - 2, "growth function: trailing junk in '" + text + "'");
        return power(c);
    }

    std::string before = s.substr(0, mpos);
    std::string after = s.substr(mpos + 1);
    std::int64_t a = 1, b = 0;
    if (!before.empty()) {
        if (before.back() == '*') before.pop_back();
        a = parse_int(before);
    }
    if (!after.empty() && after[0] == '*') {
        require(before.empty(), "growth function: coefficient given twice in '" + text + "'");
        auto plus = after.find('+');
        a = parse_int(after.substr(1, plus == std::string::npos ? plus : plus - 1));
        after = plus == std::string::npos ? "" : after.substr(plus);
    }
    if (!after.empty()) {
        require(after[0] == '+', "growth function: expected \"+b\" after M in '" + text + "'");
        b = parse_int(after.substr(1));
    }
    return affine(a, b);
}

std::string to_string(WindowStatus s) {
    return s == WindowStatus::Certified ? "certified" : "no_window_found";
}

MetastabilityReport find_metastable_window(const std::function<GridFunction(std::int64_t)>& seq,
                                           const GrowthFunction& F, double eps,
                                           std::int64_t M_star, std::int64_t M_cap,
                                           bool exhaustive, std::string sequence_id) {
    require(eps > 0, "tolerance must be positive");
    require(M_star >= 1 && M_star <= M_cap, "need 1 <= M_star <= M_cap");

    MetastabilityReport rep;
    rep.eps = eps;
    rep.sequence_id = std::move(sequence_id);

    for (std::int64_t M = M_star; M <= M_cap; ++M) {
        rep.scanned_up_to = M;
        const std::int64_t FM = F(M);
        GridFunction base = seq(M);
        double D = 0.0;
        std::int64_t evals = 0;
        bool rejected = false;
        for (std::int64_t N = M + 1; N <= FM; ++N) {
            D = std::max(D, l2_distance(seq(N), base));
            ++evals;
            if (2.0 * D > eps) {
                rejected = true;
                break;
            }
        }
        if (rejected) continue;

        rep.status = WindowStatus::Certified;
        rep.M = M;
        rep.F_M = FM;
        if (exhaustive) {
            std::int64_t pairs = 0;
            double mx = exhaustive_pair_deviation(seq, M, FM, &pairs);
            ensure(mx <= 2.0 * D + 1e-12, "pairwise max exceeded its triangle bound");
            rep.max_deviation = mx;
            rep.pairs_checked = pairs;
            rep.exhaustive = true;
        } else {
            rep.max_deviation = 2.0 * D;
            rep.pairs_checked = evals;
        }
        return rep;
    }
    rep.scanned_up_to = M_cap;
    return rep;
}

double exhaustive_pair_deviation(const std::function<GridFunction(std::int64_t)>& seq,
                                 std::int64_t M, std::int64_t F_M, std::int64_t* pairs) {
    require(M >= 1 && F_M >= M, "bad window");
    const auto W = std::size_t(F_M - M + 1);
    std::vector<GridFunction> vals;
    vals.reserve(W);
    vals.push_back(seq(M));
    guard_alloc(W * vals[0].size());
    for (std::int64_t N = M + 1; N <= F_M; ++N) vals.push_back(seq(N));

    double mx = 0.0;
    std::int64_t count = 0;
    for (std::size_t i = 0; i < W; ++i)
        for (std::size_t j = i + 1; j < W; ++j) {
            mx = std::max(mx, l2_distance(vals[i], vals[j]));
            ++count;
        }
    if (pairs) *pairs = count;
    return mx;
}

RandomizedGridFunction extend_probability_space(std::span<const RandomizedGridFunction> parts) {
    RandomizedGridFunction out = glue_parts(parts);
    require(out.shape.l >= 1, "parts need at least one grid coordinate");

    const std::int64_t P = out.shape.P;
    const std::int64_t probes[][2] = {{1, std::max<std::int64_t>(P / 2, 2)}, {2, P}};
    for (auto [N, Np] : probes) {
        AggregationCheck chk = aggregation_identity(parts, N, Np);
        ensure(std::abs(chk.lhs - chk.rhs) <= 1e-10, "extension broke the aggregation identity");
    }
    return out;
}

AggregationCheck aggregation_identity(std::span<const RandomizedGridFunction> parts,
                                      std::int64_t N, std::int64_t Np) {
    RandomizedGridFunction glued = glue_parts(parts);
    require(glued.shape.l >= 1, "parts need at least one grid coordinate");

    AggregationCheck chk;
    chk.lhs = std::sqrt(double(parts.size())) *
              l2_distance(diagonal_projection(glued, N), diagonal_projection(glued, Np));

    double acc = 0.0;
    RandomizedGridFunction total = parts[0];
    for (std::size_t k = 0; k < parts.size(); ++k) {
        double d = l2_distance(diagonal_projection(parts[k], N), diagonal_projection(parts[k], Np));
        acc += d * d;
        if (k > 0)
            for (std::size_t i = 0; i < total.v.size(); ++i) total.v[i] += parts[k].v[i];
    }
    chk.rhs = std::sqrt(acc);
    chk.sum_side = l2_distance(diagonal_projection(total, N), diagonal_projection(total, Np));
    return chk;
}

DctProbeReport finitary_dct_probe(
    const std::function<double(std::int64_t, std::int64_t, std::size_t)>& f,
    const FiniteProbabilitySpace& space, const GrowthFunction& F, double eps,
    std::int64_t window_cap) {
    require(eps > 0, "tolerance must be positive");
    require(window_cap >= 1, "window cap must be positive");

    DctProbeReport rep;
    for (std::int64_t M = 1; M <= window_cap; ++M) {
        rep.scanned_up_to = M;
        const std::int64_t FM = F(M);
        double mx = 0.0;
        std::int64_t pairs = 0;
        bool rejected = false;
        for (std::int64_t n = M; n <= FM && !rejected; ++n)
            for (std::int64_t np = M; np <= FM; ++np) {
                double integral = 0.0;
                for (std::size_t x = 0; x < space.size(); ++x) {
                    double val = f(n, np, x);
                    require(val >= -1e-12 && val <= 1.0 + 1e-12,
                            "dct probe data must lie in [0, 1]");
                    integral += space.w[x] * val;
                }
                ++pairs;
                mx = std::max(mx, integral);
                if (integral > eps) {
                    rejected = true;
                    break;
                }
            }
        if (rejected) continue;
        rep.certified = true;
        rep.M = M;
        rep.F_M = FM;
        rep.max_integral = mx;
        rep.pairs_checked = pairs;
        return rep;
    }
    return rep;
}

} // namespace ergo
