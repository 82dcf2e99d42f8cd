#include "ergo/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "ergo/errors.hpp"

namespace ergo {

namespace {

constexpr long double kTwo64 = 18446744073709551616.0L;

// n*(n-1)/2 mod 2^64, exact for any int64 n. The product of two consecutive
// integers is even, so the division is exact before reduction.
std::uint64_t triangular_mod64(std::int64_t n) {
    auto t = static_cast<__int128>(n) * (static_cast<__int128>(n) - 1) / 2;
    return static_cast<std::uint64_t>(static_cast<unsigned __int128>(t));
}

} // namespace

std::uint64_t to_fixed(double v) {
    require(std::isfinite(v), "torus coordinate must be finite");
    double frac = v - std::floor(v);
    if (frac >= 1.0) frac = 0.0; // floor rounding at the seam
    auto f = static_cast<std::uint64_t>(static_cast<long double>(frac) * kTwo64);
    return f;
}

double to_unit(std::uint64_t f) {
    return static_cast<double>(static_cast<long double>(f) / kTwo64);
}

TorusState make_state(std::span<const double> coords) {
    TorusState s;
    s.x.reserve(coords.size());
    for (double c : coords) s.x.push_back(to_fixed(c));
    return s;
}

double Observable::operator()(const TorusState& s) const {
    require(coord >= 0 && std::size_t(coord) < s.x.size(), "observable coordinate out of range");
    double u = to_unit(s.x[std::size_t(coord)]);
    if (kind == Kind::Cosine) return std::cos(2.0 * std::numbers::pi * u);
    return (u >= lo && u < hi) ? 1.0 : 0.0;
}

void DynamicalSystem::validate() const {
    require(dim >= 1, "system needs at least one torus coordinate");
    require(!gens.empty(), "system needs at least one generator");
    require(obs.size() == gens.size(), "one observable per generator");
    std::vector<char> used(std::size_t(dim), 0);
    for (const auto& g : gens) {
        require(g.coord >= 0 && g.coord + g.block_width() <= dim,
                "generator block out of range");
        for (int c = g.coord; c < g.coord + g.block_width(); ++c) {
            require(!used[std::size_t(c)],
                    "generator blocks overlap; commutation would be lost");
            used[std::size_t(c)] = 1;
        }
    }
    for (const auto& f : obs)
        require(f.coord >= 0 && f.coord < dim, "observable coordinate out of range");
}

DynamicalSystem DynamicalSystem::rotation(std::span<const double> alphas) {
    require(!alphas.empty(), "rotation system needs at least one angle");
    DynamicalSystem sys;
    sys.dim = int(alphas.size());
    for (int i = 0; i < sys.dim; ++i) {
        sys.gens.push_back({Generator::Kind::Rotation, i, to_fixed(alphas[std::size_t(i)])});
        sys.obs.push_back({Observable::Kind::Cosine, i, 0.0, 0.5});
    }
    return sys;
}

DynamicalSystem DynamicalSystem::skew(double alpha) {
    DynamicalSystem sys;
    sys.dim = 2;
    sys.gens.push_back({Generator::Kind::Skew, 0, to_fixed(alpha)});
    sys.obs.push_back({Observable::Kind::Cosine, 1, 0.0, 0.5});
    return sys;
}

DynamicalSystem DynamicalSystem::product(const DynamicalSystem& a, const DynamicalSystem& b) {
    a.validate();
    b.validate();
    DynamicalSystem sys = a;
    sys.dim = a.dim + b.dim;
    for (auto g : b.gens) {
        g.coord += a.dim;
        sys.gens.push_back(g);
    }
    for (auto f : b.obs) {
        f.coord += a.dim;
        sys.obs.push_back(f);
    }
    return sys;
}

TorusState apply_generator(const DynamicalSystem& sys, std::size_t gi, const TorusState& s,
                           std::int64_t n) {
    require(gi < sys.gens.size(), "generator index out of range");
    require(s.x.size() == std::size_t(sys.dim), "state dimension mismatch");
    const Generator& g = sys.gens[gi];
    TorusState out = s;
    auto un = static_cast<std::uint64_t>(n); // two's complement = mod 2^64
    auto c = std::size_t(g.coord);
    if (g.kind == Generator::Kind::Rotation) {
        out.x[c] = s.x[c] + un * g.alpha;
        return out;
    }
    // Skew closed form: T^n(x, y) = (x + n a, y + n x + a n(n-1)/2).
    out.x[c] = s.x[c] + un * g.alpha;
    out.x[c + 1] = s.x[c + 1] + un * s.x[c] + triangular_mod64(n) * g.alpha;
    return out;
}

bool commutation_witness(const DynamicalSystem& sys, const TorusState& s) {
    for (std::size_t i = 0; i < sys.gens.size(); ++i)
        for (std::size_t j = i + 1; j < sys.gens.size(); ++j) {
            TorusState ij = apply_generator(sys, i, apply_generator(sys, j, s, 1), 1);
            TorusState ji = apply_generator(sys, j, apply_generator(sys, i, s, 1), 1);
            if (!(ij == ji)) return false;
        }
    return true;
}

namespace {

std::string describe(const DynamicalSystem& sys) {
    std::ostringstream os;
    for (std::size_t i = 0; i < sys.gens.size(); ++i) {
        const auto& g = sys.gens[i];
        if (i) os << '|';
        os << (g.kind == Generator::Kind::Skew ? "skew" : "rot") << '@' << g.coord;
    }
    return os.str();
}

} // namespace

OrbitSample orbit_sample(const DynamicalSystem& sys, const TorusState& x0, std::int64_t P) {
    sys.validate();
    require(P >= 1, "window length P must be positive");
    require(x0.x.size() == std::size_t(sys.dim), "start state dimension mismatch");
    ensure(commutation_witness(sys, x0), "generators fail to commute on the start state");

    const auto l = int(sys.gens.size());
    GridShape shape{P, l};
    guard_alloc(std::size_t(l) * std::size_t(shape.size()));

    OrbitSample out;
    out.system_id = describe(sys);
    out.g.assign(std::size_t(l), GridFunction(shape));

    // Row-major odometer: the last coordinate moves fastest. states[d] holds
    // T_1^{v_1} .. T_d^{v_d} x0 so stepping coordinate d-1 is one map
    // application, never a power.
    std::vector<TorusState> states(std::size_t(l) + 1, x0);
    std::vector<std::int64_t> v(std::size_t(l), 0);
    for (int d = 0; d < l; ++d) states[std::size_t(d) + 1] = states[std::size_t(d)];

    const std::int64_t total = shape.size();
    for (std::int64_t flat = 0; flat < total; ++flat) {
        const TorusState& here = states[std::size_t(l)];
        for (int i = 0; i < l; ++i) out.g[std::size_t(i)].v[std::size_t(flat)] = sys.obs[std::size_t(i)](here);

        // Advance the odometer and refresh the state suffix.
        int d = l - 1;
        while (d >= 0) {
            if (++v[std::size_t(d)] < P) break;
            v[std::size_t(d)] = 0;
            --d;
        }
        if (d < 0) break; // last point
        states[std::size_t(d) + 1] =
            apply_generator(sys, std::size_t(d), states[std::size_t(d) + 1], 1);
        for (int k = d + 1; k < l; ++k) states[std::size_t(k) + 1] = states[std::size_t(k)];
    }
    return out;
}

} // namespace ergo
