#include "ergo/averaging.hpp"

#include <cmath>

namespace ergo {

namespace {

void check_unit_range(std::span<const GridFunction> fs) {
    for (const auto& f : fs)
        for (double x : f.v)
            require(std::abs(x) <= 1.0 + 1e-9, "input values must lie in [-1, 1]");
}

// Strides for row-major layout: moving coordinate i by +1 moves the flat
// index by stride[i] (before wraparound).
std::vector<std::size_t> strides_of(const GridShape& s) {
    std::vector<std::size_t> st(s.l, 1);
    for (int i = s.l - 2; i >= 0; --i) st[i] = st[i + 1] * static_cast<std::size_t>(s.P);
    return st;
}

} // namespace

GridFunction multiple_average_oracle(std::span<const GridFunction> fs, std::int64_t N) {
    require(!fs.empty(), "multiple_average needs at least one function");
    const GridShape shape = fs[0].shape;
    require(shape.l >= 1, "multiple_average needs l >= 1");
    for (const auto& f : fs) require(f.shape == shape, "multiple_average: shape mismatch");
    require(fs.size() == static_cast<std::size_t>(shape.l), "need exactly l functions");
    require(N >= 1, "window length must be >= 1");
    check_unit_range(fs);

    GridFunction out(shape);
    std::vector<std::int64_t> c(shape.l), d(shape.l);
    for (std::size_t a = 0; a < out.size(); ++a) {
        coords_of(shape, a, c);
        double acc = 0.0;
        for (std::int64_t n = 0; n < N; ++n) {
            double prod = 1.0;
            for (int i = 0; i < shape.l; ++i) {
                d = c;
                d[i] = mod_p(c[i] + n, shape.P);
                prod *= fs[i].at(d);
            }
            acc += prod;
        }
        out.v[a] = acc / static_cast<double>(N);
    }
    return out;
}

GridFunction multiple_average(std::span<const GridFunction> fs, std::int64_t N) {
    require(!fs.empty(), "multiple_average needs at least one function");
    const GridShape shape = fs[0].shape;
    require(shape.l >= 1, "multiple_average needs l >= 1");
    for (const auto& f : fs) require(f.shape == shape, "multiple_average: shape mismatch");
    require(fs.size() == static_cast<std::size_t>(shape.l), "need exactly l functions");
    check_unit_range(fs);

    // The n-orbit has period P, so the window splits into q full cycles
    // plus the first r offsets.
    const auto [q, r] = split_window(N, shape.P);
    const std::int64_t span_n = q > 0 ? shape.P : r;
    const auto st = strides_of(shape);

    GridFunction out(shape);
    std::vector<std::int64_t> c(shape.l);
    for (std::size_t a = 0; a < out.size(); ++a) {
        coords_of(shape, a, c);
        double cycle = 0.0, rest = 0.0;
        for (std::int64_t n = 0; n < span_n; ++n) {
            double prod = 1.0;
            for (int i = 0; i < shape.l; ++i) {
                std::int64_t ci = mod_p(c[i] + n, shape.P);
                std::int64_t off = static_cast<std::int64_t>(a) + (ci - c[i]) * static_cast<std::int64_t>(st[i]);
                prod *= fs[i].v[static_cast<std::size_t>(off)];
            }
            cycle += prod;
            if (n < r) rest += prod;
        }
        out.v[a] = (static_cast<double>(q) * cycle + rest) / static_cast<double>(N);
    }
    return out;
}

GridFunction sliding_average_oracle(const GridFunction& g, std::int64_t N) {
    require(g.shape.l == 1, "sliding_average expects a function on Z_P");
    require(N >= 1, "window length must be >= 1");
    const std::int64_t P = g.shape.P;
    GridFunction out(g.shape);
    for (std::int64_t v = 0; v < P; ++v) {
        double acc = 0.0;
        for (std::int64_t n = 0; n < N; ++n) acc += g.v[static_cast<std::size_t>(mod_p(v + n, P))];
        out.v[static_cast<std::size_t>(v)] = acc / static_cast<double>(N);
    }
    return out;
}

SlidingAverager::SlidingAverager(const GridFunction& g) : shape_(g.shape) {
    require(g.shape.l == 1, "sliding_average expects a function on Z_P");
    prefix_.resize(g.size() + 1);
    prefix_[0] = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) prefix_[i + 1] = prefix_[i] + g.v[i];
}

GridFunction SlidingAverager::eval(std::int64_t N) const {
    const std::int64_t P = shape_.P;
    const auto [q, r] = split_window(N, P);
    const double total = prefix_[static_cast<std::size_t>(P)];
    GridFunction out(shape_);
    for (std::int64_t v = 0; v < P; ++v) {
        double part;
        if (v + r <= P) {
            part = prefix_[static_cast<std::size_t>(v + r)] - prefix_[static_cast<std::size_t>(v)];
        } else {
            part = (total - prefix_[static_cast<std::size_t>(v)]) +
                   prefix_[static_cast<std::size_t>(v + r - P)];
        }
        out.v[static_cast<std::size_t>(v)] = (static_cast<double>(q) * total + part) / static_cast<double>(N);
    }
    return out;
}

GridFunction sliding_average(const GridFunction& g, std::int64_t N) {
    return SlidingAverager(g).eval(N);
}

namespace {

// Shared diagonal-window driver. fiber_value(base_flat, t, x) returns the
// integrand at last-coordinate t for the fiber starting at base_flat.
template <typename FiberValue>
RandomizedGridFunction diagonal_window(const GridShape& in_shape, const FiniteProbabilitySpace& space,
                                       std::int64_t N, FiberValue&& fiber_value) {
    require(in_shape.l >= 1, "diagonal projection needs a fiber coordinate");
    const std::int64_t P = in_shape.P;
    const auto [q, r] = split_window(N, P);
    const GridShape out_shape{P, in_shape.l - 1};
    RandomizedGridFunction out(out_shape, space);

    const std::size_t fibers = out_shape.size();
    std::vector<std::int64_t> c(out_shape.l);
    for (std::size_t x = 0; x < space.size(); ++x) {
        auto dst = out.slice(x);
        for (std::size_t a = 0; a < fibers; ++a) {
            coords_of(out_shape, a, c);
            const std::int64_t s0 = mod_p(-sigma_sum(out_shape, c), P);
            const std::size_t base = a * static_cast<std::size_t>(P);
            double cycle = 0.0, rest = 0.0;
            if (q > 0) {
                // Need the whole fiber; pick up the r window terms on the way.
                for (std::int64_t t = 0; t < P; ++t) cycle += fiber_value(base, t, x);
                for (std::int64_t j = 0; j < r; ++j) rest += fiber_value(base, mod_p(s0 - j, P), x);
            } else {
                for (std::int64_t j = 0; j < r; ++j) rest += fiber_value(base, mod_p(s0 - j, P), x);
            }
            dst[a] = (static_cast<double>(q) * cycle + rest) / static_cast<double>(N);
        }
    }
    return out;
}

} // namespace

RandomizedGridFunction diagonal_projection(const RandomizedGridFunction& f, std::int64_t N) {
    return diagonal_window(f.shape, f.space, N, [&](std::size_t base, std::int64_t t, std::size_t x) {
        return f.v[x * f.grid_size() + base + static_cast<std::size_t>(t)];
    });
}

GridFunction diagonal_projection(const GridFunction& f, std::int64_t N) {
    return to_grid(diagonal_projection(to_randomized(f), N));
}

RandomizedGridFunction diagonal_projection_oracle(const RandomizedGridFunction& f, std::int64_t N) {
    require(f.shape.l >= 1, "diagonal projection needs a fiber coordinate");
    require(N >= 1, "window length must be >= 1");
    const std::int64_t P = f.shape.P;
    const GridShape out_shape{P, f.shape.l - 1};
    RandomizedGridFunction out(out_shape, f.space);
    std::vector<std::int64_t> c(out_shape.l), d(f.shape.l);
    for (std::size_t x = 0; x < f.space.size(); ++x) {
        auto src = f.slice(x);
        auto dst = out.slice(x);
        for (std::size_t a = 0; a < out.grid_size(); ++a) {
            coords_of(out_shape, a, c);
            for (int k = 0; k < out_shape.l; ++k) d[k] = c[k];
            double acc = 0.0;
            for (std::int64_t n = 0; n < N; ++n) {
                d[f.shape.l - 1] = mod_p(-sigma_sum(out_shape, c) - n, P);
                acc += src[flat_index(f.shape, d)];
            }
            dst[a] = acc / static_cast<double>(N);
        }
    }
    return out;
}

GridFunction diagonal_projection_oracle(const GridFunction& f, std::int64_t N) {
    return to_grid(diagonal_projection_oracle(to_randomized(f), N));
}

RandomizedGridFunction diagonal_average_product(std::span<const EdgeFunction> gs, std::int64_t N) {
    require(!gs.empty(), "diagonal_average_product needs at least one factor");
    const GridShape shape = gs[0].f.shape;
    const FiniteProbabilitySpace& space = gs[0].f.space;
    for (const auto& g : gs)
        require(g.f.shape == shape && g.f.space == space, "diagonal_average_product: shape mismatch");
    return diagonal_window(shape, space, N, [&](std::size_t base, std::int64_t t, std::size_t x) {
        const std::size_t idx = x * gs[0].f.grid_size() + base + static_cast<std::size_t>(t);
        double prod = 1.0;
        for (const auto& g : gs) prod *= g.f.v[idx];
        return prod;
    });
}

std::vector<EdgeFunction> lift_functions(std::span<const GridFunction> fs) {
    require(!fs.empty(), "lift_functions needs at least one function");
    const GridShape base = fs[0].shape;
    require(base.l >= 1, "lift_functions needs l >= 1");
    for (const auto& f : fs) require(f.shape == base, "lift_functions: shape mismatch");
    require(fs.size() == static_cast<std::size_t>(base.l), "need exactly l functions");
    check_unit_range(fs);

    const GridShape lifted{base.P, base.l + 1};
    const int l = base.l;
    std::vector<EdgeFunction> out;
    out.reserve(fs.size());
    std::vector<std::int64_t> c(l + 1), args(l);
    for (int i = 0; i < l; ++i) {
        GridFunction g(lifted);
        for (std::size_t idx = 0; idx < g.size(); ++idx) {
            coords_of(lifted, idx, c);
            std::int64_t others = 0;
            for (int j = 0; j <= l; ++j)
                if (j != i) others += c[j];
            for (int k = 0; k < l; ++k) args[k] = c[k];
            args[i] = mod_p(-others, base.P);
            g.v[idx] = fs[i].at(args);
        }
        Edge e = Edge::full(l + 1);
        e.mask &= ~(1u << i);
        out.push_back(EdgeFunction::unchecked(to_randomized(g), e));
    }
    return out;
}

RandomizedGridFunction module_multiply(const EdgeFunction& g_full, const RandomizedGridFunction& h,
                                       std::int64_t N) {
    const GridShape shape = h.shape;
    require(shape.l >= 1, "module_multiply needs a fiber coordinate");
    Edge first_l = Edge::full(shape.l);
    first_l.mask &= ~(1u << (shape.l - 1));
    require(g_full.edge == first_l, "module_multiply: edge must be the first l coordinates");
    require(g_full.f.shape == shape, "module_multiply: shape mismatch");
    const bool broadcast = g_full.f.space.size() == 1;
    require(broadcast || g_full.f.space == h.space, "module_multiply: sample space mismatch");

    RandomizedGridFunction prod(shape, h.space);
    for (std::size_t x = 0; x < h.space.size(); ++x) {
        auto gx = g_full.f.slice(broadcast ? 0 : x);
        auto hx = h.slice(x);
        auto px = prod.slice(x);
        for (std::size_t i = 0; i < px.size(); ++i) px[i] = gx[i] * hx[i];
    }

    RandomizedGridFunction lhs = diagonal_projection(prod, N);
    RandomizedGridFunction dh = diagonal_projection(h, N);
    // g does not depend on the fiber coordinate, so its restriction to
    // t = 0 is its view on Z_P^l.
    const std::int64_t P = shape.P;
    double worst = 0.0;
    for (std::size_t x = 0; x < dh.space.size(); ++x) {
        auto gx = g_full.f.slice(broadcast ? 0 : x);
        auto dhx = dh.slice(x);
        auto lx = lhs.slice(x);
        for (std::size_t a = 0; a < dh.grid_size(); ++a) {
            double rhs = gx[a * static_cast<std::size_t>(P)] * dhx[a];
            worst = std::max(worst, std::abs(lx[a] - rhs));
        }
    }
    ensure(worst <= 1e-12, "module identity failed: deviation " + std::to_string(worst));
    return lhs;
}

} // namespace ergo
