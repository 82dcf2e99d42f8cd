#include "ergo/edge.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace ergo {

Edge Edge::of(int ambient, std::initializer_list<int> idx) {
    return of(ambient, std::vector<int>(idx));
}

Edge Edge::of(int ambient, const std::vector<int>& idx) {
    require(ambient >= 0 && ambient <= 30, "edge ambient dimension out of range");
    Edge e{0, ambient};
    for (int i : idx) {
        require(i >= 0 && i < ambient, "edge index out of range");
        e.mask |= (1u << i);
    }
    return e;
}

Edge Edge::full(int ambient) {
    require(ambient >= 0 && ambient <= 30, "edge ambient dimension out of range");
    return Edge{ambient == 0 ? 0u : ((1u << ambient) - 1u), ambient};
}

Edge Edge::complement() const {
    return Edge{Edge::full(ambient).mask & ~mask, ambient};
}

std::vector<int> Edge::indices() const {
    std::vector<int> out;
    for (int i = 0; i < ambient; ++i)
        if (contains(i)) out.push_back(i);
    return out;
}

std::string Edge::to_string() const {
    std::ostringstream os;
    os << '{';
    bool first = true;
    for (int i : indices()) {
        if (!first) os << ',';
        os << i;
        first = false;
    }
    os << '}';
    return os.str();
}

Edge parse_edge(int ambient, const std::string& csv) {
    std::vector<int> idx;
    std::stringstream ss(csv);
    std::string cell;
    while (std::getline(ss, cell, ','))
        if (!cell.empty()) idx.push_back(std::stoi(cell));
    return Edge::of(ambient, idx);
}

namespace {

// Iterates the grid once, bucketing each point by its e-coordinate pattern.
// visit(bucket, flat_index, x) is called for every point.
template <typename F>
void for_each_bucketed(const GridShape& shape, Edge e, F&& visit) {
    const std::size_t n = shape.size();
    std::vector<std::int64_t> c(shape.l);
    for (std::size_t i = 0; i < n; ++i) {
        coords_of(shape, i, c);
        std::size_t bucket = 0;
        for (int k = 0; k < shape.l; ++k)
            if (e.contains(k)) bucket = bucket * static_cast<std::size_t>(shape.P) + static_cast<std::size_t>(c[k]);
        visit(bucket, i);
    }
}

std::size_t bucket_count(const GridShape& shape, Edge e) {
    std::size_t n = 1;
    for (int k = 0; k < e.size(); ++k) n *= static_cast<std::size_t>(shape.P);
    return n;
}

} // namespace

RandomizedGridFunction edge_project(const RandomizedGridFunction& f, Edge e) {
    require(e.ambient == f.shape.l, "edge ambient dimension does not match grid");
    const std::size_t nb = bucket_count(f.shape, e);
    const double outside = static_cast<double>(f.grid_size()) / static_cast<double>(nb);
    RandomizedGridFunction out(f.shape, f.space);
    std::vector<double> mean(nb);
    std::vector<std::size_t> bucket_of(f.grid_size());
    for_each_bucketed(f.shape, e, [&](std::size_t b, std::size_t i) { bucket_of[i] = b; });
    for (std::size_t x = 0; x < f.space.size(); ++x) {
        auto src = f.slice(x);
        auto dst = out.slice(x);
        std::fill(mean.begin(), mean.end(), 0.0);
        for (std::size_t i = 0; i < src.size(); ++i) mean[bucket_of[i]] += src[i];
        for (double& m : mean) m /= outside;
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = mean[bucket_of[i]];
    }
    return out;
}

double max_edge_deviation(const RandomizedGridFunction& f, Edge e) {
    RandomizedGridFunction proj = edge_project(f, e);
    double m = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) m = std::max(m, std::abs(f.v[i] - proj.v[i]));
    return m;
}

EdgeFunction::EdgeFunction(RandomizedGridFunction fn, Edge e, double tol) : f(std::move(fn)), edge(e) {
    require(e.ambient == f.shape.l, "edge ambient dimension does not match grid");
    double dev = max_edge_deviation(f, e);
    require(dev <= tol, "function is not " + e.to_string() + "-measurable (deviation " +
                            std::to_string(dev) + ")");
}

EdgeFunction EdgeFunction::unchecked(RandomizedGridFunction fn, Edge e) {
    EdgeFunction out;
    out.f = std::move(fn);
    out.edge = e;
    return out;
}

double resample_edge_deviation(const RandomizedGridFunction& f, Edge e, std::uint64_t seed, int trials) {
    require(e.ambient == f.shape.l, "edge ambient dimension does not match grid");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int64_t> coord(0, f.shape.P - 1);
    std::uniform_int_distribution<std::size_t> xdist(0, f.space.size() - 1);
    std::vector<std::int64_t> a(f.shape.l), b(f.shape.l);
    double m = 0.0;
    for (int t = 0; t < trials; ++t) {
        for (int k = 0; k < f.shape.l; ++k) a[k] = coord(rng);
        b = a;
        for (int k = 0; k < f.shape.l; ++k)
            if (!e.contains(k)) b[k] = coord(rng);
        std::size_t x = xdist(rng);
        std::size_t off = x * f.grid_size();
        m = std::max(m, std::abs(f.v[off + flat_index(f.shape, a)] - f.v[off + flat_index(f.shape, b)]));
    }
    return m;
}

} // namespace ergo
