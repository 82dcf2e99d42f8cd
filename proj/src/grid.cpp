#include "ergo/grid.hpp"

#include <atomic>
#include <cctype>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

static_assert(__BYTE_ORDER__ == __ORDER_LITTLE_ENDIAN__,
              "binary grid files assume a little-endian host");

namespace ergo {

namespace {
std::atomic<std::size_t> g_mem_cap{std::size_t{1} << 27};
}

std::size_t memory_cap_entries() { return g_mem_cap.load(); }
void set_memory_cap_entries(std::size_t entries) { g_mem_cap.store(entries); }

void guard_alloc(std::size_t entries) {
    if (entries > g_mem_cap.load())
        throw ResourceGuardError("dense allocation of " + std::to_string(entries) +
                                 " entries exceeds cap " + std::to_string(g_mem_cap.load()));
}

std::size_t GridShape::size() const {
    require(P >= 1, "grid modulus P must be >= 1");
    require(l >= 0, "grid dimension l must be >= 0");
    std::size_t n = 1;
    const std::size_t cap = memory_cap_entries();
    for (int i = 0; i < l; ++i) {
        if (n > cap / static_cast<std::size_t>(P) + 1)
            throw ResourceGuardError("P^l overflows the memory cap");
        n *= static_cast<std::size_t>(P);
    }
    return n;
}

std::size_t flat_index(const GridShape& s, std::span<const std::int64_t> v) {
    require(v.size() == static_cast<std::size_t>(s.l), "coordinate count mismatch");
    std::size_t idx = 0;
    for (int i = 0; i < s.l; ++i) idx = idx * static_cast<std::size_t>(s.P) + static_cast<std::size_t>(mod_p(v[i], s.P));
    return idx;
}

void coords_of(const GridShape& s, std::size_t flat, std::span<std::int64_t> out) {
    require(out.size() == static_cast<std::size_t>(s.l), "coordinate count mismatch");
    for (int i = s.l - 1; i >= 0; --i) {
        out[i] = static_cast<std::int64_t>(flat % static_cast<std::size_t>(s.P));
        flat /= static_cast<std::size_t>(s.P);
    }
}

std::int64_t sigma_sum(const GridShape& s, std::span<const std::int64_t> v) {
    std::int64_t acc = 0;
    for (std::int64_t c : v) acc = mod_p(acc + c, s.P);
    return acc;
}

GridFunction::GridFunction(GridShape s, double fill) : shape(s) {
    std::size_t n = s.size();
    guard_alloc(n);
    v.assign(n, fill);
}

FiniteProbabilitySpace::FiniteProbabilitySpace(std::vector<double> weights) : w(std::move(weights)) {
    require(!w.empty(), "probability space must be nonempty");
    double total = 0.0;
    for (double x : w) {
        require(x >= 0.0, "probability weights must be nonnegative");
        total += x;
    }
    require(std::abs(total - 1.0) <= 1e-12, "probability weights must sum to 1");
}

FiniteProbabilitySpace FiniteProbabilitySpace::uniform(std::size_t n) {
    require(n >= 1, "probability space must be nonempty");
    return FiniteProbabilitySpace(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

RandomizedGridFunction::RandomizedGridFunction(GridShape s, FiniteProbabilitySpace x, double fill)
    : shape(s), space(std::move(x)) {
    std::size_t n = s.size() * space.size();
    guard_alloc(n);
    v.assign(n, fill);
}

RandomizedGridFunction to_randomized(const GridFunction& f) {
    RandomizedGridFunction r;
    r.shape = f.shape;
    r.space = FiniteProbabilitySpace::point();
    r.v = f.v;
    return r;
}

GridFunction to_grid(const RandomizedGridFunction& f) {
    require(f.space.size() == 1, "to_grid requires a single-point sample space");
    GridFunction g;
    g.shape = f.shape;
    g.v = f.v;
    return g;
}

double inner_product(const GridFunction& f, const GridFunction& g) {
    require(f.shape == g.shape, "inner_product: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < f.v.size(); ++i) acc += f.v[i] * g.v[i];
    return acc / static_cast<double>(f.v.size());
}

double inner_product(const RandomizedGridFunction& f, const RandomizedGridFunction& g) {
    require(f.shape == g.shape && f.space == g.space, "inner_product: shape mismatch");
    const std::size_t gs = f.grid_size();
    double acc = 0.0;
    for (std::size_t x = 0; x < f.space.size(); ++x) {
        auto a = f.slice(x);
        auto b = g.slice(x);
        double s = 0.0;
        for (std::size_t i = 0; i < gs; ++i) s += a[i] * b[i];
        acc += f.space.w[x] * s / static_cast<double>(gs);
    }
    return acc;
}

namespace {

double norm_weighted(std::span<const double> vals, double weight_per_entry, Norm p, double& acc) {
    // acc accumulates L1/L2 mass; returns running Linf.
    double m = 0.0;
    switch (p) {
        case Norm::L1:
            for (double x : vals) acc += std::abs(x) * weight_per_entry;
            break;
        case Norm::L2:
            for (double x : vals) acc += x * x * weight_per_entry;
            break;
        case Norm::Linf:
            for (double x : vals) m = std::max(m, std::abs(x));
            break;
    }
    return m;
}

} // namespace

double lp_norm(const GridFunction& f, Norm p) {
    double acc = 0.0;
    double m = norm_weighted(f.v, 1.0 / static_cast<double>(f.v.size()), p, acc);
    if (p == Norm::Linf) return m;
    return p == Norm::L2 ? std::sqrt(acc) : acc;
}

double lp_norm(const RandomizedGridFunction& f, Norm p) {
    double acc = 0.0, m = 0.0;
    const double gs = static_cast<double>(f.grid_size());
    for (std::size_t x = 0; x < f.space.size(); ++x)
        m = std::max(m, norm_weighted(f.slice(x), f.space.w[x] / gs, p, acc));
    if (p == Norm::Linf) return m;
    return p == Norm::L2 ? std::sqrt(acc) : acc;
}

GridFunction shift(const GridFunction& f, std::span<const std::int64_t> w) {
    require(w.size() == static_cast<std::size_t>(f.shape.l), "shift: coordinate count mismatch");
    GridFunction out(f.shape);
    std::vector<std::int64_t> c(f.shape.l), d(f.shape.l);
    for (std::size_t i = 0; i < f.size(); ++i) {
        coords_of(f.shape, i, c);
        for (int k = 0; k < f.shape.l; ++k) d[k] = c[k] + w[k];
        out.v[i] = f.at(d);
    }
    return out;
}

namespace {

constexpr char kMagic[4] = {'E', 'R', 'G', 'F'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& os, const T& x) {
    os.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <typename T>
T get(std::ifstream& is) {
    T x{};
    is.read(reinterpret_cast<char*>(&x), sizeof(T));
    if (!is) throw PreconditionError("truncated grid file");
    return x;
}

} // namespace

void write_binary(const std::string& path, const RandomizedGridFunction& f) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(os), "cannot open " + path + " for writing");
    os.write(kMagic, 4);
    put(os, kVersion);
    put(os, static_cast<std::int64_t>(f.shape.P));
    put(os, static_cast<std::int32_t>(f.shape.l));
    put(os, static_cast<std::int64_t>(f.space.size()));
    for (double w : f.space.w) put(os, w);
    os.write(reinterpret_cast<const char*>(f.v.data()),
             static_cast<std::streamsize>(f.v.size() * sizeof(double)));
    require(static_cast<bool>(os), "short write to " + path);
}

void write_binary(const std::string& path, const GridFunction& f) {
    write_binary(path, to_randomized(f));
}

RandomizedGridFunction read_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), "cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    require(is && std::memcmp(magic, kMagic, 4) == 0, path + ": not a grid file");
    require(get<std::uint32_t>(is) == kVersion, path + ": unsupported version");
    GridShape shape;
    shape.P = get<std::int64_t>(is);
    shape.l = get<std::int32_t>(is);
    auto xs = get<std::int64_t>(is);
    require(xs >= 1, path + ": bad sample space size");
    std::vector<double> w(static_cast<std::size_t>(xs));
    for (auto& x : w) x = get<double>(is);
    RandomizedGridFunction f(shape, FiniteProbabilitySpace(std::move(w)));
    is.read(reinterpret_cast<char*>(f.v.data()),
            static_cast<std::streamsize>(f.v.size() * sizeof(double)));
    require(static_cast<bool>(is), path + ": truncated payload");
    return f;
}

void write_csv(const std::string& path, const RandomizedGridFunction& f) {
    std::ofstream os(path, std::ios::trunc);
    require(static_cast<bool>(os), "cannot open " + path + " for writing");
    for (int i = 0; i < f.shape.l; ++i) os << 'v' << i << ',';
    os << "x,value\n";
    std::vector<std::int64_t> c(f.shape.l);
    char buf[40];
    for (std::size_t x = 0; x < f.space.size(); ++x) {
        auto s = f.slice(x);
        for (std::size_t i = 0; i < s.size(); ++i) {
            coords_of(f.shape, i, c);
            for (auto ci : c) os << ci << ',';
            std::snprintf(buf, sizeof buf, "%.17g", s[i]);
            os << x << ',' << buf << '\n';
        }
    }
    require(static_cast<bool>(os), "short write to " + path);
}

void write_csv(const std::string& path, const GridFunction& f) {
    write_csv(path, to_randomized(f));
}

RandomizedGridFunction read_csv(const std::string& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), "cannot open " + path);
    std::string header;
    require(static_cast<bool>(std::getline(is, header)), path + ": empty csv");
    int l = 0;
    {
        std::stringstream hs(header);
        std::string col;
        while (std::getline(hs, col, ',')) {
            if (col.size() >= 2 && col[0] == 'v' && std::isdigit(static_cast<unsigned char>(col[1]))) ++l;
        }
    }
    struct Row {
        std::vector<std::int64_t> c;
        std::int64_t x;
        double val;
    };
    std::vector<Row> rows;
    std::int64_t maxc = 0, maxx = 0;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        Row r;
        r.c.resize(l);
        for (int i = 0; i < l; ++i) {
            require(static_cast<bool>(std::getline(ls, cell, ',')), path + ": short row");
            r.c[i] = std::stoll(cell);
            maxc = std::max(maxc, r.c[i]);
        }
        require(static_cast<bool>(std::getline(ls, cell, ',')), path + ": short row");
        r.x = std::stoll(cell);
        maxx = std::max(maxx, r.x);
        require(static_cast<bool>(std::getline(ls, cell, ',')), path + ": short row");
        r.val = std::stod(cell);
        rows.push_back(std::move(r));
    }
    require(!rows.empty(), path + ": no data rows");
    GridShape shape{maxc + 1, l};
    if (l == 0) shape.P = 1;
    RandomizedGridFunction f(shape, FiniteProbabilitySpace::uniform(static_cast<std::size_t>(maxx + 1)));
    std::vector<bool> seen(f.size(), false);
    for (const auto& r : rows) {
        std::size_t idx = static_cast<std::size_t>(r.x) * f.grid_size() + flat_index(shape, r.c);
        require(!seen[idx], path + ": duplicate row");
        seen[idx] = true;
        f.v[idx] = r.val;
    }
    for (bool s : seen) require(s, path + ": incomplete grid");
    return f;
}

RandomizedGridFunction read_grid_file(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return read_csv(path);
    return read_binary(path);
}

} // namespace ergo
