#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ergo/errors.hpp"

namespace ergo {

// Dense functions on Z_P^l. Storage is row-major over (v_0, ..., v_{l-1}):
// the last coordinate is contiguous. l = 0 is allowed (a single value).
struct GridShape {
    std::int64_t P = 1;
    int l = 0;

    std::size_t size() const;
    bool operator==(const GridShape&) const = default;
};

std::size_t flat_index(const GridShape& s, std::span<const std::int64_t> v);
void coords_of(const GridShape& s, std::size_t flat, std::span<std::int64_t> out);

// (sum of coordinates) mod P.
std::int64_t sigma_sum(const GridShape& s, std::span<const std::int64_t> v);

// Reduce any integer to the canonical residue in [0, P).
inline std::int64_t mod_p(std::int64_t a, std::int64_t P) {
    std::int64_t r = a % P;
    return r < 0 ? r + P : r;
}

struct GridFunction {
    GridShape shape;
    std::vector<double> v;

    GridFunction() = default;
    GridFunction(GridShape s, double fill = 0.0);

    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }
    std::size_t size() const { return v.size(); }

    double at(std::span<const std::int64_t> coords) const { return v[flat_index(shape, coords)]; }
    double& at(std::span<const std::int64_t> coords) { return v[flat_index(shape, coords)]; }
};

// Finite weighted sample space. Weights are nonnegative and sum to 1
// within 1e-12 (validated).
struct FiniteProbabilitySpace {
    std::vector<double> w;

    FiniteProbabilitySpace() : w{1.0} {}
    explicit FiniteProbabilitySpace(std::vector<double> weights);

    static FiniteProbabilitySpace uniform(std::size_t n);
    static FiniteProbabilitySpace point() { return uniform(1); }

    std::size_t size() const { return w.size(); }
    bool operator==(const FiniteProbabilitySpace&) const = default;
};

// Function on Z_P^l x X. Layout: one full grid slice per x, x-major,
// so values[x * shape.size() + g] with g row-major as in GridFunction.
struct RandomizedGridFunction {
    GridShape shape;
    FiniteProbabilitySpace space;
    std::vector<double> v;

    RandomizedGridFunction() = default;
    RandomizedGridFunction(GridShape s, FiniteProbabilitySpace x, double fill = 0.0);

    std::size_t grid_size() const { return shape.size(); }
    std::size_t size() const { return v.size(); }

    std::span<double> slice(std::size_t x) {
        return std::span<double>(v).subspan(x * grid_size(), grid_size());
    }
    std::span<const double> slice(std::size_t x) const {
        return std::span<const double>(v).subspan(x * grid_size(), grid_size());
    }
};

RandomizedGridFunction to_randomized(const GridFunction& f);
// Requires |X| = 1.
GridFunction to_grid(const RandomizedGridFunction& f);

enum class Norm { L1, L2, Linf };

// Inner products and norms use the uniform probability measure on the grid
// and the space weights on X: <f, g> = sum_x w_x * mean_v f*g.
double inner_product(const GridFunction& f, const GridFunction& g);
double inner_product(const RandomizedGridFunction& f, const RandomizedGridFunction& g);
double lp_norm(const GridFunction& f, Norm p);
double lp_norm(const RandomizedGridFunction& f, Norm p);

// result(v) = f(v + w), coordinatewise mod P.
GridFunction shift(const GridFunction& f, std::span<const std::int64_t> w);

// Binary format (little-endian): magic "ERGF", u32 version, i64 P, i32 l,
// i64 |X|, |X| doubles (weights), then |X| * P^l doubles, x-major.
void write_binary(const std::string& path, const RandomizedGridFunction& f);
void write_binary(const std::string& path, const GridFunction& f);
RandomizedGridFunction read_binary(const std::string& path);

// CSV: header v0,...,v{l-1},x,value; one row per point, x-major then
// row-major, values printed with %.17g.
void write_csv(const std::string& path, const RandomizedGridFunction& f);
void write_csv(const std::string& path, const GridFunction& f);
RandomizedGridFunction read_csv(const std::string& path);

// Reads either format, chosen by extension (".csv" vs anything else).
RandomizedGridFunction read_grid_file(const std::string& path);

} // namespace ergo
