#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "ergo/edge.hpp"
#include "ergo/grid.hpp"
#include "ergo/poly.hpp"

namespace ergo {

struct Factor;

struct TrivialProvenance {};

// Built from level sets of a generating function phi: atom j is the preimage
// of cells[j] = [(n_j + alpha) eta0, (n_j + 1 + alpha) eta0), ascending.
struct IntervalProvenance {
    double eta0 = 0.0;
    double alpha = 0.0;
    Interval range;
    std::vector<Interval> cells;
    std::shared_ptr<const RandomizedGridFunction> phi;
};

struct JoinProvenance {
    std::shared_ptr<const Factor> left, right;
};

struct EdgeProvenance {
    Edge e;
};

struct DiscreteProvenance {
    std::string description;
};

using Provenance =
    std::variant<TrivialProvenance, IntervalProvenance, JoinProvenance, EdgeProvenance, DiscreteProvenance>;

// A finite partition of Z_P^l x X. label[i] < atom_count for every point;
// atoms may be empty (kept so cells line up with their generating intervals).
struct Factor {
    GridShape shape;
    FiniteProbabilitySpace space;
    std::vector<std::uint32_t> label;
    std::uint32_t atom_count = 1;
    Provenance prov = TrivialProvenance{};

    std::size_t domain_size() const { return shape.size() * space.size(); }
    void validate() const;
    // number of points per atom
    std::vector<std::size_t> atom_sizes() const;
    // probability mass per atom (uniform on the grid, weighted on X)
    std::vector<double> atom_masses() const;
};

Factor trivial_factor(GridShape shape, FiniteProbabilitySpace space);

// Partition by the value patterns of the e-coordinates (and x), so that
// conditioning on it averages over the coordinates outside e.
Factor edge_factor(GridShape shape, FiniteProbabilitySpace space, Edge e);

// Level-set factor of phi at width eta0 with offset alpha in [0, 1):
// atoms are preimages of the half-open cells [(n+alpha) eta0, (n+1+alpha) eta0)
// tiling the declared range. Values of phi must lie in `range`.
Factor build_interval_factor(const RandomizedGridFunction& phi, Interval range, double eta0,
                             double alpha);
Factor build_interval_factor(const GridFunction& phi, Interval range, double eta0, double alpha);

// Common refinement; atoms are the nonempty intersections, labeled densely
// in first-seen scan order (deterministic).
Factor join(const Factor& a, const Factor& b);

// Atom-wise weighted means: E(f | Y). Atoms with zero mass get value 0.
RandomizedGridFunction cond_expectation(const RandomizedGridFunction& f, const Factor& Y);
GridFunction cond_expectation(const GridFunction& f, const Factor& Y);

// Conditional expectation onto the e-coordinates, packaged with its edge.
EdgeFunction edge_factor_project(const RandomizedGridFunction& f, Edge e);

struct AtomPolyOptions {
    int degree_cap = 200;
    int width_steps = 48;     // geometric transition-width ladder resolution
    int range_samples = 4001; // dense grid certifying the range bound
    double range_slack = 0.01;
};

struct AtomPolynomial {
    Polynomial psi;
    double l1_error;  // weighted mean |1_A - psi(phi)| over the domain
    double sup_error; // max |1_A - psi(phi)| over the domain
    double width;     // transition half-width of the certified ramp
    std::uint32_t atom;
};

// Soft indicator of one atom of an interval factor: a polynomial psi with
// ||1_A - psi(phi)||_1 <= eta1 and ||1_A - psi(phi)||_inf <= 1 + 1e-9 on the
// data, and psi within [-slack, 1+slack] on the whole range. Smooths the atom's cell with a
// quintic crossfade ramp, interpolates at Chebyshev nodes, and certifies the
// bounds directly on the data; widths walk a deterministic geometric ladder
// floored at eta1^2 * eta0 and degrees escalate to the cap. Throws
// PreconditionError if nothing certifies (adversarial boundary mass; draw a
// fresh alpha and rebuild the factor).
AtomPolynomial atom_polynomial(const Factor& Y, std::uint32_t atom, double eta1,
                               const AtomPolyOptions& opts = {});

} // namespace ergo
