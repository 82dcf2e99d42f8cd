#include <doctest.h>

#include <cmath>

#include "ergo/averaging.hpp"
#include "testutil.hpp"

using namespace ergo;

TEST_CASE("sliding average of a point mass") {
    GridFunction g({5, 1});
    g.v[0] = 1.0;
    GridFunction s = sliding_average(g, 2);
    std::vector<double> want{0.5, 0, 0, 0, 0.5};
    CHECK(testutil::max_abs_diff(s.v, want) == 0.0);
}

TEST_CASE("sliding average matches the direct loop") {
    auto r = testutil::rng(31);
    GridFunction g = testutil::random_grid({13, 1}, r);
    for (std::int64_t N : {1, 2, 5, 12, 13, 14, 25, 26, 27, 169, 170}) {
        GridFunction fast = sliding_average(g, N);
        GridFunction slow = sliding_average_oracle(g, N);
        CHECK(testutil::max_abs_diff(fast.v, slow.v) <= 1e-12);
    }
}

TEST_CASE("sliding average contracts L2") {
    auto r = testutil::rng(32);
    for (int t = 0; t < 20; ++t) {
        GridFunction g = testutil::random_grid({31, 1}, r);
        for (std::int64_t N : {2, 7, 31, 60})
            CHECK(lp_norm(sliding_average(g, N), Norm::L2) <= lp_norm(g, Norm::L2) + 1e-12);
    }
}

TEST_CASE("repeated smoothing stays within 2M/N of one pass") {
    auto r = testutil::rng(33);
    for (int t = 0; t < 30; ++t) {
        GridFunction g = testutil::random_grid({53, 1}, r);
        double ginf = lp_norm(g, Norm::Linf);
        for (std::int64_t M : {1, 2, 5, 10}) {
            for (std::int64_t N : {10, 25, 53, 100}) {
                if (M > N) continue;
                GridFunction sn = sliding_average(g, N);
                GridFunction smsn = sliding_average(sn, M);
                double dev = 0.0;
                for (std::size_t i = 0; i < sn.size(); ++i)
                    dev = std::max(dev, std::abs(smsn.v[i] - sn.v[i]));
                CHECK(dev <= 2.0 * static_cast<double>(M) / static_cast<double>(N) * ginf + 1e-12);
                // the exact window-profile calculation gives (M-1)/N
                CHECK(dev <= static_cast<double>(M - 1) / static_cast<double>(N) * ginf + 1e-12);
            }
        }
    }
}

TEST_CASE("multiple average matches the direct loop") {
    auto r = testutil::rng(34);
    for (std::int64_t P : {3, 5, 7}) {
        for (int l : {1, 2, 3}) {
            std::vector<GridFunction> fs;
            for (int i = 0; i < l; ++i) fs.push_back(testutil::random_grid({P, l}, r));
            for (std::int64_t N : {std::int64_t{1}, P - 1, P, P + 1, P * P}) {
                if (N < 1) continue;
                GridFunction fast = multiple_average(fs, N);
                GridFunction slow = multiple_average_oracle(fs, N);
                CHECK(testutil::max_abs_diff(fast.v, slow.v) <= 1e-12);
            }
        }
    }
}

TEST_CASE("multiple average with one function is the sliding average") {
    auto r = testutil::rng(35);
    GridFunction g = testutil::random_grid({11, 1}, r);
    std::vector<GridFunction> fs{g};
    for (std::int64_t N : {1, 3, 11, 30}) {
        GridFunction a = multiple_average(fs, N);
        GridFunction s = sliding_average(g, N);
        CHECK(testutil::max_abs_diff(a.v, s.v) <= 1e-13);
    }
}

TEST_CASE("diagonal projection matches the direct loop") {
    auto r = testutil::rng(36);
    for (std::int64_t P : {3, 5, 7}) {
        for (int lp1 : {1, 2, 3}) {
            RandomizedGridFunction f = testutil::random_rgf({P, lp1}, 2, r);
            for (std::int64_t N : {std::int64_t{1}, P, 2 * P + 1, P * P}) {
                RandomizedGridFunction fast = diagonal_projection(f, N);
                RandomizedGridFunction slow = diagonal_projection_oracle(f, N);
                CHECK(fast.shape.l == lp1 - 1);
                CHECK(testutil::max_abs_diff(fast.v, slow.v) <= 1e-12);
            }
        }
    }
}

TEST_CASE("diagonal projection contracts L2 slice-wise") {
    auto r = testutil::rng(37);
    RandomizedGridFunction f = testutil::random_rgf({7, 3}, 3, r);
    for (std::int64_t N : {2, 7, 20})
        CHECK(lp_norm(diagonal_projection(f, N), Norm::L2) <= lp_norm(f, Norm::L2) + 1e-12);
}

TEST_CASE("lifted product recovers the multiple average") {
    auto r = testutil::rng(38);
    for (std::int64_t P : {3, 5}) {
        for (int l : {1, 2, 3}) {
            std::vector<GridFunction> fs;
            for (int i = 0; i < l; ++i) fs.push_back(testutil::random_grid({P, l}, r));
            auto lifts = lift_functions(fs);
            REQUIRE(static_cast<int>(lifts.size()) == l);
            for (int i = 0; i < l; ++i) CHECK_FALSE(lifts[i].edge.contains(i));
            for (std::int64_t N = 1; N <= P; ++N) {
                GridFunction an = multiple_average(fs, N);
                GridFunction dn = to_grid(diagonal_average_product(lifts, N));
                CHECK(testutil::max_abs_diff(an.v, dn.v) <= 1e-12);
            }
        }
    }
}

TEST_CASE("lazy product average equals projecting the materialized product") {
    auto r = testutil::rng(39);
    GridShape s{5, 3};
    std::vector<EdgeFunction> gs;
    RandomizedGridFunction prod(s, FiniteProbabilitySpace::point(), 1.0);
    for (Edge e : {Edge::of(3, {0, 2}), Edge::of(3, {1, 2})}) {
        RandomizedGridFunction base = testutil::random_rgf(s, 1, r);
        RandomizedGridFunction proj = edge_project(base, e);
        for (std::size_t i = 0; i < prod.size(); ++i) prod.v[i] *= proj.v[i];
        gs.push_back(EdgeFunction::unchecked(proj, e));
    }
    for (std::int64_t N : {1, 4, 5, 26}) {
        RandomizedGridFunction lazy = diagonal_average_product(gs, N);
        RandomizedGridFunction mat = diagonal_projection(prod, N);
        CHECK(testutil::max_abs_diff(lazy.v, mat.v) <= 1e-12);
    }
}

TEST_CASE("module identity: first-l-measurable factors pass through") {
    auto r = testutil::rng(40);
    for (int trial = 0; trial < 100; ++trial) {
        std::int64_t P = (trial % 2 == 0) ? 5 : 11;
        int l = 1 + trial % 3;
        GridShape s{P, l + 1};
        RandomizedGridFunction h = testutil::random_rgf(s, 1 + trial % 2, r);
        Edge first_l = Edge::full(l + 1);
        first_l.mask &= ~(1u << l);
        RandomizedGridFunction raw = testutil::random_rgf(s, 1, r);
        EdgeFunction g(edge_project(raw, first_l), first_l);
        std::int64_t N = 1 + trial % (P + 2);
        // module_multiply asserts the identity internally to 1e-12
        RandomizedGridFunction out = module_multiply(g, h, N);
        CHECK(out.shape.l == l);
    }
}

TEST_CASE("diagonal projection contracts L1 for proper-edge products") {
    auto r = testutil::rng(41);
    GridShape s{5, 3}; // l = 2, ambient 3
    for (Edge e : {Edge::of(3, {0, 2}), Edge::of(3, {1, 2}), Edge::of(3, {2}), Edge::of(3, {0, 1})}) {
        RandomizedGridFunction he = edge_project(testutil::random_rgf(s, 1, r), e);
        RandomizedGridFunction b = testutil::random_rgf(s, 1, r); // |b| <= 1
        RandomizedGridFunction prod = he;
        for (std::size_t i = 0; i < prod.size(); ++i) prod.v[i] *= b.v[i];
        for (std::int64_t N : {1, 3, 5, 11}) {
            double lhs = lp_norm(diagonal_projection(prod, N), Norm::L1);
            CHECK(lhs <= lp_norm(he, Norm::L1) + 1e-12);
        }
    }
}

TEST_CASE("zero window length is rejected") {
    auto r = testutil::rng(42);
    GridFunction g = testutil::random_grid({5, 1}, r);
    CHECK_THROWS_AS(sliding_average(g, 0), PreconditionError);
    std::vector<GridFunction> fs{g};
    CHECK_THROWS_AS(multiple_average(fs, 0), PreconditionError);
    CHECK_THROWS_AS(diagonal_projection(to_randomized(g), 0), PreconditionError);
}

TEST_CASE("out of range values are rejected by the averaging operators") {
    GridFunction g({5, 1}, 1.5);
    std::vector<GridFunction> fs{g};
    CHECK_THROWS_AS(multiple_average(fs, 2), PreconditionError);
    CHECK_THROWS_AS(lift_functions(fs), PreconditionError);
}
