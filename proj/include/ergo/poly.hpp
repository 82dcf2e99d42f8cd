#pragma once

#include <functional>
#include <vector>

#include "ergo/errors.hpp"

namespace ergo {

struct Interval {
    double lo = 0.0, hi = 1.0;
    double length() const { return hi - lo; }
};

// Polynomial on a fixed interval, stored in the Chebyshev basis of that
// interval and evaluated by Clenshaw recurrence. The Chebyshev basis keeps
// coefficients O(1) even for sharp high-degree approximants, where monomial
// coefficients would overflow doubles.
class Polynomial {
public:
    Polynomial() = default;
    Polynomial(Interval domain, std::vector<double> cheb_coeff);

    double operator()(double x) const;
    int degree() const { return static_cast<int>(c_.size()) - 1; }
    double max_abs_coeff() const;
    const Interval& domain() const { return dom_; }
    const std::vector<double>& coefficients() const { return c_; }

private:
    Interval dom_{0.0, 1.0};
    std::vector<double> c_{0.0};
};

// Interpolates f at the degree+1 Chebyshev points of the first kind on I.
Polynomial chebyshev_interpolant(const std::function<double(double)>& f, Interval I, int degree);

// Max of |p(x) - f(x)| over an equispaced certification grid on I.
double max_abs_error_on_grid(const Polynomial& p, const std::function<double(double)>& f,
                             int samples);

// Range of p over a certification grid on I, sampled equispaced in
// Chebyshev angle so endpoint oscillations are resolved.
struct RangeEstimate {
    double lo, hi;
};
RangeEstimate range_on_grid(const Polynomial& p, int samples);

} // namespace ergo
