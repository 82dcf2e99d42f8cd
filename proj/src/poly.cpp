#include "ergo/poly.hpp"

#include <cmath>

namespace ergo {

Polynomial::Polynomial(Interval domain, std::vector<double> cheb_coeff)
    : dom_(domain), c_(std::move(cheb_coeff)) {
    require(dom_.hi > dom_.lo, "polynomial domain must be a nondegenerate interval");
    require(!c_.empty(), "polynomial needs at least one coefficient");
}

double Polynomial::operator()(double x) const {
    const double t = (2.0 * x - (dom_.lo + dom_.hi)) / (dom_.hi - dom_.lo);
    double b1 = 0.0, b2 = 0.0;
    for (std::size_t j = c_.size(); j-- > 1;) {
        double b0 = 2.0 * t * b1 - b2 + c_[j];
        b2 = b1;
        b1 = b0;
    }
    return t * b1 - b2 + c_[0];
}

double Polynomial::max_abs_coeff() const {
    double m = 0.0;
    for (double x : c_) m = std::max(m, std::abs(x));
    return m;
}

Polynomial chebyshev_interpolant(const std::function<double(double)>& f, Interval I, int degree) {
    require(degree >= 0, "degree must be nonnegative");
    const int n = degree + 1;
    std::vector<double> y(n);
    for (int k = 0; k < n; ++k) {
        double theta = (2.0 * k + 1.0) * M_PI / (2.0 * n);
        double t = std::cos(theta);
        y[k] = f(0.5 * (I.hi - I.lo) * t + 0.5 * (I.lo + I.hi));
    }
    std::vector<double> c(n, 0.0);
    for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) acc += y[k] * std::cos(j * (2.0 * k + 1.0) * M_PI / (2.0 * n));
        c[j] = 2.0 * acc / n;
    }
    c[0] *= 0.5;
    return Polynomial(I, std::move(c));
}

double max_abs_error_on_grid(const Polynomial& p, const std::function<double(double)>& f,
                             int samples) {
    require(samples >= 2, "need at least two samples");
    const Interval I = p.domain();
    double m = 0.0;
    for (int i = 0; i < samples; ++i) {
        double x = I.lo + (I.hi - I.lo) * static_cast<double>(i) / (samples - 1);
        m = std::max(m, std::abs(p(x) - f(x)));
    }
    return m;
}

RangeEstimate range_on_grid(const Polynomial& p, int samples) {
    require(samples >= 2, "need at least two samples");
    const Interval I = p.domain();
    const double mid = 0.5 * (I.lo + I.hi), half = 0.5 * (I.hi - I.lo);
    RangeEstimate r{p(I.lo), p(I.lo)};
    for (int i = 0; i < samples; ++i) {
        // equispaced in angle: resolves the oscillation clusters near the
        // endpoints that an equispaced-x grid steps over
        double x = mid + half * std::cos(M_PI * static_cast<double>(i) / (samples - 1));
        double y = p(x);
        r.lo = std::min(r.lo, y);
        r.hi = std::max(r.hi, y);
    }
    return r;
}

} // namespace ergo
