#pragma once

// Numerical building blocks shared by the profile, classification and
// geometry modules.

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace obata::numeric {

class QuadratureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Adaptive Gauss-Kronrod (7/15, bisection) integral of f over [a, b] (a > b allowed).
/// Throws QuadratureError when the integrand is non-finite or the error
/// estimate stays above tol after subdivision.
double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-13);

/// Bisection on a sign-changing bracket; stops when the bracket is narrower
/// than xtol. g(lo) and g(hi) must have opposite signs (or one is zero).
double bisect(const std::function<double(double)>& g, double lo, double hi, double xtol = 1e-12);

/// Central difference with one Richardson step: (4 D(h/2) - D(h)) / 3.
template <class F>
auto derivative(F&& f, double x, double h) {
    auto central = [&](double step) { return (f(x + step) - f(x - step)) / (2.0 * step); };
    const auto coarse = central(h);
    const auto fine = central(0.5 * h);
    return (4.0 * fine - coarse) / 3.0;
}

/// Plain central difference, no extrapolation.
template <class F>
auto central_difference(F&& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Piecewise quintic Hermite interpolation from values and first/second
/// derivatives at increasing nodes. C2 across nodes.
class QuinticHermite {
public:
    QuinticHermite() = default;
    QuinticHermite(std::vector<double> t, std::vector<double> y, std::vector<double> dy, std::vector<double> ddy);

    double value(double t) const;
    double derivative(double t) const;
    double second_derivative(double t) const;

    double t_min() const { return t_.front(); }
    double t_max() const { return t_.back(); }
    bool empty() const { return t_.empty(); }

private:
    struct Local {
        std::size_t i;
        double h;
        double x;  // normalized position in [0, 1]
    };
    Local locate(double t) const;
    double eval(double t, int order) const;

    std::vector<double> t_, y_, dy_, ddy_;
};

}  // namespace obata::numeric
