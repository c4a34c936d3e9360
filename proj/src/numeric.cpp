#include "obata/numeric.hpp"

#include <algorithm>
#include <limits>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <string>

namespace obata::numeric {

namespace {

struct Panel {
    double value;
    double error;
    double l1;
};

// One GK15 panel. Boost reports the error of the rule on [-1, 1]; rescale it
// to [a, b].
template <class F>
Panel gk15(F&& f, double a, double b) {
    double error = 0.0, l1 = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 0, 0.0, &error, &l1);
    return {v, error * 0.5 * (b - a), l1};
}

template <class F>
void adapt(F&& f, double a, double b, const Panel& p, double abs_tol, int depth, Panel& total) {
    if (p.error <= abs_tol || depth == 0) {
        total.value += p.value;
        total.error += p.error;
        total.l1 += p.l1;
        return;
    }
    const double mid = 0.5 * (a + b);
    adapt(f, a, mid, gk15(f, a, mid), 0.5 * abs_tol, depth - 1, total);
    adapt(f, mid, b, gk15(f, mid, b), 0.5 * abs_tol, depth - 1, total);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
    if (a == b) return 0.0;
    if (a > b) return -integrate(f, b, a, tol);
    auto guarded = [&](double x) {
        const double v = f(x);
        if (!std::isfinite(v))
            throw QuadratureError("non-integrable singularity near s=" + std::to_string(x));
        return v;
    };
    const Panel whole = gk15(guarded, a, b);
    const double abs_tol = tol * std::max(whole.l1, std::numeric_limits<double>::min());
    Panel total{0.0, 0.0, 0.0};
    adapt(guarded, a, b, whole, abs_tol, 30, total);
    if (!(total.error <= std::max(1e-9, 1e3 * tol) * std::max(1.0, total.l1)))
        throw QuadratureError("quadrature did not converge on [" + std::to_string(a) + ", " + std::to_string(b) +
                              "], error estimate " + std::to_string(total.error));
    return total.value;
}

double bisect(const std::function<double(double)>& g, double lo, double hi, double xtol) {
    double glo = g(lo);
    double ghi = g(hi);
    if (glo == 0.0) return lo;
    if (ghi == 0.0) return hi;
    if ((glo > 0.0) == (ghi > 0.0)) throw std::invalid_argument("bisect: bracket has no sign change");
    while (std::fabs(hi - lo) > xtol) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        const double gm = g(mid);
        if (gm == 0.0) return mid;
        if ((gm > 0.0) == (glo > 0.0)) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

QuinticHermite::QuinticHermite(std::vector<double> t, std::vector<double> y, std::vector<double> dy,
                               std::vector<double> ddy)
    : t_(std::move(t)), y_(std::move(y)), dy_(std::move(dy)), ddy_(std::move(ddy)) {
    if (t_.size() < 2 || y_.size() != t_.size() || dy_.size() != t_.size() || ddy_.size() != t_.size())
        throw std::invalid_argument("QuinticHermite: need at least two nodes with matching data");
    for (std::size_t i = 1; i < t_.size(); ++i)
        if (!(t_[i] > t_[i - 1])) throw std::invalid_argument("QuinticHermite: nodes must increase strictly");
}

QuinticHermite::Local QuinticHermite::locate(double t) const {
    auto it = std::upper_bound(t_.begin(), t_.end(), t);
    std::size_t i = it == t_.begin() ? 0 : static_cast<std::size_t>(it - t_.begin()) - 1;
    i = std::min(i, t_.size() - 2);
    const double h = t_[i + 1] - t_[i];
    return {i, h, (t - t_[i]) / h};
}

double QuinticHermite::eval(double t, int order) const {
    const auto [i, h, x] = locate(t);
    // Quintic Hermite basis on [0, 1]: values, slopes, curvatures at both ends.
    const double x2 = x * x, x3 = x2 * x, x4 = x3 * x, x5 = x4 * x;
    double b[6];
    if (order == 0) {
        b[0] = 1 - 10 * x3 + 15 * x4 - 6 * x5;
        b[1] = x - 6 * x3 + 8 * x4 - 3 * x5;
        b[2] = 0.5 * x2 - 1.5 * x3 + 1.5 * x4 - 0.5 * x5;
        b[3] = 10 * x3 - 15 * x4 + 6 * x5;
        b[4] = -4 * x3 + 7 * x4 - 3 * x5;
        b[5] = 0.5 * x3 - x4 + 0.5 * x5;
    } else if (order == 1) {
        b[0] = -30 * x2 + 60 * x3 - 30 * x4;
        b[1] = 1 - 18 * x2 + 32 * x3 - 15 * x4;
        b[2] = x - 4.5 * x2 + 6 * x3 - 2.5 * x4;
        b[3] = 30 * x2 - 60 * x3 + 30 * x4;
        b[4] = -12 * x2 + 28 * x3 - 15 * x4;
        b[5] = 1.5 * x2 - 4 * x3 + 2.5 * x4;
    } else {
        b[0] = -60 * x + 180 * x2 - 120 * x3;
        b[1] = -36 * x + 96 * x2 - 60 * x3;
        b[2] = 1 - 9 * x + 18 * x2 - 10 * x3;
        b[3] = 60 * x - 180 * x2 + 120 * x3;
        b[4] = -24 * x + 84 * x2 - 60 * x3;
        b[5] = 3 * x - 12 * x2 + 10 * x3;
    }
    const double v = b[0] * y_[i] + b[1] * h * dy_[i] + b[2] * h * h * ddy_[i] + b[3] * y_[i + 1] +
                     b[4] * h * dy_[i + 1] + b[5] * h * h * ddy_[i + 1];
    return v / std::pow(h, order);
}

double QuinticHermite::value(double t) const { return eval(t, 0); }
double QuinticHermite::derivative(double t) const { return eval(t, 1); }
double QuinticHermite::second_derivative(double t) const { return eval(t, 2); }

}  // namespace obata::numeric
