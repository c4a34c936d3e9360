#include "obata/geometry.hpp"

#include <algorithm>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "obata/numeric.hpp"

namespace obata::geometry {

namespace odeint = boost::numeric::odeint;

namespace {

using State = std::vector<double>;

// Central difference of a (possibly matrix-valued) function of one real
// variable, with one Richardson step unless disabled.
template <class T, class F>
T fd(F&& f, double h, bool richardson) {
    const T coarse = (f(h) - f(-h)) / (2.0 * h);
    if (!richardson) return coarse;
    const T fine = (f(0.5 * h) - f(-0.5 * h)) / h;
    return (4.0 * fine - coarse) / 3.0;
}

Vec shifted(const Vec& x, int i, double d) {
    Vec y = x;
    y[i] += d;
    return y;
}

double sampling_clip(double v, double bound) { return std::isfinite(v) ? v : bound; }

}  // namespace

// ------------------------------------------------------------------ Warp

Warp Warp::cosh() { return Warp(Kind::Cosh, 1.0); }
Warp Warp::exp() { return Warp(Kind::Exp, 1.0); }
Warp Warp::sinh() { return Warp(Kind::Sinh, 1.0); }
Warp Warp::constant(double c) { return Warp(Kind::Constant, c); }

Warp Warp::profile(std::shared_ptr<const profile::Profile> p, double scale) {
    if (!p) throw std::invalid_argument("Warp::profile: null profile");
    Warp w(Kind::Profile, scale);
    w.profile_ = std::move(p);
    return w;
}

double Warp::value(double r) const {
    switch (kind_) {
        case Kind::Cosh: return std::cosh(r);
        case Kind::Exp: return std::exp(r);
        case Kind::Sinh: return std::sinh(r);
        case Kind::Constant: return scale_;
        case Kind::Profile: return scale_ * profile_->up(r);
    }
    return 0.0;
}

double Warp::derivative(double r) const {
    switch (kind_) {
        case Kind::Cosh: return std::sinh(r);
        case Kind::Exp: return std::exp(r);
        case Kind::Sinh: return std::cosh(r);
        case Kind::Constant: return 0.0;
        case Kind::Profile: return scale_ * profile_->upp(r);
    }
    return 0.0;
}

std::string Warp::name() const {
    switch (kind_) {
        case Kind::Cosh: return "cosh";
        case Kind::Exp: return "exp";
        case Kind::Sinh: return "sinh";
        case Kind::Constant: return "constant";
        case Kind::Profile: return "profile";
    }
    return "?";
}

// ----------------------------------------------------------------- fibers

int fiber_dim(const Fiber& f) {
    return std::visit(
        [](const auto& v) -> int {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, RoundSphere>) return v.dim;
            if constexpr (std::is_same_v<T, Circle>) return 1;
            if constexpr (std::is_same_v<T, FlatSpace>) return v.dim;
            if constexpr (std::is_same_v<T, Nested>) return v.chart->dim();
        },
        f);
}

std::string fiber_name(const Fiber& f) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            std::ostringstream os;
            if constexpr (std::is_same_v<T, RoundSphere>) os << "S^" << v.dim;
            if constexpr (std::is_same_v<T, Circle>) os << "S^1(" << v.radius << ")";
            if constexpr (std::is_same_v<T, FlatSpace>) os << "R^" << v.dim;
            if constexpr (std::is_same_v<T, Nested>) os << "(" << v.chart->describe() << ")";
            return os.str();
        },
        f);
}

namespace {

Mat fiber_metric_of(const Fiber& f, const Vec& y) {
    return std::visit(
        [&](const auto& v) -> Mat {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, RoundSphere>) {
                Mat g = Mat::Zero(v.dim, v.dim);
                double scale = 1.0;
                for (int i = 0; i < v.dim; ++i) {
                    g(i, i) = scale;
                    scale *= std::sin(y[i]) * std::sin(y[i]);
                }
                return g;
            }
            if constexpr (std::is_same_v<T, Circle>) return Mat::Identity(1, 1);
            if constexpr (std::is_same_v<T, FlatSpace>) return Mat::Identity(v.dim, v.dim);
            if constexpr (std::is_same_v<T, Nested>) return v.chart->metric_at(y);
        },
        f);
}

std::optional<std::string> fiber_zone(const Fiber& f, const Vec& y, double margin) {
    return std::visit(
        [&](const auto& v) -> std::optional<std::string> {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, RoundSphere>) {
                // The last angle is periodic; the others are polar.
                for (int i = 0; i + 1 < v.dim; ++i) {
                    if (y[i] < kPoleCap + margin || y[i] > std::numbers::pi - kPoleCap - margin)
                        return "polar cap of spherical coordinate theta_" + std::to_string(i + 1);
                }
                return std::nullopt;
            }
            if constexpr (std::is_same_v<T, Nested>) return v.chart->zone(y, margin);
            return std::nullopt;
        },
        f);
}

// Fiber coordinates drawn uniformly from the fiber's sampling box.
Vec sample_fiber(const Fiber& f, std::mt19937_64& rng, double margin);

Vec sample_chart(const WarpedChart& c, std::mt19937_64& rng, double margin) {
    const Interval iv = c.r_sampling();
    std::uniform_real_distribution<double> ur(iv.lo + margin, iv.hi - margin);
    Vec x(c.dim());
    x[0] = ur(rng);
    const Vec y = sample_fiber(c.fiber(), rng, margin);
    x.tail(y.size()) = y;
    return x;
}

Vec sample_fiber(const Fiber& f, std::mt19937_64& rng, double margin) {
    return std::visit(
        [&](const auto& v) -> Vec {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, RoundSphere>) {
                Vec y(v.dim);
                std::uniform_real_distribution<double> polar(kPoleCap + margin, std::numbers::pi - kPoleCap - margin);
                std::uniform_real_distribution<double> azimuth(0.0, 2.0 * std::numbers::pi);
                for (int i = 0; i < v.dim; ++i) y[i] = i + 1 < v.dim ? polar(rng) : azimuth(rng);
                return y;
            }
            if constexpr (std::is_same_v<T, Circle>) {
                std::uniform_real_distribution<double> arc(0.0, 2.0 * std::numbers::pi * v.radius);
                Vec y(1);
                y[0] = arc(rng);
                return y;
            }
            if constexpr (std::is_same_v<T, FlatSpace>) {
                std::uniform_real_distribution<double> box(-1.0, 1.0);
                Vec y(v.dim);
                for (int i = 0; i < v.dim; ++i) y[i] = box(rng);
                return y;
            }
            if constexpr (std::is_same_v<T, Nested>) return sample_chart(*v.chart, rng, margin);
        },
        f);
}

}  // namespace

// ------------------------------------------------------------ WarpedChart

WarpedChart::WarpedChart(Warp warp, Fiber fiber, Interval r_domain, double end_exclusion)
    : warp_(std::move(warp)), fiber_(std::move(fiber)), r_domain_(r_domain), end_exclusion_(end_exclusion) {
    if (!(r_domain_.hi > r_domain_.lo)) throw std::invalid_argument("WarpedChart: empty r-domain");
    if (const auto* n = std::get_if<Nested>(&fiber_); n && !n->chart)
        throw std::invalid_argument("WarpedChart: null nested chart");
}

Interval WarpedChart::r_admissible() const {
    Interval iv = r_domain_;
    if (std::isfinite(iv.lo)) iv.lo += end_exclusion_;
    if (std::isfinite(iv.hi)) iv.hi -= end_exclusion_;
    return iv;
}

Interval WarpedChart::r_sampling() const {
    if (r_sampling_) return *r_sampling_;
    const Interval a = r_admissible();
    return {std::max(a.lo, -1.5), std::min(a.hi, 1.5)};
}

std::optional<std::string> WarpedChart::zone(const Vec& x, double margin) const {
    if (x.size() != dim()) return "wrong coordinate count";
    const Interval a = r_admissible();
    if (x[0] < a.lo + margin) return std::isfinite(r_domain_.lo) && end_exclusion_ > 0 ? "radial pole cap near r=" + std::to_string(r_domain_.lo) : "below the r-domain";
    if (x[0] > a.hi - margin) return std::isfinite(r_domain_.hi) && end_exclusion_ > 0 ? "radial pole cap near r=" + std::to_string(r_domain_.hi) : "above the r-domain";
    if (!(warp_.value(x[0]) > 0.0)) return "warp not positive at r=" + std::to_string(x[0]);
    return fiber_zone(fiber_, x.tail(x.size() - 1), margin);
}

void WarpedChart::require_admissible(const Vec& x, double margin) const {
    if (auto z = zone(x, margin)) throw ExclusionZone("point in excluded zone: " + *z);
}

Mat WarpedChart::fiber_metric(const Vec& y) const { return fiber_metric_of(fiber_, y); }

Mat WarpedChart::metric_at(const Vec& x) const {
    require_admissible(x);
    const int n = dim();
    Mat g = Mat::Zero(n, n);
    g(0, 0) = 1.0;
    if (n > 1) {
        const double phi = warp_.value(x[0]);
        g.bottomRightCorner(n - 1, n - 1) = phi * phi * fiber_metric(x.tail(n - 1));
    }
    return g;
}

std::string WarpedChart::describe() const {
    std::ostringstream os;
    os << "dr^2 + " << warp_.name() << "(r)^2 * " << fiber_name(fiber_);
    return os.str();
}

// ----------------------------------------------------------------- tensors

Christoffel christoffel_at(const WarpedChart& c, const Vec& x, const FdOptions& fd_opts) {
    c.require_admissible(x, 2.0 * fd_opts.step);
    const int n = c.dim();
    std::vector<Mat> dg(n);
    for (int l = 0; l < n; ++l)
        dg[l] = fd<Mat>([&](double d) { return c.metric_at(shifted(x, l, d)); }, fd_opts.step, fd_opts.richardson);
    const Mat ginv = c.metric_at(x).inverse();
    Christoffel gamma(n, Mat::Zero(n, n));
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            Vec lower(n);  // Gamma_{m,ij}
            for (int m = 0; m < n; ++m) lower[m] = 0.5 * (dg[i](j, m) + dg[j](i, m) - dg[m](i, j));
            const Vec upper = ginv * lower;
            for (int k = 0; k < n; ++k) gamma[k](i, j) = gamma[k](j, i) = upper[k];
        }
    return gamma;
}

Vec Riemann::apply(const Vec& X, const Vec& Y, const Vec& Z) const {
    Vec out = Vec::Zero(n_);
    for (int l = 0; l < n_; ++l)
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j)
                for (int k = 0; k < n_; ++k) out[l] += (*this)(l, i, j, k) * X[i] * Y[j] * Z[k];
    return out;
}

Riemann riemann_at(const WarpedChart& c, const Vec& x, const FdOptions& fd_opts) {
    c.require_admissible(x, 2.0 * fd_opts.step);
    const int n = c.dim();
    const Christoffel gamma = christoffel_at(c, x, fd_opts);
    // dgamma[i][l](j, k) = d_i Gamma^l_{jk}
    std::vector<Christoffel> dgamma(n);
    FdOptions inner = fd_opts;
    for (int i = 0; i < n; ++i) {
        auto g_at = [&](double d) {
            const Christoffel G = christoffel_at(c, shifted(x, i, d), inner);
            Mat stacked(n * n, n);
            for (int l = 0; l < n; ++l) stacked.middleRows(l * n, n) = G[l];
            return stacked;
        };
        const Mat d = fd<Mat>(g_at, fd_opts.step, fd_opts.richardson);
        dgamma[i].resize(n);
        for (int l = 0; l < n; ++l) dgamma[i][l] = d.middleRows(l * n, n);
    }
    Riemann R(n);
    for (int l = 0; l < n; ++l)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    double v = dgamma[i][l](j, k) - dgamma[j][l](i, k);
                    for (int m = 0; m < n; ++m) v += gamma[l](i, m) * gamma[m](j, k) - gamma[l](j, m) * gamma[m](i, k);
                    R(l, i, j, k) = v;
                }
    return R;
}

double sectional_curvature(const WarpedChart& c, const Vec& x, const Vec& X, const Vec& Y, const FdOptions& fd_opts) {
    const Mat g = c.metric_at(x);
    const double xx = X.dot(g * X), yy = Y.dot(g * Y), xy = X.dot(g * Y);
    const double area2 = xx * yy - xy * xy;
    if (!(area2 > 1e-14 * xx * yy)) throw std::invalid_argument("sectional_curvature: degenerate plane");
    const Riemann R = riemann_at(c, x, fd_opts);
    return X.dot(g * R.apply(X, Y, Y)) / area2;
}

// ------------------------------------------------------- solution fields

Vec partials(const SolutionField& w, const Vec& x, const FdOptions& fd_opts) {
    if (w.partials) return w.partials(x);
    Vec d(x.size());
    for (int i = 0; i < x.size(); ++i)
        d[i] = fd<double>([&](double h) { return w.w(shifted(x, i, h)); }, fd_opts.step, fd_opts.richardson);
    return d;
}

Mat second_partials(const SolutionField& w, const Vec& x, const FdOptions& fd_opts) {
    if (w.second_partials) return w.second_partials(x);
    const int n = static_cast<int>(x.size());
    Mat H(n, n);
    if (w.partials) {
        for (int i = 0; i < n; ++i)
            H.col(i) = fd<Vec>([&](double h) { return w.partials(shifted(x, i, h)); }, fd_opts.step, fd_opts.richardson);
        return H;
    }
    const double w0 = w.w(x);
    auto diag = [&](int i, double h) {
        return (w.w(shifted(x, i, h)) - 2.0 * w0 + w.w(shifted(x, i, -h))) / (h * h);
    };
    auto mixed = [&](int i, int j, double h) {
        auto at = [&](double a, double b) { return w.w(shifted(shifted(x, i, a), j, b)); };
        return (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
    };
    const double h = fd_opts.step;
    for (int i = 0; i < n; ++i) {
        H(i, i) = fd_opts.richardson ? (4.0 * diag(i, 0.5 * h) - diag(i, h)) / 3.0 : diag(i, h);
        for (int j = i + 1; j < n; ++j)
            H(i, j) = H(j, i) = fd_opts.richardson ? (4.0 * mixed(i, j, 0.5 * h) - mixed(i, j, h)) / 3.0 : mixed(i, j, h);
    }
    return H;
}

Vec gradient(const WarpedChart& c, const SolutionField& w, const Vec& x, const FdOptions& fd_opts) {
    return c.metric_at(x).ldlt().solve(partials(w, x, fd_opts));
}

double gradient_norm(const WarpedChart& c, const SolutionField& w, const Vec& x, const FdOptions& fd_opts) {
    const Vec dw = partials(w, x, fd_opts);
    return std::sqrt(std::max(0.0, dw.dot(c.metric_at(x).ldlt().solve(dw))));
}

Mat hessian(const WarpedChart& c, const SolutionField& w, const Vec& x, const FdOptions& fd_opts) {
    const Christoffel gamma = christoffel_at(c, x, fd_opts);
    const Vec dw = partials(w, x, fd_opts);
    Mat H = second_partials(w, x, fd_opts);
    for (int k = 0; k < dw.size(); ++k) H -= gamma[k] * dw[k];
    return H;
}

double trace_z(const WarpedChart& c, const SolutionField& w, const Vec& x, const FdOptions& fd_opts) {
    const Mat H = hessian(c, w, x, fd_opts);
    const Mat g = c.metric_at(x);
    return -(g.ldlt().solve(H)).trace() / static_cast<double>(c.dim());
}

// ---------------------------------------------------------------- residuals

std::vector<Vec> sample_grid(const WarpedChart& c, std::size_t count, std::uint64_t seed, double margin) {
    std::mt19937_64 rng(seed);
    std::vector<Vec> grid;
    grid.reserve(count);
    std::size_t attempts = 0;
    while (grid.size() < count) {
        if (++attempts > 100 * count + 100) throw std::runtime_error("sample_grid: sampling box is mostly excluded");
        Vec x = sample_chart(c, rng, margin);
        if (!c.zone(x, margin)) grid.push_back(std::move(x));
    }
    return grid;
}

std::vector<Vec> sample_fibers(const WarpedChart& c, int count, std::uint64_t seed, double margin) {
    std::mt19937_64 rng(seed);
    std::vector<Vec> out;
    for (int i = 0; i < count; ++i) out.push_back(sample_fiber(c.fiber(), rng, margin));
    return out;
}

namespace {

template <class F>
ResidualStats sweep(const std::vector<Vec>& grid, F&& residual_at) {
    ResidualStats s;
    double sum = 0.0;
    for (const Vec& x : grid) {
        const double r = residual_at(x);
        sum += r;
        if (s.count == 0 || r > s.max) {
            s.max = r;
            s.argmax = x;
        }
        ++s.count;
    }
    s.mean = s.count ? sum / static_cast<double>(s.count) : 0.0;
    return s;
}

}  // namespace

ResidualStats obata_residual(const WarpedChart& c, const SolutionField& w, const expr::Expr& f,
                             const std::vector<Vec>& grid, const FdOptions& fd_opts) {
    return sweep(grid, [&](const Vec& x) {
        const Mat R = hessian(c, w, x, fd_opts) + f(w.w(x)) * c.metric_at(x);
        return R.cwiseAbs().maxCoeff();
    });
}

ResidualStats gradient_norm_residual(const WarpedChart& c, const SolutionField& w, const classify::HFunc& h,
                                     double alpha, const std::vector<Vec>& grid, const FdOptions& fd_opts) {
    return sweep(grid, [&](const Vec& x) {
        const double g = gradient_norm(c, w, x, fd_opts);
        return std::fabs(g * g - h.affine(w.w(x), alpha));
    });
}

namespace {

struct Stop : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// dopri5 run observed at `samples` equispaced times on [0, t_end]; the
// stepper lands exactly on each observation time, so it never evaluates the
// system beyond t_end. An ExclusionZone or Stop thrown by the system ends
// the run with the samples gathered so far.
struct DenseRun {
    std::vector<double> t;
    std::vector<State> x;
    bool complete = true;
    std::string reason;
    State last;
};

template <class Sys>
DenseRun run_dense(Sys sys, State x0, double t_end, int samples, double tol) {
    DenseRun out;
    const int n_samples = std::max(samples, 2);
    std::vector<double> times(n_samples);
    for (int i = 0; i < n_samples; ++i) times[i] = t_end * i / (n_samples - 1);
    out.last = x0;
    auto observe = [&](const State& x, double t) {
        out.t.push_back(t);
        out.x.push_back(x);
        out.last = x;
    };
    try {
        odeint::integrate_times(odeint::make_controlled(tol, tol, odeint::runge_kutta_dopri5<State>()), sys, x0,
                                times.begin(), times.end(), std::min(1e-3, t_end), observe);
    } catch (const ExclusionZone& e) {
        out.complete = false;
        out.reason = e.what();
    } catch (const Stop& e) {
        out.complete = false;
        out.reason = e.what();
    }
    return out;
}

Vec to_vec(const State& s, int offset, int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = s[offset + i];
    return v;
}

}  // namespace

Path geodesic(const WarpedChart& c, const Vec& x0, const Vec& v0, double t_end, const PathOptions& opts) {
    const int n = c.dim();
    if (x0.size() != n || v0.size() != n) throw std::invalid_argument("geodesic: dimension mismatch");
    c.require_admissible(x0, 2.0 * opts.fd.step);
    auto sys = [&](const State& s, State& ds, double) {
        const Vec x = to_vec(s, 0, n), v = to_vec(s, n, n);
        const Christoffel G = christoffel_at(c, x, opts.fd);
        for (int k = 0; k < n; ++k) {
            ds[k] = v[k];
            ds[n + k] = -v.dot(G[k] * v);
        }
    };
    State s0(2 * n);
    for (int i = 0; i < n; ++i) {
        s0[i] = x0[i];
        s0[n + i] = v0[i];
    }
    auto run = run_dense(sys, s0, t_end, opts.samples, opts.tol);

    Path p;
    const double speed0 = std::sqrt(v0.dot(c.metric_at(x0) * v0));
    for (std::size_t i = 0; i < run.t.size(); ++i) {
        p.t.push_back(run.t[i]);
        p.x.push_back(to_vec(run.x[i], 0, n));
        p.v.push_back(to_vec(run.x[i], n, n));
        if (!c.zone(p.x.back())) {
            const double sp = std::sqrt(p.v.back().dot(c.metric_at(p.x.back()) * p.v.back()));
            p.speed_drift = std::max(p.speed_drift, std::fabs(sp - speed0));
        }
    }
    p.complete = run.complete;
    p.stop_reason = run.reason;
    p.exit_point = to_vec(run.last, 0, n);
    return p;
}

Path gradient_flow(const WarpedChart& c, const SolutionField& w, const Vec& x0, double t_end,
                   const PathOptions& opts, double min_grad) {
    const int n = c.dim();
    auto field = [&](const Vec& x) {
        c.require_admissible(x, 2.0 * opts.fd.step);
        const Vec g = gradient(c, w, x, opts.fd);
        const double norm = std::sqrt(g.dot(c.metric_at(x) * g));
        if (norm < min_grad) throw Stop("gradient collapse (|grad w| = " + std::to_string(norm) + ")");
        return Vec(g / norm);
    };
    auto sys = [&](const State& s, State& ds, double) {
        const Vec v = field(to_vec(s, 0, n));
        for (int k = 0; k < n; ++k) ds[k] = v[k];
    };
    State s0(x0.data(), x0.data() + n);
    auto run = run_dense(sys, s0, t_end, opts.samples, opts.tol);
    Path p;
    for (std::size_t i = 0; i < run.t.size(); ++i) {
        p.t.push_back(run.t[i]);
        p.x.push_back(to_vec(run.x[i], 0, n));
    }
    p.complete = run.complete;
    p.stop_reason = run.reason;
    p.exit_point = to_vec(run.last, 0, n);
    return p;
}

PathComparison flowline_geodesic_residual(const WarpedChart& c, const SolutionField& w, const Vec& x0,
                                          double t_end, const PathOptions& opts) {
    const Vec g0 = gradient(c, w, x0, opts.fd);
    const double norm = std::sqrt(g0.dot(c.metric_at(x0) * g0));
    PathComparison out;
    if (norm < 0.05) {
        out.complete = false;
        out.note = "gradient collapse at the start point";
        return out;
    }
    const Path flow = gradient_flow(c, w, x0, t_end, opts);
    const Path geo = geodesic(c, x0, g0 / norm, t_end, opts);
    const std::size_t m = std::min(flow.x.size(), geo.x.size());
    for (std::size_t i = 0; i < m; ++i) out.residual = std::max(out.residual, (flow.x[i] - geo.x[i]).norm());
    out.complete = flow.complete && geo.complete;
    if (!flow.complete) out.note = "flow line: " + flow.stop_reason;
    if (!geo.complete) out.note += (out.note.empty() ? "" : "; ") + std::string("geodesic: ") + geo.stop_reason;
    return out;
}

JacobiResult jacobi_residual(const WarpedChart& c, const Vec& fiber_point, const Vec& fiber_direction, double t0,
                             double t_end, const JacobiOracle& oracle, const PathOptions& opts) {
    const int n = c.dim();
    if (fiber_point.size() != n - 1 || fiber_direction.size() != n - 1)
        throw std::invalid_argument("jacobi_residual: fiber data has the wrong dimension");
    if (!(t_end > t0)) throw std::invalid_argument("jacobi_residual: t_end must exceed the start time");
    Vec x0(n);
    x0[0] = t0;
    x0.tail(n - 1) = fiber_point;
    c.require_admissible(x0, 2.0 * opts.fd.step);

    // Unit fiber direction transported to the chart: V = e / phi.
    const Mat gN = c.fiber_metric(fiber_point);
    const Vec e = fiber_direction / std::sqrt(fiber_direction.dot(gN * fiber_direction));
    Vec V0 = Vec::Zero(n);
    V0.tail(n - 1) = e / c.warp().value(t0);

    // State: gamma, gamma', Y, DY, V (each n components).
    auto sys = [&](const State& s, State& ds, double) {
        const Vec x = to_vec(s, 0, n), v = to_vec(s, n, n), Y = to_vec(s, 2 * n, n), P = to_vec(s, 3 * n, n),
                  V = to_vec(s, 4 * n, n);
        const Christoffel G = christoffel_at(c, x, opts.fd);
        const Riemann R = riemann_at(c, x, opts.fd);
        const Vec RY = R.apply(Y, v, v);
        for (int k = 0; k < n; ++k) {
            const double gv_Y = v.dot(G[k] * Y), gv_P = v.dot(G[k] * P), gv_V = v.dot(G[k] * V);
            ds[k] = v[k];
            ds[n + k] = -v.dot(G[k] * v);
            ds[2 * n + k] = P[k] - gv_Y;
            ds[3 * n + k] = -gv_P - RY[k];
            ds[4 * n + k] = -gv_V;
        }
    };
    State s0(5 * n, 0.0);
    for (int i = 0; i < n; ++i) {
        s0[i] = x0[i];
        s0[2 * n + i] = oracle.psi(t0) * V0[i];
        s0[3 * n + i] = oracle.dpsi(t0) * V0[i];
        s0[4 * n + i] = V0[i];
    }
    s0[n] = 1.0;  // unit radial velocity

    auto run = run_dense(sys, s0, t_end - t0, opts.samples, opts.tol);
    JacobiResult out;
    out.t_start = t0;
    out.complete = run.complete;
    out.note = run.reason;
    for (std::size_t i = 0; i < run.t.size(); ++i) {
        const Vec x = to_vec(run.x[i], 0, n), Y = to_vec(run.x[i], 2 * n, n), V = to_vec(run.x[i], 4 * n, n);
        if (c.zone(x)) continue;
        const Vec d = Y - oracle.psi(t0 + run.t[i]) * V;
        out.residual = std::max(out.residual, std::sqrt(d.dot(c.metric_at(x) * d)));
    }
    return out;
}

std::optional<Vec> radial_root(const WarpedChart& c, const SolutionField& w, const Vec& y, double level) {
    const Interval a = c.r_admissible();
    const double lo = sampling_clip(a.lo, -10.0) + 1e-6, hi = sampling_clip(a.hi, 10.0) - 1e-6;
    const int n = c.dim();
    auto point = [&](double r) {
        Vec x(n);
        x[0] = r;
        x.tail(n - 1) = y;
        return x;
    };
    auto g = [&](double r) { return w.w(point(r)) - level; };
    constexpr int kCells = 2000;
    double prev_r = lo, prev = g(lo);
    if (prev == 0.0) return point(lo);
    for (int i = 1; i <= kCells; ++i) {
        const double r = lo + (hi - lo) * i / kCells;
        const double cur = g(r);
        if (cur == 0.0) return point(r);
        if ((cur > 0.0) != (prev > 0.0)) return point(numeric::bisect(g, prev_r, r, 1e-15));
        prev_r = r;
        prev = cur;
    }
    return std::nullopt;
}

namespace {

double population_std(const std::vector<double>& v, double* mean_out) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    if (mean_out) *mean_out = mean;
    return std::sqrt(var / static_cast<double>(v.size()));
}

}  // namespace

LevelSetStats levelset_constancy(const WarpedChart& c, const SolutionField& w, double level, int n_samples,
                                 std::uint64_t seed, const FdOptions& fd_opts) {
    LevelSetStats out;
    std::vector<double> norms, zs;
    for (const Vec& y : sample_fibers(c, n_samples, seed, 0.01)) {
        auto x = radial_root(c, w, y, level);
        if (!x || c.zone(*x, 2.0 * fd_opts.step)) continue;
        out.points.push_back(*x);
        norms.push_back(gradient_norm(c, w, *x, fd_opts));
        zs.push_back(w.z ? w.z(*x) : trace_z(c, w, *x, fd_opts));
    }
    if (out.points.empty()) throw LevelNotAttained("level " + std::to_string(level) + " not attained on any radial line");
    out.std_gradnorm = population_std(norms, &out.mean_gradnorm);
    out.std_z = population_std(zs, &out.mean_z);
    return out;
}

double warp_factorization_residual(const WarpedChart& c, const SolutionField& w, const classify::HFunc& h,
                                   const FactorizationOptions& opts) {
    const int n = c.dim();
    const double mu = h.base();
    if (opts.levels.empty()) throw std::invalid_argument("warp_factorization_residual: no levels");

    auto level_point = [&](const Vec& y) {
        auto q = radial_root(c, w, y, mu);
        if (!q) throw LevelNotAttained("anchor level " + std::to_string(mu) + " not attained");
        return *q;
    };
    // Flow of X = grad w / |grad w|^2 for "time" ds: w advances by ds.
    auto X = [&](const Vec& x) {
        const Vec g = gradient(c, w, x, opts.fd);
        return Vec(g / g.dot(c.metric_at(x) * g));
    };
    auto flow = [&](const Vec& q, double ds) {
        odeint::runge_kutta4<State> rk4;
        State s(q.data(), q.data() + n);
        auto sys = [&](const State& st, State& d, double) {
            const Vec v = X(to_vec(st, 0, n));
            for (int k = 0; k < n; ++k) d[k] = v[k];
        };
        const double dt = ds / opts.rk4_steps;
        for (int i = 0; i < opts.rk4_steps; ++i) rk4.do_step(sys, s, dt * i, dt);
        return to_vec(s, 0, n);
    };

    const std::vector<Vec> ys = sample_fibers(c, opts.fiber_samples, opts.seed, 0.02);
    const double alpha = gradient_norm(c, w, level_point(ys.front()), opts.fd);
    const double h_mu = alpha * alpha;
    for (double s : opts.levels)
        if (!(h.affine(s, alpha) > 0.0))
            throw BandError("h_a(s) <= 0 at s=" + std::to_string(s) + ": the band crosses a critical level");

    double worst = 0.0;
    for (const Vec& y : ys) {
        const Vec q = level_point(y);
        // Tangent frame of the level set from the fiber coordinates.
        Mat JN(n, n - 1);
        for (int a = 0; a < n - 1; ++a)
            JN.col(a) = fd<Vec>([&](double d) { return level_point(shifted(y, a, d)); }, opts.jacobian_step, true);
        const Mat gN = JN.transpose() * c.metric_at(q) * JN;

        for (double s : opts.levels) {
            const Vec F = flow(q, s - mu);
            Mat J(n, n);
            J.col(0) = X(F);
            for (int a = 0; a < n - 1; ++a)
                J.col(a + 1) = fd<Vec>([&](double d) { return flow(level_point(shifted(y, a, d)), s - mu); },
                                       opts.jacobian_step, true);
            const Mat G = J.transpose() * c.metric_at(F) * J;
            const double ha = h.affine(s, alpha);
            Mat expected = Mat::Zero(n, n);
            expected(0, 0) = 1.0 / ha;
            expected.bottomRightCorner(n - 1, n - 1) = (ha / h_mu) * gN;
            worst = std::max(worst, (G - expected).cwiseAbs().maxCoeff());
        }
    }
    return worst;
}

double shape_operator_residual(const WarpedChart& c, const SolutionField& w, const Vec& x, const FdOptions& fd_opts) {
    const int n = c.dim();
    const Mat g = c.metric_at(x);
    auto normal = [&](const Vec& p) {
        const Vec gr = gradient(c, w, p, fd_opts);
        return Vec(gr / std::sqrt(gr.dot(c.metric_at(p) * gr)));
    };
    const Vec nu = normal(x);
    const double grad = gradient_norm(c, w, x, fd_opts);
    const double z = w.z ? w.z(x) : trace_z(c, w, x, fd_opts);

    // g-orthonormal basis of the tangent space of the level set.
    std::vector<Vec> basis;
    for (int i = 0; i < n && static_cast<int>(basis.size()) < n - 1; ++i) {
        Vec v = Vec::Unit(n, i);
        v -= v.dot(g * nu) * nu;
        for (const Vec& b : basis) v -= v.dot(g * b) * b;
        const double len = std::sqrt(v.dot(g * v));
        if (len > 1e-6) basis.push_back(v / len);
    }
    const Christoffel G = christoffel_at(c, x, fd_opts);
    Mat dnu(n, n);  // dnu.col(i) = d_i nu
    for (int i = 0; i < n; ++i) dnu.col(i) = fd<Vec>([&](double d) { return normal(shifted(x, i, d)); }, fd_opts.step, fd_opts.richardson);

    double worst = 0.0;
    for (std::size_t a = 0; a < basis.size(); ++a) {
        // S(X) = -nabla_X nu
        Vec cov = dnu * basis[a];
        for (int k = 0; k < n; ++k) cov[k] += basis[a].dot(G[k] * nu);
        const Vec S = -cov;
        for (std::size_t b = 0; b < basis.size(); ++b) {
            const double expected = a == b ? z / grad : 0.0;
            worst = std::max(worst, std::fabs(S.dot(g * basis[b]) - expected));
        }
    }
    return worst;
}

}  // namespace obata::geometry
