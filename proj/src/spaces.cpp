#include "obata/spaces.hpp"

#include <algorithm>
#include <array>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

namespace obata::spaces {

using geometry::SolutionField;
using geometry::WarpedChart;

std::string to_string(Topology t) {
    switch (t) {
        case Topology::DiskLike: return "DiskLikeRn";
        case Topology::SphereLike: return "SphereLike";
        case Topology::ProductLine: return "ProductLine";
        case Topology::NonSmoothClosure: return "NonSmoothClosure";
    }
    return "?";
}

std::string to_string(SpaceTag t) {
    switch (t) {
        case SpaceTag::Wh: return "W_h";
        case SpaceTag::We: return "W_e";
        case SpaceTag::Wf: return "W_f";
    }
    return "?";
}

// ------------------------------------------------------------------ models

SolutionField Model::field() const {
    auto p = profile;
    const int dim = n;
    SolutionField s;
    s.name = "u(t)";
    s.w = [p](const Vec& x) { return p->u(x[0]); };
    s.partials = [p, dim](const Vec& x) {
        Vec d = Vec::Zero(dim);
        d[0] = p->up(x[0]);
        return d;
    };
    s.second_partials = [p, dim](const Vec& x) {
        Mat h = Mat::Zero(dim, dim);
        h(0, 0) = p->upp(x[0]);
        return h;
    };
    return s;
}

namespace {

constexpr double kClosureTol = 1e-6;
constexpr double kRadialCap = 0.05;

Model assemble(const expr::Expr& f, double mu, int n, const classify::PairClass& pair,
               std::shared_ptr<const profile::Profile> p, double scale, const ModelOptions& opts) {
    Model m;
    m.f = f;
    m.mu = mu;
    m.n = n;
    m.pair = pair;
    m.profile = p;
    m.warp_scale = scale;
    const double f_mu = f(mu);

    m.closure.phi_0 = scale * p->up(0.0);
    m.closure.dphi_0 = scale * p->upp(0.0);
    const bool start_ok = std::fabs(m.closure.phi_0) <= kClosureTol && std::fabs(m.closure.dphi_0 - 1.0) <= kClosureTol;

    geometry::Interval domain{0.0, p->t_max()};
    geometry::Interval sampling;
    if (pair.kind == classify::PairKind::Compact) {
        const double T = *pair.T;
        if (p->t_max() < T) throw std::runtime_error("build_model: profile does not reach T");
        domain.hi = T;
        m.closure.phi_T = scale * p->up(T);
        m.closure.dphi_T = scale * p->upp(T);
        const bool end_ok = std::fabs(*m.closure.phi_T) <= kClosureTol && std::fabs(*m.closure.dphi_T + 1.0) <= kClosureTol &&
                            pair.coincidence_residual && *pair.coincidence_residual <= kClosureTol;
        m.closure.pass = start_ok && end_ok;
        m.topology = m.closure.pass ? Topology::SphereLike : Topology::NonSmoothClosure;
        sampling = {kRadialCap, T - kRadialCap};
    } else {
        // A type II profile may turn back at the unstable level nu after
        // stalling there; the chart ends at that turn.
        if (pair.kind == classify::PairKind::NoncompactII && pair.evidence.ode_event)
            domain.hi = *pair.evidence.ode_event;
        bool second_event = false;
        for (const auto& e : p->events())
            if (e.kind == profile::EventKind::SlopeZero && e.t > 1e-9 && e.t < domain.hi) second_event = true;
        m.closure.pass = start_ok && !second_event;
        m.topology = Topology::DiskLike;
        // Probe band: stop where the slope becomes small or at the cap.
        const double stop = std::min(opts.probe_cap, domain.hi - kRadialCap);
        double end = stop;
        for (double t = 0.5; t <= stop; t += 0.01) {
            if (std::fabs(p->up(t)) < opts.probe_min_slope) {
                end = t;
                break;
            }
        }
        sampling = {kRadialCap, end};
    }
    (void)f_mu;
    auto chart = std::make_shared<WarpedChart>(geometry::Warp::profile(p, scale), geometry::RoundSphere{n - 1}, domain,
                                               kRadialCap);
    chart->set_r_sampling(sampling);
    m.chart = chart;
    return m;
}

}  // namespace

Model build_model(const expr::Expr& f, double mu, int n, const ModelOptions& opts) {
    if (n < 2) throw std::invalid_argument("build_model: dimension must be at least 2");
    const double f_mu = f(mu);
    if (std::fabs(f_mu) <= opts.pair.tol.f) throw classify::DegeneratePair("build_model: f(mu) = 0");
    const classify::PairClass pair = classify::classify_pair(f, mu, opts.pair);
    if (pair.kind == classify::PairKind::Undetermined)
        throw classify::Undetermined("build_model: pair type undetermined (" + pair.evidence.note + ")");
    const double t_max = pair.kind == classify::PairKind::Compact ? *pair.T + 0.5 : opts.pair.t_budget;
    auto p = std::make_shared<const profile::Profile>(profile::solve_profile(f, mu, 0.0, t_max, opts.ode));
    return assemble(f, mu, n, pair, std::move(p), -1.0 / f_mu, opts);
}

Model model_from_nodes(const expr::Expr& f, double mu, int n, const classify::PairClass& pair,
                       std::vector<profile::Node> nodes, double warp_scale, const ModelOptions& opts) {
    auto p = std::make_shared<const profile::Profile>(f, mu, 0.0, std::move(nodes), opts.ode.event_tol);
    return assemble(f, mu, n, pair, std::move(p), warp_scale, opts);
}

// ------------------------------------------------------------------ towers

std::shared_ptr<const WarpedChart> build_cosh_tower(const geometry::Fiber& inner, int k) {
    if (k < 1) throw std::invalid_argument("build_cosh_tower: k must be at least 1");
    auto chart = std::make_shared<const WarpedChart>(geometry::Warp::cosh(), inner);
    for (int i = 1; i < k; ++i)
        chart = std::make_shared<const WarpedChart>(geometry::Warp::cosh(), geometry::Nested{chart});
    return chart;
}

std::shared_ptr<const WarpedChart> build_exp_warping(const geometry::Fiber& inner) {
    return std::make_shared<const WarpedChart>(geometry::Warp::exp(), inner);
}

std::shared_ptr<const WarpedChart> euclidean_chart(int k, const geometry::Fiber& fiber) {
    if (k < 2) throw std::invalid_argument("euclidean_chart: k must be at least 2");
    auto chart = std::make_shared<const WarpedChart>(geometry::Warp::constant(1.0), fiber);
    for (int i = 2; i < k; ++i)
        chart = std::make_shared<const WarpedChart>(geometry::Warp::constant(1.0), geometry::Nested{chart});
    return chart;
}

int tower_depth(const WarpedChart& c) {
    int depth = 0;
    const WarpedChart* cur = &c;
    while (cur && cur->warp().kind() == geometry::Warp::Kind::Cosh) {
        ++depth;
        const auto* nested = std::get_if<geometry::Nested>(&cur->fiber());
        cur = nested ? nested->chart.get() : nullptr;
    }
    return depth;
}

// ------------------------------------------------------------------- bases

std::vector<SolutionField> line_hyperbolic_seed() {
    SolutionField s{"sinh y", [](const Vec& y) { return std::sinh(y[0]); }, {}, {}, {}};
    SolutionField c{"cosh y", [](const Vec& y) { return std::cosh(y[0]); }, {}, {}, {}};
    return {s, c};
}

namespace {

void verify_into(SolutionBasis& b, SolutionField field, const expr::Expr& f, const std::vector<Vec>& grid) {
    BasisElement e{std::move(field), {}};
    e.residual = geometry::obata_residual(*b.chart, e.field, f, grid);
    (e.residual.max <= b.threshold ? b.elements : b.rejected).push_back(std::move(e));
}

}  // namespace

SolutionBasis hyperbolic_basis(std::shared_ptr<const WarpedChart> tower, const std::vector<SolutionField>& inner_basis,
                               const BasisOptions& opts) {
    const int k = tower_depth(*tower);
    if (k < 1) throw std::invalid_argument("hyperbolic_basis: chart is not a cosh tower");
    SolutionBasis b;
    b.tag = SpaceTag::Wh;
    b.chart = tower;
    b.threshold = opts.threshold;
    const expr::Expr f = -expr::Expr::variable();
    const auto grid = geometry::sample_grid(*tower, opts.grid, opts.seed);

    auto cosh_prefix = [](const Vec& x, int j) {
        double p = 1.0;
        for (int i = 0; i < j; ++i) p *= std::cosh(x[i]);
        return p;
    };
    auto prefix_name = [](int j) {
        std::string s;
        for (int i = 0; i < j; ++i) s += "cosh r" + std::to_string(i + 1) + " ";
        return s;
    };
    for (int j = 0; j < k; ++j) {
        SolutionField w;
        w.name = prefix_name(j) + "sinh r" + std::to_string(j + 1);
        w.w = [=](const Vec& x) { return cosh_prefix(x, j) * std::sinh(x[j]); };
        verify_into(b, std::move(w), f, grid);
    }
    const int n = tower->dim();
    for (const SolutionField& w0 : inner_basis) {
        SolutionField w;
        w.name = prefix_name(k) + "* " + w0.name;
        auto inner = w0.w;
        w.w = [=](const Vec& x) { return cosh_prefix(x, k) * inner(x.tail(n - k)); };
        verify_into(b, std::move(w), f, grid);
    }
    return b;
}

SolutionBasis euclidean_basis(int k, const geometry::Fiber& fiber, const BasisOptions& opts) {
    SolutionBasis b;
    b.tag = SpaceTag::We;
    b.chart = euclidean_chart(k, fiber);
    b.threshold = opts.threshold;
    const expr::Expr zero = expr::Expr::number(0.0);
    const auto grid = geometry::sample_grid(*b.chart, opts.grid, opts.seed);
    verify_into(b, {"1", [](const Vec&) { return 1.0; }, {}, {}, {}}, zero, grid);
    for (int i = 0; i < k - 1; ++i)
        verify_into(b, {"x" + std::to_string(i + 1), [i](const Vec& x) { return x[i]; }, {}, {}, {}}, zero, grid);
    return b;
}

EvaluationRank evaluation_rank(const SolutionBasis& basis, const Vec& p0, double tol) {
    const WarpedChart& c = *basis.chart;
    const int n = c.dim();
    EvaluationRank out;
    out.matrix = Mat::Zero(1 + n, static_cast<int>(basis.elements.size()));
    if (basis.elements.empty()) return out;
    const Mat L = c.metric_at(p0).llt().matrixL();
    for (std::size_t j = 0; j < basis.elements.size(); ++j) {
        const SolutionField& w = basis.elements[j].field;
        out.matrix(0, j) = w.w(p0);
        out.matrix.block(1, j, n, 1) = L.triangularView<Eigen::Lower>().solve(geometry::partials(w, p0));
    }
    Eigen::JacobiSVD<Mat> svd(out.matrix);
    const Vec sv = svd.singularValues();
    for (int i = 0; i < sv.size(); ++i) {
        out.singular_values.push_back(sv[i]);
        if (sv[i] > tol * sv[0]) ++out.rank;
    }
    return out;
}

// -------------------------------------------------------------- monodromy

namespace {

// Fundamental matrix of w'' = c w over [0, length] (sign -1: the inverse).
Mat fundamental(double c, double length, double sign) {
    namespace odeint = boost::numeric::odeint;
    using State = std::array<double, 4>;  // (w1, w1', w2, w2')
    auto sys = [c, sign](const State& x, State& dx, double) {
        dx[0] = sign * x[1];
        dx[1] = sign * c * x[0];
        dx[2] = sign * x[3];
        dx[3] = sign * c * x[2];
    };
    State x{1.0, 0.0, 0.0, 1.0};
    odeint::integrate_adaptive(odeint::make_controlled(1e-15, 1e-15, odeint::runge_kutta_fehlberg78<State>()), sys, x,
                               0.0, length, 1e-3);
    Mat M(2, 2);
    M << x[0], x[2], x[1], x[3];
    return M;
}

double spectral_radius(const Mat& M) {
    Eigen::EigenSolver<Mat> es(M);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

Monodromy linear_monodromy(double c, double length) {
    if (!(length > 0.0)) throw std::invalid_argument("linear_monodromy: length must be positive");
    Monodromy out;
    out.matrix = fundamental(c, length, 1.0);
    out.lambda_max = spectral_radius(out.matrix);
    // The small eigenvalue is read off the inverse map, where it dominates.
    out.lambda_min = 1.0 / spectral_radius(fundamental(c, length, -1.0));
    const Mat D = out.matrix - Mat::Identity(2, 2);
    Eigen::JacobiSVD<Mat> svd(D);
    const double thresh = 1e-8 * std::max(1.0, out.matrix.norm());
    int rank = 0;
    for (int i = 0; i < 2; ++i)
        if (svd.singularValues()[i] > thresh) ++rank;
    out.fixed_dim = 2 - rank;
    return out;
}

Monodromy circle_obstruction(double rho) {
    if (!(rho > 0.0)) throw std::invalid_argument("circle_obstruction: rho must be positive");
    return linear_monodromy(1.0, 2.0 * std::numbers::pi * rho);
}

// --------------------------------------------------------------- recovery

double RecoveredF::operator()(double s) const {
    if (bins.empty()) throw std::logic_error("RecoveredF: no bins");
    if (s <= bins.front().s) return bins.front().z;
    if (s >= bins.back().s) return bins.back().z;
    auto it = std::lower_bound(bins.begin(), bins.end(), s, [](const RecoveredBin& b, double v) { return b.s < v; });
    const RecoveredBin& hi = *it;
    const RecoveredBin& lo = *(it - 1);
    const double a = (s - lo.s) / (hi.s - lo.s);
    return lo.z + a * (hi.z - lo.z);
}

RecoveredF recover_f(const WarpedChart& c, const SolutionField& w, const std::vector<Vec>& grid,
                     const RecoverOptions& opts) {
    RecoveredF out;
    out.samples.reserve(grid.size());
    for (const Vec& x : grid) out.samples.emplace_back(w.w(x), geometry::trace_z(c, w, x, opts.fd));
    std::sort(out.samples.begin(), out.samples.end());

    std::map<long long, std::vector<std::pair<double, double>>> bins;
    for (const auto& sz : out.samples) bins[static_cast<long long>(std::floor(sz.first / opts.bin_width))].push_back(sz);
    for (const auto& [key, members] : bins) {
        if (static_cast<int>(members.size()) < opts.min_bin_count) continue;
        RecoveredBin b{0.0, 0.0, 0.0, static_cast<int>(members.size())};
        double zmin = members.front().second, zmax = zmin;
        for (const auto& [s, z] : members) {
            b.s += s;
            b.z += z;
            zmin = std::min(zmin, z);
            zmax = std::max(zmax, z);
        }
        b.s /= b.count;
        b.z /= b.count;
        b.spread = zmax - zmin;
        if (b.spread >= out.single_valued_residual) {
            out.single_valued_residual = b.spread;
            out.worst_level = b.s;
        }
        out.bins.push_back(b);
    }
    if (out.bins.empty()) throw std::runtime_error("recover_f: no bin holds enough samples");
    if (out.single_valued_residual > opts.max_spread)
        throw FunctionalDependenceError("z is not a function of w: spread " + std::to_string(out.single_valued_residual) +
                                            " near w=" + std::to_string(out.worst_level),
                                        out.single_valued_residual, out.worst_level);
    return out;
}

std::vector<Vec> product_grid(const WarpedChart& c, int radial, int fiber, std::uint64_t seed) {
    if (radial < 2 || fiber < 1) throw std::invalid_argument("product_grid: need radial >= 2 and fiber >= 1");
    const geometry::Interval iv = c.r_sampling();
    const double lo = iv.lo + 0.01, hi = iv.hi - 0.01;
    const auto ys = geometry::sample_fibers(c, fiber, seed, 0.01);
    std::vector<Vec> grid;
    const int n = c.dim();
    for (int i = 0; i < radial; ++i) {
        const double r = lo + (hi - lo) * i / (radial - 1);
        for (const Vec& y : ys) {
            Vec x(n);
            x[0] = r;
            x.tail(n - 1) = y;
            grid.push_back(std::move(x));
        }
    }
    return grid;
}

// ----------------------------------------------------------- verification

double model_curvature(const Model& m, const Vec& x, const Vec& X, const Vec& Y) {
    const profile::Profile& p = *m.profile;
    const double t = x[0];
    const double u = p.u(t), up = p.up(t), f_mu = m.f(m.mu), fu = m.f(u);
    const double k_radial = expr::differentiate(m.f)(u);
    const double k_tangential = (f_mu * f_mu - fu * fu) / (up * up);
    const Mat g = m.chart->metric_at(x);
    Vec Xp = X, Yp = Y;
    Xp[0] = 0.0;
    Yp[0] = 0.0;
    const Vec mixed = X[0] * Yp - Y[0] * Xp;
    const double radial = mixed.dot(g * mixed);
    const double tangential = Xp.dot(g * Xp) * Yp.dot(g * Yp) - std::pow(Xp.dot(g * Yp), 2);
    const double area2 = X.dot(g * X) * Y.dot(g * Y) - std::pow(X.dot(g * Y), 2);
    return (k_radial * radial + k_tangential * tangential) / area2;
}

std::vector<CheckResult> verify_model(const Model& m, const VerifyOptions& opts) {
    const WarpedChart& c = *m.chart;
    const SolutionField w = m.field();
    const profile::Profile& p = *m.profile;
    const geometry::Interval band = c.r_sampling();
    const int n = c.dim();
    const double f_mu = m.f(m.mu);
    std::vector<CheckResult> out;
    auto push = [&](CheckResult r) {
        r.pass = r.pass && r.max <= r.tolerance;
        out.push_back(std::move(r));
    };

    {
        // Smooth closure at the poles: phi = 0, phi' = +-1.
        const auto& cl = m.closure;
        double worst = std::max(std::fabs(cl.phi_0), std::fabs(cl.dphi_0 - 1.0));
        if (cl.phi_T) worst = std::max({worst, std::fabs(*cl.phi_T), std::fabs(*cl.dphi_T + 1.0)});
        push({"closure", worst, worst, kClosureTol, true, std::nullopt, ""});
    }
    const auto grid = geometry::sample_grid(c, opts.grid, opts.seed);
    {
        const auto s = geometry::obata_residual(c, w, m.f, grid);
        push({"obata", s.max, s.mean, opts.tol_obata, true, s.argmax, ""});
    }
    {
        const classify::HFunc h(m.f, m.mu);
        const auto s = geometry::gradient_norm_residual(c, w, h, 0.0, grid);
        push({"gradient_norm", s.max, s.mean, opts.tol_gradient, true, s.argmax, ""});
    }
    const auto fibers = geometry::sample_fibers(c, 3, opts.seed + 1, 0.05);
    {
        CheckResult r{"flowline_geodesic", 0.0, 0.0, opts.tol_flowline, true, std::nullopt, ""};
        double sum = 0.0;
        int runs = 0;
        for (int i = 0; i < 3; ++i) {
            const double t0 = band.lo + (0.35 + 0.15 * i) * (band.hi - band.lo);
            const double dir = p.up(t0) >= 0.0 ? 1.0 : -1.0;
            const double room = dir > 0 ? band.hi - 0.02 - t0 : t0 - band.lo - 0.02;
            const double t_end = std::min(1.0, room);
            if (t_end <= 0.05) continue;
            Vec x0(n);
            x0[0] = t0;
            x0.tail(n - 1) = fibers[i];
            const auto cmp = geometry::flowline_geodesic_residual(c, w, x0, t_end);
            if (!cmp.complete) {
                r.pass = false;
                r.note = cmp.note;
            }
            if (cmp.residual >= r.max) {
                r.max = cmp.residual;
                r.argmax = x0;
            }
            sum += cmp.residual;
            ++runs;
        }
        r.mean = runs ? sum / runs : 0.0;
        if (!runs) r.note = "band too short for a flow line";
        push(r);
    }
    const double t_mid = 0.5 * (band.lo + band.hi);
    {
        CheckResult r{"levelset", 0.0, 0.0, opts.tol_levelset, true, std::nullopt, ""};
        try {
            const auto s = geometry::levelset_constancy(c, w, p.u(t_mid), 16, opts.seed);
            r.max = std::max(s.std_gradnorm, s.std_z);
            r.mean = 0.5 * (s.std_gradnorm + s.std_z);
        } catch (const std::exception& e) {
            r.pass = false;
            r.note = e.what();
        }
        push(r);
    }
    {
        CheckResult r{"warp_factorization", 0.0, 0.0, opts.tol_factorization, true, std::nullopt, ""};
        try {
            geometry::FactorizationOptions fo;
            fo.seed = opts.seed;
            const double half = 0.5 * (band.hi - band.lo);
            for (double d : {-0.4, -0.2, 0.2, 0.4}) fo.levels.push_back(p.u(t_mid + d * half));
            const classify::HFunc h(m.f, p.u(t_mid));
            r.max = r.mean = geometry::warp_factorization_residual(c, w, h, fo);
        } catch (const std::exception& e) {
            r.pass = false;
            r.note = e.what();
        }
        push(r);
    }
    {
        CheckResult r{"sectional_curvature", 0.0, 0.0, opts.tol_curvature, true, std::nullopt, ""};
        std::mt19937_64 rng(opts.seed + 2);
        std::normal_distribution<double> normal;
        const auto pts = geometry::sample_grid(c, opts.curvature_samples, opts.seed + 3, 0.01);
        double sum = 0.0;
        for (const Vec& x : pts) {
            Vec X(n), Y(n);
            for (int i = 0; i < n; ++i) {
                X[i] = normal(rng);
                Y[i] = normal(rng);
            }
            const double expected = model_curvature(m, x, X, Y);
            const double got = geometry::sectional_curvature(c, x, X, Y);
            const double err = std::fabs(got - expected) / std::max(1.0, std::fabs(expected));
            sum += err;
            if (err >= r.max) {
                r.max = err;
                r.argmax = x;
            }
        }
        r.mean = pts.empty() ? 0.0 : sum / static_cast<double>(pts.size());
        push(r);
    }
    {
        CheckResult r{"jacobi", 0.0, 0.0, opts.tol_jacobi, true, std::nullopt, ""};
        Vec y = Vec::Constant(n - 1, std::numbers::pi / 2);
        y[n - 2] = 0.3;
        const Vec dir = Vec::Unit(n - 1, 0);
        const double t_end = band.hi - 0.01;
        geometry::JacobiOracle oracle{[&](double t) { return -p.up(t) / f_mu; },
                                      [&](double t) { return m.f(p.u(t)) / f_mu; }};
        const auto j = geometry::jacobi_residual(c, y, dir, kRadialCap + 0.01, t_end, oracle);
        r.max = r.mean = j.residual;
        r.pass = j.complete;
        r.note = j.note;
        push(r);
    }
    return out;
}

}  // namespace obata::spaces
