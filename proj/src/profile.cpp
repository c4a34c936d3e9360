#include "obata/profile.hpp"

#include <algorithm>
#include <array>
#include <boost/numeric/odeint.hpp>
#include <cmath>


namespace obata::profile {

namespace odeint = boost::numeric::odeint;

namespace {

using State = std::array<double, 2>;

struct Leg {
    std::vector<Node> nodes;
    std::optional<Event> terminal;
};

// Integrates u'' + f(u) = 0 from t = 0 in the direction of sign.
// Backward legs use the time-reversed system and report negative times.
Leg integrate_leg(const expr::Expr& f, double u0, double v0, double t_end, double sign, const Options& opts) {
    auto system = [&](const State& x, State& dxdt, double) {
        dxdt[0] = sign * x[1];
        dxdt[1] = -sign * f(x[0]);
    };
    auto stepper = odeint::make_controlled(opts.abs_tol, opts.rel_tol, opts.max_step,
                                           odeint::runge_kutta_dopri5<State>());
    Leg leg;
    State x{u0, v0};
    double tau = 0.0;
    double dt = std::min(1e-3, opts.max_step);
    leg.nodes.push_back({0.0, u0, v0});
    while (tau < t_end) {
        dt = std::min(dt, t_end - tau);
        const double tau_before = tau;
        const State x_before = x;
        int failures = 0;
        while (stepper.try_step(system, x, tau, dt) == odeint::fail) {
            if (dt < 1e-14 * (1.0 + std::fabs(tau)) || ++failures > 200)
                throw ProfileError("step size underflow at t=" + std::to_string(sign * tau_before),
                                   {sign * tau_before, x_before[0], x_before[1]});
        }
        leg.nodes.push_back({sign * tau, x[0], x[1]});
        if (std::fabs(x[0]) > opts.u_escape) {
            leg.terminal = Event{sign * tau, EventKind::Escape};
            return leg;
        }
        // try_step may overshoot the remaining span by round-off only.
        if (t_end - tau < 1e-12 * (1.0 + t_end)) break;
    }
    leg.terminal = Event{sign * tau, EventKind::Budget};
    return leg;
}

}  // namespace

std::string to_string(EventKind k) {
    switch (k) {
        case EventKind::SlopeZero: return "slope_zero";
        case EventKind::Escape: return "escape";
        case EventKind::Budget: return "budget";
    }
    return "?";
}

Profile::Profile(expr::Expr f, double u0, double v0, std::vector<Node> nodes, double event_tol)
    : f_(std::move(f)), df_(expr::differentiate(f_)), u0_(u0), v0_(v0), nodes_(std::move(nodes)) {
    if (nodes_.size() < 2) throw std::invalid_argument("Profile: need at least two nodes");
    const std::size_t n = nodes_.size();
    std::vector<double> t(n), u(n), up(n), upp(n), uppp(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Node& nd = nodes_[i];
        t[i] = nd.t;
        u[i] = nd.u;
        up[i] = nd.up;
        upp[i] = -f_(nd.u);
        uppp[i] = -df_(nd.u) * nd.up;
    }
    u_ = numeric::QuinticHermite(t, u, up, upp);
    up_ = numeric::QuinticHermite(t, up, upp, uppp);

    // Slope-zero events: exact zeros at nodes plus bisected sign changes.
    auto push = [&](double te) {
        if (!events_.empty() && std::fabs(events_.back().t - te) < 1e-9) return;
        events_.push_back({te, EventKind::SlopeZero});
    };
    for (std::size_t i = 0; i < n; ++i) {
        if (up[i] == 0.0) {
            push(t[i]);
            continue;
        }
        if (i + 1 < n && up[i + 1] != 0.0 && (up[i] > 0.0) != (up[i + 1] > 0.0))
            push(numeric::bisect([this](double s) { return up_.value(s); }, t[i], t[i + 1], event_tol));
    }

    // Energy certificate, measured relative to max(1, u'^2) so that escaping
    // runs stay comparable.
    // h(u) is accumulated node to node outward from t = 0, so escaping runs
    // cost one short quadrature per node.
    const double offset = 0.5 * v0_ * v0_;
    auto f_of = [this](double s) { return f_(s); };
    const auto origin = static_cast<std::size_t>(
        std::lower_bound(t.begin(), t.end(), 0.0) - t.begin());
    auto sweep = [&](std::size_t from, int step) {
        double h = 0.0;
        double u_prev = u0_;
        for (std::size_t i = from; i < n; i += step) {
            h += numeric::integrate(f_of, u_prev, u[i], 1e-13);
            u_prev = u[i];
            const double e = up[i] * up[i] + 2.0 * (h - offset);
            energy_max_drift_ = std::max(energy_max_drift_, std::fabs(e) / std::max(1.0, up[i] * up[i]));
            if (step < 0 && i == 0) break;
        }
    };
    if (origin < n) sweep(origin, 1);
    if (origin > 0) sweep(origin - 1, -1);
}

Profile solve_profile(const expr::Expr& f, double u0, double v0, double t_max, const Options& opts) {
    if (!(t_max > 0.0)) throw std::invalid_argument("solve_profile: t_max must be positive");
    if (v0 == 0.0 && std::fabs(f(u0)) <= 1e-12)
        throw ConstantSolution("f(u0) = 0 with zero slope: the solution is constant");

    Leg forward = integrate_leg(f, u0, v0, t_max, 1.0, opts);
    std::vector<Node> nodes;
    std::optional<Event> back_terminal;
    if (opts.t_back > 0.0) {
        Leg backward = integrate_leg(f, u0, v0, opts.t_back, -1.0, opts);
        nodes.assign(backward.nodes.rbegin(), backward.nodes.rend() - 1);
        back_terminal = backward.terminal;
    }
    nodes.insert(nodes.end(), forward.nodes.begin(), forward.nodes.end());

    Profile p(f, u0, v0, std::move(nodes), opts.event_tol);
    if (back_terminal && back_terminal->kind == EventKind::Escape) p.add_terminal_event(*back_terminal);
    if (forward.terminal) p.add_terminal_event(*forward.terminal);
    return p;
}

CriticalTime detect_T(const Profile& p) {
    for (const Event& e : p.events())
        if (e.kind == EventKind::SlopeZero && e.t > 1e-9) return {e.t, e.kind};
    for (const Event& e : p.events())
        if (e.kind == EventKind::Escape && e.t > 0.0) return {e.t, e.kind};
    return {p.t_max(), EventKind::Budget};
}

double symmetry_residual(const Profile& p, double t0, double span) {
    if (span < 0.0 || t0 - span < p.t_min() - 1e-12 || t0 + span > p.t_max() + 1e-12)
        throw std::out_of_range("symmetry_residual: span exceeds the integrated domain");
    double worst = 0.0;
    constexpr int kPoints = 200;
    for (int i = 0; i < kPoints; ++i) {
        const double tau = span * i / (kPoints - 1);
        worst = std::max(worst, std::fabs(p.u(t0 + tau) - p.u(t0 - tau)));
    }
    return worst;
}

Periodicity periodicity_probe(const Profile& p, double tol) {
    std::vector<double> times;
    for (const Event& e : p.events())
        if (e.kind == EventKind::SlopeZero && e.t >= -1e-9) times.push_back(std::max(0.0, e.t));
    if (times.empty() || times.front() > 1e-9) times.insert(times.begin(), 0.0);
    if (times.size() < 2) return {};
    const double period = 2.0 * (times[1] - times[0]);
    if (period > p.t_max()) return {};
    if (std::fabs(p.u(period) - p.u0()) > tol || std::fabs(p.up(period)) > tol) return {};
    return {true, period};
}

}  // namespace obata::profile
