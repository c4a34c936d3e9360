#pragma once

// The profile ODE u'' + f(u) = 0: adaptive integration with dense output,
// critical-point (slope zero) events and the energy certificate
// u'^2 + 2h(u) = 0.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "obata/expr.hpp"
#include "obata/numeric.hpp"

namespace obata::profile {

struct Options {
    double abs_tol = 1e-10;
    double rel_tol = 1e-10;
    double event_tol = 1e-12;  // bisection width for slope-zero events
    double u_escape = 1e6;
    double max_step = 0.05;    // keeps the Hermite dense output well inside its accuracy range
    double t_back = 0.0;       // also integrate backward to -t_back
};

enum class EventKind { SlopeZero, Escape, Budget };

struct Event {
    double t;
    EventKind kind;
};

struct Node {
    double t;
    double u;
    double up;
};

/// Integration gave up (step size underflow); carries the last accepted state.
class ProfileError : public std::runtime_error {
public:
    ProfileError(const std::string& what, Node last) : std::runtime_error(what), last_(last) {}
    const Node& last() const noexcept { return last_; }

private:
    Node last_;
};

/// |f(u0)| vanishes with zero initial slope: the solution is constant.
class ConstantSolution : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class Profile {
public:
    /// Rebuild from stored nodes (as written to a model file). Events and the
    /// energy certificate are recomputed.
    Profile(expr::Expr f, double u0, double v0, std::vector<Node> nodes, double event_tol = 1e-12);

    const expr::Expr& f() const { return f_; }
    double u0() const { return u0_; }
    double v0() const { return v0_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<Event>& events() const { return events_; }
    /// max |u'^2 + 2h(u)| / max(1, u'^2) over the nodes.
    double energy_max_drift() const { return energy_max_drift_; }

    double t_min() const { return nodes_.front().t; }
    double t_max() const { return nodes_.back().t; }

    // Dense output; valid on [t_min, t_max].
    double u(double t) const { return u_.value(t); }
    double up(double t) const { return up_.value(t); }
    double upp(double t) const { return up_.derivative(t); }

    void add_terminal_event(Event e) { events_.push_back(e); }

private:
    expr::Expr f_;
    expr::Expr df_;
    double u0_;
    double v0_;
    std::vector<Node> nodes_;
    std::vector<Event> events_;
    double energy_max_drift_ = 0.0;
    numeric::QuinticHermite u_;
    numeric::QuinticHermite up_;
};

Profile solve_profile(const expr::Expr& f, double u0, double v0, double t_max, const Options& opts = {});

struct CriticalTime {
    double t;
    EventKind kind;
};

/// First strictly positive slope-zero event; Budget/Escape when none occurs.
CriticalTime detect_T(const Profile& p);

/// max |u(t0 + tau) - u(t0 - tau)| over a 200-point grid of tau in [0, span].
double symmetry_residual(const Profile& p, double t0, double span);

struct Periodicity {
    bool periodic = false;
    std::optional<double> period;
};

Periodicity periodicity_probe(const Profile& p, double tol = 1e-6);

std::string to_string(EventKind k);

}  // namespace obata::profile
