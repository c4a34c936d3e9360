#pragma once

// Antiderivatives h of f, the pair taxonomy of (f, mu) and the coercivity
// trichotomy of f.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "obata/expr.hpp"
#include "obata/profile.hpp"

namespace obata::classify {

/// h(s) = integral of f from base to s, so h(base) = 0 exactly.
///
/// Integrals over fixed-width panels anchored at base are memoized; copies
/// share the cache, which is guarded by a mutex.
class HFunc {
public:
    HFunc(expr::Expr f, double base, double tol = 1e-13);

    double operator()(double s) const;

    /// alpha^2 - 2 h(s): the squared gradient norm along a solution whose
    /// gradient has length alpha on the level set {w = base}.
    double affine(double s, double alpha) const { return alpha * alpha - 2.0 * (*this)(s); }

    const expr::Expr& f() const { return f_; }
    double base() const { return base_; }
    double tol() const { return tol_; }

private:
    double panel(long long k) const;

    struct Cache {
        std::mutex mutex;
        std::map<long long, double> panels;
    };

    expr::Expr f_;
    double base_;
    double tol_;
    double width_ = 0.5;
    std::shared_ptr<Cache> cache_;
};

HFunc antiderivative(const expr::Expr& f, double mu, double tol = 1e-13);

struct Tolerances {
    double f = 1e-8;   // |f| below this counts as a zero of f
    double h = 1e-10;  // |h| below this counts as a zero of h
};

struct NuResult {
    std::optional<double> nu;
    std::optional<double> f_at_nu;
};

/// Nothing can be decided on the window (h vanishes identically there).
class Undetermined : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// f(mu) = 0: no nonconstant solution has a critical point at level mu.
class DegeneratePair : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Nearest zero of h strictly on the side given by direction (+1 or -1),
/// within distance window of the base point. Touching zeros (local maxima of
/// h at height zero) count.
NuResult find_nu(const HFunc& h, int direction, double window, const Tolerances& tol = {});

enum class PairKind { NoncompactI, NoncompactII, Compact, Undetermined };

struct PairEvidence {
    std::optional<double> ode_event;        // first positive slope-zero time of the profile
    std::optional<double> quadrature_T;     // integral of (-2h)^(-1/2) from mu to nu
    std::optional<double> nu_root_residual; // |h(nu)|
    std::optional<double> f_nu_magnitude;   // |f(nu)|
    std::string ode_terminal;               // budget / escape / slope_zero
    std::string note;
};

struct PairClass {
    PairKind kind = PairKind::Undetermined;
    double mu = 0.0;
    std::optional<double> nu;
    std::optional<double> T;
    std::optional<double> coincidence_residual;  // |f(mu) + f(nu)|
    PairEvidence evidence;
};

struct PairOptions {
    double window = 20.0;
    double t_budget = 50.0;
    Tolerances tol;
    profile::Options ode;
    // Half-width of the uncertainty in mu (e.g. from a truncated decimal).
    // A touching zero of h is accepted at height tol.h + |f(mu)| * mu_uncertainty.
    double mu_uncertainty = 0.0;
};

PairClass classify_pair(const expr::Expr& f, double mu, const PairOptions& opts = {});

/// T from the time formula: integral of (-2h)^(-1/2) between mu and nu.
/// Requires simple zeros of h at both ends.
double time_to_nu(const HFunc& h, double nu);

enum class CoercivityLabel { NotCoercive, Coercive, DegeneratelyCoercive, NondegeneratelyCoercive, Undetermined };

struct CoercivityWitness {
    double offset;
    double a;
    double b;
    std::optional<double> f_a;  // empty when the interval runs off the search range on that side
    std::optional<double> f_b;
    std::string reason;
};

struct CoercivityClass {
    CoercivityLabel label = CoercivityLabel::Undetermined;
    std::vector<CoercivityWitness> witnesses;
    int offsets_scanned = 0;
};

struct CoercivityOptions {
    double lo = -10.0;
    double hi = 10.0;
    int offsets = 64;
    int samples = 4001;  // grid resolution of the window
    Tolerances tol;
};

CoercivityClass classify_coercivity(const expr::Expr& f, const CoercivityOptions& opts = {});

std::string to_string(PairKind k);
std::string to_string(CoercivityLabel l);

}  // namespace obata::classify
