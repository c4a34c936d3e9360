#include "obata/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "obata/numeric.hpp"

namespace obata::classify {

// ------------------------------------------------------------------ HFunc

HFunc::HFunc(expr::Expr f, double base, double tol)
    : f_(std::move(f)), base_(base), tol_(tol), cache_(std::make_shared<Cache>()) {}

double HFunc::panel(long long k) const {
    {
        std::lock_guard lock(cache_->mutex);
        auto it = cache_->panels.find(k);
        if (it != cache_->panels.end()) return it->second;
    }
    const double a = base_ + static_cast<double>(k) * width_;
    const double v = numeric::integrate([this](double s) { return f_(s); }, a, a + width_, tol_);
    std::lock_guard lock(cache_->mutex);
    cache_->panels.emplace(k, v);
    return v;
}

double HFunc::operator()(double s) const {
    if (s == base_) return 0.0;
    const auto k = static_cast<long long>(std::floor((s - base_) / width_));
    double sum = 0.0;
    if (k > 0)
        for (long long j = 0; j < k; ++j) sum += panel(j);
    else
        for (long long j = k; j < 0; ++j) sum -= panel(j);
    const double left = base_ + static_cast<double>(k) * width_;
    return sum + numeric::integrate([this](double x) { return f_(x); }, left, s, tol_);
}

HFunc antiderivative(const expr::Expr& f, double mu, double tol) { return HFunc(f, mu, tol); }

// -------------------------------------------------------------------- nu

namespace {

// Zero of f (a critical point of h) inside [lo, hi], if f changes sign there.
std::optional<double> critical_point(const expr::Expr& f, double lo, double hi) {
    if (lo > hi) std::swap(lo, hi);
    const double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0)) return std::nullopt;
    return numeric::bisect([&](double s) { return f(s); }, lo, hi, 1e-14);
}

NuResult find_nu_impl(const HFunc& h, int direction, double window, const Tolerances& tol, double touch_tol) {
    if (direction != 1 && direction != -1) throw std::invalid_argument("find_nu: direction must be +1 or -1");
    const expr::Expr& f = h.f();
    const double mu = h.base();
    constexpr int kCells = 4000;
    const double step = window / kCells;
    auto at = [&](int i) { return mu + direction * step * i; };

    std::vector<double> hv(kCells + 1);
    bool all_flat = true;
    for (int i = 0; i <= kCells; ++i) {
        hv[i] = h(at(i));
        if (std::fabs(hv[i]) > tol.h) all_flat = false;
    }
    if (all_flat) throw Undetermined("h vanishes identically on the search window");

    auto touching = [&](double lo, double hi) -> std::optional<double> {
        auto c = critical_point(f, lo, hi);
        if (c && std::fabs(h(*c)) <= touch_tol) return c;
        return std::nullopt;
    };

    for (int i = 1; i <= kCells; ++i) {
        // Sign change in cell (i-1, i]; cell 0 starts at h(mu) = 0.
        if (hv[i] >= 0.0 && (i == 1 || hv[i - 1] < 0.0)) {
            if (i == 1 && hv[1] > 0.0) continue;  // wrong side of mu
            const double root = hv[i] == 0.0
                                    ? at(i)
                                    : numeric::bisect([&](double s) { return h(s); }, at(i - 1), at(i), 1e-12);
            // A root this close to a critical point of h at height ~0 is a
            // double zero seen through quadrature noise.
            if (auto c = touching(root - 2 * step, root + 2 * step)) return {*c, f(*c)};
            return {root, f(root)};
        }
        // Local maximum of h below zero but within tolerance: touching zero.
        if (i + 1 <= kCells && hv[i] < 0.0 && hv[i] >= hv[i - 1] && hv[i] >= hv[i + 1]) {
            if (auto c = touching(at(i - 1), at(i + 1))) return {*c, f(*c)};
        }
    }
    return {};
}

}  // namespace

NuResult find_nu(const HFunc& h, int direction, double window, const Tolerances& tol) {
    return find_nu_impl(h, direction, window, tol, tol.h);
}

// ---------------------------------------------------------------- T(nu)

double time_to_nu(const HFunc& h, double nu) {
    const double mu = h.base();
    const HFunc h_nu(h.f(), nu, h.tol());
    const double half = 0.5 * (nu - mu);
    // s = mu + half (1 - cos theta) removes both inverse-square-root endpoint
    // singularities when the zeros of h are simple.
    auto integrand = [&](double theta) {
        const double s = mu + half * (1.0 - std::cos(theta));
        const double hs = theta <= 0.5 * std::numbers::pi ? h(s) : h_nu(s);
        return std::fabs(half) * std::sin(theta) / std::sqrt(-2.0 * hs);
    };
    return numeric::integrate(integrand, 0.0, std::numbers::pi, 1e-12);
}

// ------------------------------------------------------------- pair class

std::string to_string(PairKind k) {
    switch (k) {
        case PairKind::NoncompactI: return "NoncompactI";
        case PairKind::NoncompactII: return "NoncompactII";
        case PairKind::Compact: return "Compact";
        case PairKind::Undetermined: return "Undetermined";
    }
    return "?";
}

PairClass classify_pair(const expr::Expr& f, double mu, const PairOptions& opts) {
    const double f_mu = f(mu);
    if (std::fabs(f_mu) <= opts.tol.f)
        throw DegeneratePair("f(mu) = 0: no nonconstant solution has a critical point at this level");

    PairClass out;
    out.mu = mu;
    const HFunc h(f, mu);
    const int direction = f_mu < 0.0 ? 1 : -1;
    const double touch_tol = opts.tol.h + std::fabs(f_mu) * opts.mu_uncertainty;
    const NuResult nu = find_nu_impl(h, direction, opts.window, opts.tol, touch_tol);

    const profile::Profile p = profile::solve_profile(f, mu, 0.0, opts.t_budget, opts.ode);
    const profile::CriticalTime crit = profile::detect_T(p);
    out.evidence.ode_terminal = profile::to_string(crit.kind);
    if (crit.kind == profile::EventKind::SlopeZero) out.evidence.ode_event = crit.t;

    if (!nu.nu) {
        if (out.evidence.ode_event) {
            out.kind = PairKind::Undetermined;
            out.evidence.note = "profile returns to a critical point but h has no zero on the window";
            return out;
        }
        out.kind = PairKind::NoncompactI;
        out.evidence.note = "no zero of h within the window and no critical point within the time budget; "
                            "divergence of the time integral confirmed on the window only";
        return out;
    }

    out.nu = nu.nu;
    out.evidence.nu_root_residual = std::fabs(h(*nu.nu));
    out.evidence.f_nu_magnitude = std::fabs(*nu.f_at_nu);
    out.coincidence_residual = std::fabs(f_mu + *nu.f_at_nu);

    if (std::fabs(*nu.f_at_nu) <= opts.tol.f) {
        // Zero of h of order >= 2: the time integral diverges at nu.
        out.kind = PairKind::NoncompactII;
        out.coincidence_residual.reset();
        if (out.evidence.ode_event) {
            // nu is an unstable equilibrium: a rounded mu lets the numerical
            // profile creep up to nu and turn back. That is consistent; turning
            // anywhere else is not.
            const double u_turn = p.u(*out.evidence.ode_event);
            if (std::fabs(u_turn - *nu.nu) <= 1e-3) {
                out.evidence.note = "profile stalls at nu and turns back at t=" +
                                    std::to_string(*out.evidence.ode_event) + " (unstable equilibrium)";
            } else {
                out.kind = PairKind::Undetermined;
                out.evidence.note = "double zero of h at nu but the profile turns before reaching it";
            }
        }
        return out;
    }

    const double t_quad = time_to_nu(h, *nu.nu);
    out.evidence.quadrature_T = t_quad;
    if (!out.evidence.ode_event) {
        out.kind = PairKind::Undetermined;
        out.evidence.note = "simple zero of h at nu but no critical point of the profile within the budget";
        return out;
    }
    if (std::fabs(t_quad - *out.evidence.ode_event) > 1e-4) {
        out.kind = PairKind::Undetermined;
        out.evidence.note = "quadrature and ODE values of T disagree";
        return out;
    }
    out.kind = PairKind::Compact;
    out.T = t_quad;
    return out;
}

// ------------------------------------------------------------- coercivity

std::string to_string(CoercivityLabel l) {
    switch (l) {
        case CoercivityLabel::NotCoercive: return "NotCoercive";
        case CoercivityLabel::Coercive: return "Coercive";
        case CoercivityLabel::DegeneratelyCoercive: return "DegeneratelyCoercive";
        case CoercivityLabel::NondegeneratelyCoercive: return "NondegeneratelyCoercive";
        case CoercivityLabel::Undetermined: return "Undetermined";
    }
    return "?";
}

CoercivityClass classify_coercivity(const expr::Expr& f, const CoercivityOptions& opts) {
    if (!(opts.hi > opts.lo) || opts.offsets < 1 || opts.samples < 3)
        throw std::invalid_argument("classify_coercivity: bad window or resolution");

    // Negative runs that start inside the window are followed into an
    // extension of one window width on each side before being declared
    // unbounded.
    const double width = opts.hi - opts.lo;
    const double ext_lo = opts.lo - width;
    const double step = width / (opts.samples - 1);
    const int total = 3 * (opts.samples - 1) + 1;
    const HFunc h0(f, opts.lo);
    std::vector<double> s(total), hv(total);
    for (int i = 0; i < total; ++i) {
        s[i] = ext_lo + step * i;
        hv[i] = h0(s[i]);
    }
    const int win_begin = opts.samples - 1;
    const int win_end = 2 * (opts.samples - 1);
    const auto [mn, mx] = std::minmax_element(hv.begin() + win_begin, hv.begin() + win_end + 1);

    CoercivityClass out;
    bool all_nondeg = true, all_degen = true, all_coercive = true, any_violation = false;
    auto witness = [&](CoercivityWitness w) {
        if (out.witnesses.size() < 8) out.witnesses.push_back(std::move(w));
    };
    const double tol_f = opts.tol.f;

    for (int j = 0; j < opts.offsets; ++j) {
        const double c = *mn + (j + 0.5) / opts.offsets * (*mx - *mn);
        if (!(c > *mn)) continue;
        ++out.offsets_scanned;
        auto g = [&](double x) { return h0(x) - c; };

        int i = 0;
        while (i < total) {
            if (hv[i] - c >= 0.0) {
                ++i;
                continue;
            }
            int k = i;
            while (k + 1 < total && hv[k + 1] - c < 0.0) ++k;
            const int run_begin = i, run_end = k;
            i = k + 1;
            if (run_end < win_begin || run_begin > win_end) continue;

            CoercivityWitness w{c, s[run_begin], s[run_end], std::nullopt, std::nullopt, ""};
            if (run_begin > 0) {
                w.a = numeric::bisect(g, s[run_begin - 1], s[run_begin], 1e-12);
                w.f_a = f(w.a);
            }
            if (run_end + 1 < total) {
                w.b = numeric::bisect(g, s[run_end], s[run_end + 1], 1e-12);
                w.f_b = f(w.b);
            }
            const bool za = w.f_a && std::fabs(*w.f_a) <= tol_f;
            const bool zb = w.f_b && std::fabs(*w.f_b) <= tol_f;

            if (w.f_a && w.f_b) {
                if (za && zb) {
                    w.reason = "f vanishes at both ends of a negative interval";
                    all_coercive = all_degen = all_nondeg = false;
                    any_violation = true;
                    witness(w);
                } else if (!za && !zb) {
                    if (all_degen) {
                        w.reason = "f nonzero at both ends (not degenerate)";
                        witness(w);
                    }
                    all_degen = false;
                } else {
                    if (all_nondeg) {
                        w.reason = "f vanishes at an endpoint (not nondegenerate)";
                        witness(w);
                    }
                    all_nondeg = false;
                }
            } else if (w.f_a || w.f_b) {
                // Ray: only its finite endpoint is constrained.
                if (all_nondeg) {
                    w.reason = "negative interval not bounded within the search range";
                    witness(w);
                }
                all_nondeg = false;
                if (za || zb) {
                    w.reason = "f vanishes at the extreme zero of h";
                    all_coercive = all_degen = false;
                    any_violation = true;
                    witness(w);
                }
            } else {
                w.reason = "h - c has no zero on the search range";
                all_nondeg = all_degen = all_coercive = false;
                witness(w);
            }
        }
    }

    if (out.offsets_scanned == 0) {
        out.label = CoercivityLabel::Undetermined;
    } else if (all_nondeg) {
        out.label = CoercivityLabel::NondegeneratelyCoercive;
    } else if (all_coercive && all_degen) {
        out.label = CoercivityLabel::DegeneratelyCoercive;
    } else if (all_coercive) {
        out.label = CoercivityLabel::Coercive;
    } else if (any_violation) {
        out.label = CoercivityLabel::NotCoercive;
    } else {
        out.label = CoercivityLabel::Undetermined;
    }
    return out;
}

}  // namespace obata::classify
