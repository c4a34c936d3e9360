#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "obata/classify.hpp"
#include "obata/profile.hpp"

using namespace obata;
using profile::EventKind;

namespace {

const double kSqrt2 = std::sqrt(2.0);
// T for f = cos s, mu = 0: integral of (2 sin x)^(-1/2) over [0, pi], 30 digits.
const double kTcos = 3.70814935460274381187;

profile::Profile run(const char* f, double u0, double v0 = 0.0, double t_max = 50.0, profile::Options o = {}) {
    return profile::solve_profile(expr::parse(f), u0, v0, t_max, o);
}

std::vector<double> slope_zero_times(const profile::Profile& p) {
    std::vector<double> out;
    for (const auto& e : p.events())
        if (e.kind == EventKind::SlopeZero && e.t > 0) out.push_back(e.t);
    return out;
}

}  // namespace

TEST_CASE("f = s, mu = 1 gives cos t") {
    const auto p = run("s", 1.0, 0.0, 20.0);
    CHECK(std::abs(p.u(M_PI / 2)) <= 1e-9);
    double err = 0;
    for (int i = 0; i <= 1000; ++i) {
        const double t = 20.0 * i / 1000;
        err = std::max(err, std::abs(p.u(t) - std::cos(t)));
    }
    CHECK(err <= 1e-8);
    const auto T = profile::detect_T(p);
    CHECK(T.kind == EventKind::SlopeZero);
    CHECK(T.t == doctest::Approx(M_PI).epsilon(1e-9));
}

TEST_CASE("f = 1 gives the parabola and never turns") {
    const auto p = run("1", 1.0);
    for (double t : {0.5, 3.0, 10.0, 49.0}) CHECK(std::abs(p.u(t) - (1 - t * t / 2)) <= 1e-10 * std::max(1.0, t * t));
    CHECK(profile::detect_T(p).kind != EventKind::SlopeZero);
    CHECK_FALSE(profile::periodicity_probe(p).periodic);
}

TEST_CASE("f = -s from slope 1 is sinh with no critical point") {
    const auto p = run("-s", 0.0, 1.0, 10.0);
    for (double t : slope_zero_times(p)) CHECK(t > 10.0);
    CHECK(slope_zero_times(p).empty());
    CHECK(p.u(2.0) == doctest::Approx(std::sinh(2.0)).epsilon(1e-9));
}

TEST_CASE("f = cos s, mu = 0: T matches the quadrature value") {
    const auto p = run("cos(s)", 0.0);
    const auto T = profile::detect_T(p);
    REQUIRE(T.kind == EventKind::SlopeZero);
    CHECK(std::abs(T.t - kTcos) <= 1e-7);
    const auto per = profile::periodicity_probe(p);
    CHECK(per.periodic);
    REQUIRE(per.period);
    CHECK(std::abs(*per.period - 2 * kTcos) <= 1e-7);
}

TEST_CASE("f = s events at k pi and period 2 pi") {
    const auto p = run("s", 1.0, 0.0, 17.0);
    const auto ts = slope_zero_times(p);
    REQUIRE(ts.size() >= 5);
    for (int k = 1; k <= 5; ++k) CHECK(std::abs(ts[k - 1] - k * M_PI) <= 1e-8);
    const auto per = profile::periodicity_probe(p);
    CHECK(per.periodic);
    REQUIRE(per.period);
    CHECK(std::abs(*per.period - 2 * M_PI) <= 1e-8);
}

TEST_CASE("symmetry about the starting critical point") {
    profile::Options o;
    o.t_back = 3.0;
    CHECK(profile::symmetry_residual(run("s", 1.0, 0.0, 3.0, o), 0.0, 1.0) <= 1e-8);
    CHECK(profile::symmetry_residual(run("cos(s)", 0.0, 0.0, 3.0, o), 0.0, 1.0) <= 1e-7);
    CHECK(profile::symmetry_residual(run("s^3-s", -kSqrt2, 0.0, 3.0, o), 0.0, 2.0) <= 1e-7);
    CHECK_THROWS(profile::symmetry_residual(run("s", 1.0, 0.0, 3.0, o), 0.0, 5.0));
}

TEST_CASE("symmetry about a later critical point") {
    const auto p = run("cos(s)", 0.0, 0.0, 12.0);
    const auto ts = slope_zero_times(p);
    REQUIRE(!ts.empty());
    CHECK(profile::symmetry_residual(p, ts[0], ts[0]) <= 1e-7);
}

TEST_CASE("energy certificate on the example profiles") {
    struct Run {
        const char* f;
        double mu;
    };
    for (auto r : {Run{"s^2", 1.0}, Run{"1", 1.0}, Run{"s^3-s", -kSqrt2}, Run{"s", 1.0}, Run{"cos(s)", 0.0},
                   Run{"1+0.5*cos(s)", 0.0}}) {
        CAPTURE(std::string(r.f));
        const auto p = run(r.f, r.mu);
        CHECK(p.energy_max_drift() <= 1e-8);
        // Independent check against the classify quadrature on the bounded part,
        // scaled like the certificate by max(1, u'^2).
        const auto h = classify::antiderivative(expr::parse(r.f), r.mu);
        double drift = 0;
        for (const auto& nd : p.nodes())
            if (std::abs(nd.u) <= 10.0) drift = std::max(drift, std::abs(nd.up * nd.up + 2 * h(nd.u)) / std::max(1.0, nd.up * nd.up));
        CHECK(drift <= 1e-8);
    }
}

TEST_CASE("evenness for v0 = 0 over half the integrated range") {
    profile::Options o;
    o.t_back = 8.0;
    for (auto f : {"s", "cos(s)", "s^3-s", "1", "1+0.5*cos(s)"}) {
        CAPTURE(f);
        const double mu = std::string(f) == "s^3-s" ? -kSqrt2 : (std::string(f) == "cos(s)" ? 0.0 : 1.0);
        CHECK(profile::symmetry_residual(run(f, mu, 0.0, 8.0, o), 0.0, 4.0) <= 1e-7);
    }
}

TEST_CASE("tighter tolerance shrinks the error") {
    auto max_err = [](double tol) {
        profile::Options o;
        o.abs_tol = o.rel_tol = tol;
        o.max_step = 1.0;
        const auto p = run("s", 1.0, 0.0, 10.0, o);
        double e = 0;
        for (const auto& nd : p.nodes()) e = std::max(e, std::abs(nd.u - std::cos(nd.t)));
        return e;
    };
    const double coarse = max_err(1e-6), fine = max_err(1e-8);
    CHECK(coarse >= 4 * fine);
}

TEST_CASE("degenerate and failing starts") {
    CHECK_THROWS_AS(run("s", 0.0), profile::ConstantSolution);
    CHECK_THROWS_AS(run("s^3-s", 1.0), profile::ConstantSolution);
    CHECK_THROWS_AS(run("sqrt(s)", 0.5, 0.0, 50.0), expr::DomainError);
    // Blow-up in finite time: s^2 from mu = 1 escapes.
    const auto p = run("-s^2", -1.0, 0.0, 50.0);
    CHECK(profile::detect_T(p).kind == EventKind::Escape);
}

TEST_CASE("rebuilding from nodes reproduces the dense output") {
    const auto p = run("cos(s)", 0.0, 0.0, 10.0);
    const profile::Profile q(p.f(), p.u0(), p.v0(), p.nodes());
    for (double t : {0.3, 2.2, 7.9}) {
        CHECK(q.u(t) == p.u(t));
        CHECK(q.up(t) == p.up(t));
    }
    CHECK(profile::detect_T(q).t == doctest::Approx(profile::detect_T(p).t).epsilon(1e-12));
}
