#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <thread>

#include "obata/classify.hpp"
#include "obata/profile.hpp"

using namespace obata;
using classify::CoercivityLabel;
using classify::PairKind;

namespace {

const double kSqrt2 = std::sqrt(2.0);
const double kTcos = 3.70814935460274381187;

expr::Expr P(const char* t) { return expr::parse(t); }

}  // namespace

TEST_CASE("antiderivative examples") {
    const auto h = classify::antiderivative(P("s"), 1.0);
    CHECK(std::abs(h(-1.0)) <= 1e-10);
    CHECK(h(3.0) == doctest::Approx(4.0).epsilon(1e-13));
    const auto h1 = classify::antiderivative(P("1"), 1.0);
    for (double s : {-4.0, 0.0, 2.5}) CHECK(h1(s) == doctest::Approx(s - 1).epsilon(1e-13).scale(1.0));
    const auto hc = classify::antiderivative(P("cos(s)"), 0.0);
    CHECK(std::abs(hc(M_PI)) <= 1e-10);
    CHECK(hc(1.0) == doctest::Approx(std::sin(1.0)).epsilon(1e-13));
}

TEST_CASE("h' = f on random grids") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> pt(-5.0, 5.0);
    for (auto f : {"s", "cos(s)", "s^3-s", "1+0.5*cos(s)", "exp(-s^2)"}) {
        const auto fe = P(f);
        const auto h = classify::antiderivative(fe, 0.3);
        for (int i = 0; i < 40; ++i) {
            const double s = pt(rng), d = 1e-3;
            const double dh = (8 * (h(s + d) - h(s - d)) - (h(s + 2 * d) - h(s - 2 * d))) / (12 * d);
            CHECK(std::abs(dh - fe(s)) <= 1e-8);
        }
    }
}

TEST_CASE("antiderivative is safe under concurrent queries") {
    const auto h = classify::antiderivative(P("cos(s)"), 0.0);
    std::vector<double> out(8);
    std::vector<std::thread> ts;
    for (int k = 0; k < 8; ++k)
        ts.emplace_back([&, k] { out[k] = h(7.0 - 0.5 * k) - std::sin(7.0 - 0.5 * k); });
    for (auto& t : ts) t.join();
    for (double e : out) CHECK(std::abs(e) <= 1e-12);
}

TEST_CASE("find_nu examples") {
    auto nu = classify::find_nu(classify::antiderivative(P("s"), 1.0), -1, 20.0);
    REQUIRE(nu.nu);
    CHECK(*nu.nu == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(*nu.f_at_nu == doctest::Approx(-1.0).epsilon(1e-12));

    nu = classify::find_nu(classify::antiderivative(P("s^3-s"), -kSqrt2), 1, 20.0);
    REQUIRE(nu.nu);
    CHECK(std::abs(*nu.nu) <= 1e-6);
    CHECK(std::abs(*nu.f_at_nu) <= 1e-6);

    // f(0) = 1 > 0: u decreases, so the search runs to the left.
    nu = classify::find_nu(classify::antiderivative(P("cos(s)"), 0.0), -1, 20.0);
    REQUIRE(nu.nu);
    CHECK(*nu.nu == doctest::Approx(-M_PI).epsilon(1e-12));

    CHECK_FALSE(classify::find_nu(classify::antiderivative(P("1"), 1.0), -1, 20.0).nu);
    CHECK_THROWS_AS(classify::find_nu(classify::antiderivative(P("0"), 1.0), -1, 20.0), classify::Undetermined);
}

TEST_CASE("classify_pair on the five example pairs") {
    auto p = classify::classify_pair(P("s^2"), 1.0);
    CHECK(p.kind == PairKind::NoncompactI);
    p = classify::classify_pair(P("1"), 1.0);
    CHECK(p.kind == PairKind::NoncompactI);
    p = classify::classify_pair(P("s^3-s"), -kSqrt2);
    CHECK(p.kind == PairKind::NoncompactII);
    REQUIRE(p.nu);
    CHECK(std::abs(*p.nu) <= 1e-6);

    p = classify::classify_pair(P("s"), 1.0);
    CHECK(p.kind == PairKind::Compact);
    REQUIRE(p.nu);
    CHECK(*p.nu == doctest::Approx(-1.0).epsilon(1e-12));
    REQUIRE(p.T);
    CHECK(std::abs(*p.T - M_PI) <= 1e-9);
    CHECK(*p.coincidence_residual <= 1e-12);

    p = classify::classify_pair(P("cos(s)"), 0.0);
    CHECK(p.kind == PairKind::Compact);
    REQUIRE(p.T);
    CHECK(std::abs(*p.T - kTcos) <= 1e-8);
    CHECK(*p.coincidence_residual <= 1e-12);
}

TEST_CASE("truncated mu is covered by the stated uncertainty") {
    classify::PairOptions o;
    o.mu_uncertainty = 5e-10;
    CHECK(classify::classify_pair(P("s^3 - s"), -1.414213562, o).kind == PairKind::NoncompactII);
}

TEST_CASE("degenerate pair is refused") {
    CHECK_THROWS_AS(classify::classify_pair(P("s"), 0.0), classify::DegeneratePair);
    CHECK_THROWS_AS(classify::classify_pair(P("s^3-s"), 1.0), classify::DegeneratePair);
}

TEST_CASE("f = s is isochronous") {
    for (int i = 0; i < 13; ++i) {
        const double mu = -3.0 + 0.5 * i;
        if (mu == 0.0) continue;
        CAPTURE(mu);
        const auto p = classify::classify_pair(P("s"), mu);
        CHECK(p.kind == PairKind::Compact);
        REQUIRE(p.T);
        CHECK(std::abs(*p.T - M_PI) <= 1e-8);
        const auto prof = profile::solve_profile(P("s"), mu, 0.0, 10.0);
        CHECK(std::abs(profile::detect_T(prof).t - *p.T) <= 1e-6);
    }
}

TEST_CASE("compact pairs: quadrature T agrees with the ODE event") {
    struct Case {
        const char* f;
        double mu;
    };
    for (auto c : {Case{"s", 2.0}, Case{"cos(s)", 0.0}, Case{"cos(s)", 1.0}, Case{"s^3", 1.0}, Case{"s+0.3*s^3", -0.7},
                   Case{"sinh(s)", 0.5}}) {
        CAPTURE(std::string(c.f));
        const auto p = classify::classify_pair(P(c.f), c.mu);
        REQUIRE(p.kind == PairKind::Compact);
        REQUIRE(p.evidence.ode_event);
        REQUIRE(p.evidence.quadrature_T);
        CHECK(std::abs(*p.evidence.ode_event - *p.evidence.quadrature_T) <= 1e-6);
    }
}

TEST_CASE("compact type without coincidence is reported") {
    // h has a simple zero in (-2, 0), but f is not odd about the well, so f(nu) != -f(mu).
    const auto p = classify::classify_pair(P("s + 0.5*s^2"), 0.5);
    REQUIRE(p.kind == PairKind::Compact);
    REQUIRE(p.coincidence_residual);
    CHECK(*p.coincidence_residual > 1e-3);
}

TEST_CASE("coercivity of the example functions") {
    CHECK(classify::classify_coercivity(P("s")).label == CoercivityLabel::NondegeneratelyCoercive);
    CHECK(classify::classify_coercivity(P("s^3")).label == CoercivityLabel::NondegeneratelyCoercive);
    CHECK(classify::classify_coercivity(P("s^2")).label == CoercivityLabel::DegeneratelyCoercive);
    CHECK(classify::classify_coercivity(P("-s^2")).label == CoercivityLabel::DegeneratelyCoercive);
    CHECK(classify::classify_coercivity(P("s^4")).label == CoercivityLabel::DegeneratelyCoercive);
    CHECK(classify::classify_coercivity(P("1")).label == CoercivityLabel::DegeneratelyCoercive);
    CHECK(classify::classify_coercivity(P("1+cos(s)/2")).label == CoercivityLabel::DegeneratelyCoercive);
    CHECK(classify::classify_coercivity(P("cos(s)")).label == CoercivityLabel::NondegeneratelyCoercive);
}

TEST_CASE("coercivity witnesses and undetermined cases") {
    const auto c = classify::classify_coercivity(P("s"));
    CHECK(c.offsets_scanned == 64);
    // exp(s) has a negative antiderivative on a ray that is never bounded.
    const auto e = classify::classify_coercivity(P("exp(s)"));
    CHECK(e.label != CoercivityLabel::NondegeneratelyCoercive);
    CHECK_FALSE(e.witnesses.empty());
}
