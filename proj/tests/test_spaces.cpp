#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "obata/report.hpp"
#include "obata/spaces.hpp"

using namespace obata;
using namespace obata::spaces;
using geometry::Circle;
using geometry::FlatSpace;
using geometry::SolutionField;
using geometry::Vec;

namespace {

// e^{+-2 pi rho}, 18 digits.
struct Eig {
    double rho, up, down;
};
const Eig kEig[] = {{0.5, 23.1406926327792690, 0.0432139182637722498},
                    {1.0, 535.491655524764737, 0.00186744273170798881},
                    {2.0, 286751.313136653300, 3.48734235620899550e-6}};

Vec V(std::initializer_list<double> xs) {
    Vec v(static_cast<int>(xs.size()));
    int i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

double sup_error_interior(const RecoveredF& r, const expr::Expr& f, double frac) {
    const double lo = r.s_min(), hi = r.s_max(), pad = 0.5 * (1 - frac) * (hi - lo);
    double e = 0;
    for (const auto& b : r.bins)
        if (b.s >= lo + pad && b.s <= hi - pad) e = std::max(e, std::abs(b.z - f(b.s)));
    for (int i = 0; i <= 400; ++i) {
        const double s = lo + pad + (hi - lo - 2 * pad) * i / 400.0;
        e = std::max(e, std::abs(r(s) - f(s)));
    }
    return e;
}

}  // namespace

TEST_CASE("build_model examples") {
    const auto s = build_model(expr::parse("s"), 1.0, 2);
    CHECK(s.topology == Topology::SphereLike);
    REQUIRE(s.pair.T);
    CHECK(std::abs(*s.pair.T - M_PI) <= 1e-8);
    CHECK(s.closure.pass);
    CHECK(std::abs(s.closure.phi_0) <= 1e-6);
    CHECK(std::abs(s.closure.dphi_0 - 1) <= 1e-6);
    CHECK(std::abs(*s.closure.phi_T) <= 1e-6);
    CHECK(std::abs(*s.closure.dphi_T + 1) <= 1e-6);

    const auto e = build_model(expr::parse("1"), 1.0, 3);
    CHECK(e.topology == Topology::DiskLike);
    for (double t : {0.5, 2.0, 4.0}) CHECK(std::abs(e.profile->u(t) - (1 - t * t / 2)) <= 1e-10);
    CHECK(std::abs(model_curvature(e, V({1.0, 1.0, 0.3}), V({1, 0, 0}), V({0, 1, 0}))) <= 1e-12);

    const auto c = build_model(expr::parse("s^3-s"), -std::sqrt(2.0), 2);
    CHECK(c.topology == Topology::DiskLike);
    CHECK(c.pair.kind == classify::PairKind::NoncompactII);
}

TEST_CASE("build_model refuses degenerate pairs and flags non-smooth closure") {
    CHECK_THROWS_AS(build_model(expr::parse("s"), 0.0, 2), classify::DegeneratePair);
    CHECK_THROWS(build_model(expr::parse("s"), 1.0, 1));
    const auto m = build_model(expr::parse("s + 0.5*s^2"), 0.5, 2);
    CHECK(m.topology == Topology::NonSmoothClosure);
    CHECK_FALSE(m.closure.pass);
}

TEST_CASE("f = s models coincide for different mu") {
    for (double mu : {0.5, 1.0, 2.0}) {
        const auto m = build_model(expr::parse("s"), mu, 2);
        CHECK(std::abs(*m.pair.T - M_PI) <= 1e-8);
        for (const Vec& x : geometry::sample_grid(*m.chart, 8, 1))
            CHECK(std::abs(geometry::sectional_curvature(*m.chart, x, V({1, 0}), V({0, 1})) - 1.0) <= 1e-4);
    }
}

TEST_CASE("cosh towers and exp warping") {
    const auto h2 = build_cosh_tower(FlatSpace{1}, 1);
    CHECK(h2->dim() == 2);
    const auto hc = build_cosh_tower(Circle{1.0}, 1);
    const auto h3 = build_cosh_tower(FlatSpace{1}, 2);
    CHECK(h3->dim() == 3);
    CHECK(tower_depth(*h3) == 2);
    CHECK((h3->metric_at(V({0, 0, 0})) - geometry::Mat::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-15);
    const auto ef = build_exp_warping(FlatSpace{1});
    const auto ec = build_exp_warping(Circle{0.7});
    CHECK((ef->metric_at(V({0, 0.3})) - geometry::Mat::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-15);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    for (const auto& c : {h2, hc, h3, ef, ec}) {
        for (const Vec& x : geometry::sample_grid(*c, 8, 2)) {
            Vec X(c->dim()), Y(c->dim());
            for (int i = 0; i < c->dim(); ++i) {
                X[i] = nd(rng);
                Y[i] = nd(rng);
            }
            CHECK(std::abs(geometry::sectional_curvature(*c, x, X, Y) + 1.0) <= 1e-4);
        }
    }
}

TEST_CASE("hyperbolic bases") {
    const auto b2 = hyperbolic_basis(build_cosh_tower(FlatSpace{1}, 1), line_hyperbolic_seed());
    CHECK(b2.elements.size() == 3);
    CHECK(b2.rejected.empty());
    CHECK(evaluation_rank(b2, V({0.3, 0.2})).rank == 3);
    for (const auto& e : b2.elements) CHECK(e.residual.max <= 1e-5);

    const auto b3 = hyperbolic_basis(build_cosh_tower(FlatSpace{1}, 2), line_hyperbolic_seed());
    CHECK(b3.elements.size() == 4);
    CHECK(evaluation_rank(b3, V({0.3, 0.3, 0.2})).rank == 4);

    for (int n : {2, 3}) {
        const auto bc = hyperbolic_basis(build_cosh_tower(Circle{1.0}, n - 1), {});
        CHECK(bc.elements.size() == static_cast<std::size_t>(n - 1));
        Vec p0 = Vec::Constant(n, 0.3);
        p0[n - 1] = 0.2;
        const auto r = evaluation_rank(bc, p0);
        CHECK(r.rank == n - 1);
        CHECK(r.rank <= std::min<int>(1 + n, static_cast<int>(bc.elements.size())));
    }
}

TEST_CASE("a wrong seed is rejected, not counted") {
    std::vector<SolutionField> bad{{"sin y", [](const Vec& x) { return std::sin(x[x.size() - 1]); }, {}, {}, {}}};
    const auto b = hyperbolic_basis(build_cosh_tower(FlatSpace{1}, 1), bad);
    CHECK(b.elements.size() == 1);
    CHECK(b.rejected.size() == 1);
}

TEST_CASE("euclidean bases") {
    const auto r2 = euclidean_basis(3, FlatSpace{0});
    CHECK(r2.elements.size() == 3);
    CHECK(evaluation_rank(r2, V({0.3, 0.2})).rank == 3);
    const auto rc = euclidean_basis(2, Circle{1.0});
    CHECK(rc.elements.size() == 2);
    CHECK(evaluation_rank(rc, V({0.3, 0.2})).rank == 2);
    for (const auto& e : r2.elements) CHECK(e.residual.max <= 1e-9);

    SolutionBasis one;
    one.chart = r2.chart;
    one.elements.push_back({{"1", [](const Vec&) { return 1.0; }, {}, {}, {}}, {}});
    CHECK(evaluation_rank(one, V({0.3, 0.2})).rank == 1);
    CHECK(geometry::obata_residual(*r2.chart, one.elements[0].field, expr::parse("0"), geometry::sample_grid(*r2.chart, 32, 0)).max == 0.0);
}

TEST_CASE("circle obstruction") {
    for (const auto& e : kEig) {
        CAPTURE(e.rho);
        const auto m = circle_obstruction(e.rho);
        CHECK(m.fixed_dim == 0);
        CHECK(std::abs(m.lambda_max - e.up) <= 1e-9 * e.up);
        CHECK(std::abs(m.lambda_min - e.down) <= 1e-9 * e.down);
        CHECK(std::abs(m.matrix.determinant() - 1.0) <= 1e-9 * m.matrix.squaredNorm());
    }
    const auto osc = linear_monodromy(-1.0, 2 * M_PI);
    CHECK(osc.fixed_dim == 2);
    CHECK((osc.matrix - geometry::Mat::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("recover f on model spaces") {
    struct Case {
        const char* f;
        double mu;
        int n;
    };
    for (auto c : {Case{"s", 1.0, 2}, Case{"cos(s)", 0.0, 2}, Case{"1", 1.0, 3}, Case{"s^3-s", -std::sqrt(2.0), 2},
                   Case{"s", 1.0, 3}}) {
        CAPTURE(std::string(c.f));
        const auto m = build_model(expr::parse(c.f), c.mu, c.n);
        const auto r = recover_f(*m.chart, m.field(), product_grid(*m.chart, 2000, 3));
        CHECK(r.single_valued_residual <= 1e-3);
        CHECK(sup_error_interior(r, m.f, 0.8) <= 1e-4);
    }
    const auto m = build_model(expr::parse("s"), 1.0, 2);
    const auto r = recover_f(*m.chart, m.field(), product_grid(*m.chart, 2000, 3));
    CHECK(r.s_min() <= -0.9);
    CHECK(r.s_max() >= 0.9);
    for (int i = 0; i <= 100; ++i) {
        const double s = -0.9 + 1.8 * i / 100;
        CHECK(std::abs(r(s) - s) <= 1e-4);
    }
}

TEST_CASE("recover f: flat chart gives zero") {
    const auto c = euclidean_chart(3, FlatSpace{0});
    SolutionField w{"x1", [](const Vec& x) { return x[0]; }, {}, {}, {}};
    const auto r = recover_f(*c, w, product_grid(*c, 2000, 3));
    for (const auto& b : r.bins) CHECK(std::abs(b.z) <= 1e-9);
}

TEST_CASE("recover f: the cube on a line is flagged at 0") {
    const geometry::WarpedChart line(geometry::Warp::constant(), FlatSpace{0});
    SolutionField w{"x^3", [](const Vec& x) { return x[0] * x[0] * x[0]; }, {}, {}, {}};
    try {
        recover_f(line, w, product_grid(line, 4001, 1));
        FAIL("expected the single-valuedness check to fail");
    } catch (const FunctionalDependenceError& e) {
        CHECK(e.spread() > 1e-3);
        CHECK(std::abs(e.worst_level()) <= 1e-3);
    }
    // Away from 0 the relation z = -6 w^(1/3) holds and recovery succeeds.
    geometry::WarpedChart right(geometry::Warp::constant(), FlatSpace{0});
    right.set_r_sampling({0.5, 1.0});
    const auto r = recover_f(right, w, product_grid(right, 50001, 1));
    for (const auto& b : r.bins) CHECK(std::abs(b.z + 6 * std::cbrt(b.s)) <= 1e-5);
}

TEST_CASE("model file round trip") {
    const auto m = build_model(expr::parse("cos(s)"), 0.0, 2);
    const auto j = report::model_to_json(m);
    const auto back = report::model_from_json(report::json::parse(j.dump()));
    CHECK(back.warp_scale == m.warp_scale);
    CHECK(back.topology == m.topology);
    CHECK(report::model_to_json(back).dump() == j.dump());
    for (double t : {0.3, 1.7, 3.2}) CHECK(back.profile->u(t) == m.profile->u(t));
    auto broken = j;
    broken.erase("nodes");
    CHECK_THROWS_AS(report::model_from_json(broken), report::ModelFileError);
}

TEST_CASE("verify_model passes on constructed models and fails on a perturbed warp") {
    for (auto [f, mu, n] : {std::tuple{"s", 1.0, 2}, std::tuple{"1", 1.0, 3}, std::tuple{"cos(s)", 0.0, 2}}) {
        CAPTURE(std::string(f));
        const auto m = build_model(expr::parse(f), mu, n);
        for (const auto& r : verify_model(m)) {
            CAPTURE(r.op);
            CAPTURE(r.note);
            CHECK(r.pass);
        }
    }
    const auto m = build_model(expr::parse("s"), 1.0, 2);
    const auto bad = model_from_nodes(m.f, m.mu, m.n, m.pair, m.profile->nodes(), m.warp_scale * 1.01);
    CHECK(bad.topology == Topology::NonSmoothClosure);
    const auto checks = verify_model(bad);
    REQUIRE(checks.front().op == "closure");
    CHECK_FALSE(checks.front().pass);
    CHECK(checks.front().max == doctest::Approx(0.01).epsilon(1e-6));
    // In dimension 3 the curvature check sees the rescaling as well.
    const auto m3 = build_model(expr::parse("s"), 1.0, 3);
    const auto bad3 = model_from_nodes(m3.f, m3.mu, m3.n, m3.pair, m3.profile->nodes(), m3.warp_scale * 1.01);
    for (const auto& r : verify_model(bad3))
        if (r.op == "sectional_curvature") CHECK_FALSE(r.pass);
}
