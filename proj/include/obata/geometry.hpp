#pragma once

// Recursive warped-product charts g = dr^2 + phi(r)^2 g_fiber, finite
// difference connection and curvature, geodesic/Jacobi integration and the
// residuals of the structural identities satisfied by solutions of
// Hess w + f(w) g = 0.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "obata/classify.hpp"
#include "obata/expr.hpp"
#include "obata/profile.hpp"

namespace obata::geometry {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// The point lies in an excluded zone (coordinate singularity or outside the
/// chart); what() names the zone.
class ExclusionZone : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class Warp {
public:
    enum class Kind { Cosh, Exp, Sinh, Constant, Profile };

    static Warp cosh();
    static Warp exp();  // e^r, so phi^2 = e^{2r}
    static Warp sinh();
    static Warp constant(double c = 1.0);
    /// phi(t) = scale * u'(t) from the profile's dense output.
    static Warp profile(std::shared_ptr<const profile::Profile> p, double scale);

    double value(double r) const;
    double derivative(double r) const;
    Kind kind() const { return kind_; }
    double scale() const { return scale_; }
    const std::shared_ptr<const profile::Profile>& source() const { return profile_; }
    std::string name() const;

private:
    Warp(Kind k, double scale) : kind_(k), scale_(scale) {}
    Kind kind_;
    double scale_;
    std::shared_ptr<const profile::Profile> profile_;
};

class WarpedChart;

struct RoundSphere {
    int dim;  // spherical coordinates theta_1..theta_dim; the last one is periodic
};
struct Circle {
    double radius;  // arclength coordinate on [0, 2 pi radius)
};
struct FlatSpace {
    int dim;  // may be 0 (a point)
};
struct Nested {
    std::shared_ptr<const WarpedChart> chart;
};
using Fiber = std::variant<RoundSphere, Circle, FlatSpace, Nested>;

int fiber_dim(const Fiber& f);
std::string fiber_name(const Fiber& f);

struct Interval {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
};

/// Polar angles of spherical coordinates closer than this to 0 or pi are excluded.
inline constexpr double kPoleCap = 0.05;

class WarpedChart {
public:
    /// r_domain is the full r-range; finite ends lose `end_exclusion`
    /// (the radial pole caps where phi vanishes).
    WarpedChart(Warp warp, Fiber fiber, Interval r_domain = {}, double end_exclusion = 0.0);

    int dim() const { return 1 + fiber_dim(fiber_); }
    const Warp& warp() const { return warp_; }
    const Fiber& fiber() const { return fiber_; }
    Interval r_domain() const { return r_domain_; }
    double end_exclusion() const { return end_exclusion_; }

    /// Admissible r-range: the domain minus the end exclusions.
    Interval r_admissible() const;
    /// r-range used by the seeded samplers; admissible range clipped to
    /// [-1.5, 1.5] unless set explicitly.
    Interval r_sampling() const;
    void set_r_sampling(Interval iv) { r_sampling_ = iv; }

    /// Name of the zone containing x (with every boundary moved inward by
    /// margin), or nullopt if x is admissible.
    std::optional<std::string> zone(const Vec& x, double margin = 0.0) const;
    void require_admissible(const Vec& x, double margin = 0.0) const;

    Mat metric_at(const Vec& x) const;
    /// Metric of the fiber at its own coordinates y (no warp).
    Mat fiber_metric(const Vec& y) const;

    std::string describe() const;

private:
    Warp warp_;
    Fiber fiber_;
    Interval r_domain_;
    double end_exclusion_;
    std::optional<Interval> r_sampling_;
};

// ---------------------------------------------------------------- tensors

struct FdOptions {
    double step = 1e-3;
    bool richardson = true;
};

/// gamma[k](i, j) = Gamma^k_{ij}.
using Christoffel = std::vector<Mat>;

Christoffel christoffel_at(const WarpedChart& c, const Vec& x, const FdOptions& fd = {});

/// R^l_{ijk}, with R(d_i, d_j) d_k = R^l_{ijk} d_l.
class Riemann {
public:
    explicit Riemann(int n) : n_(n), data_(static_cast<std::size_t>(n) * n * n * n, 0.0) {}
    double& operator()(int l, int i, int j, int k) { return data_[((l * n_ + i) * n_ + j) * n_ + k]; }
    double operator()(int l, int i, int j, int k) const { return data_[((l * n_ + i) * n_ + j) * n_ + k]; }
    int dim() const { return n_; }
    /// Components of R(X, Y) Z.
    Vec apply(const Vec& X, const Vec& Y, const Vec& Z) const;

private:
    int n_;
    std::vector<double> data_;
};

Riemann riemann_at(const WarpedChart& c, const Vec& x, const FdOptions& fd = {});

/// <R(X,Y)Y, X> / (|X|^2 |Y|^2 - <X,Y>^2).
double sectional_curvature(const WarpedChart& c, const Vec& x, const Vec& X, const Vec& Y, const FdOptions& fd = {});

// ---------------------------------------------------------- solution fields

/// A scalar function on chart coordinates. Coordinate partials are taken by
/// finite differences unless supplied.
struct SolutionField {
    std::string name;
    std::function<double(const Vec&)> w;
    std::function<Vec(const Vec&)> partials;         // optional: dw
    std::function<Mat(const Vec&)> second_partials;  // optional: d_i d_j w
    std::function<double(const Vec&)> z;             // optional companion in Hess w + z g = 0
};

Vec partials(const SolutionField& w, const Vec& x, const FdOptions& fd = {});
Mat second_partials(const SolutionField& w, const Vec& x, const FdOptions& fd = {});

/// Contravariant gradient g^{ij} d_j w.
Vec gradient(const WarpedChart& c, const SolutionField& w, const Vec& x, const FdOptions& fd = {});
double gradient_norm(const WarpedChart& c, const SolutionField& w, const Vec& x, const FdOptions& fd = {});

/// Hess w_{ij} = d_i d_j w - Gamma^k_{ij} d_k w.
Mat hessian(const WarpedChart& c, const SolutionField& w, const Vec& x, const FdOptions& fd = {});

/// z = -(trace_g Hess w) / n.
double trace_z(const WarpedChart& c, const SolutionField& w, const Vec& x, const FdOptions& fd = {});

// ---------------------------------------------------------------- residuals

struct ResidualStats {
    double max = 0.0;
    double mean = 0.0;
    Vec argmax;
    std::size_t count = 0;
};

/// Seeded uniform samples of the chart's sampling box, kept `margin` away
/// from every excluded zone.
std::vector<Vec> sample_grid(const WarpedChart& c, std::size_t count, std::uint64_t seed, double margin = 0.01);

/// Seeded fiber coordinates (the chart coordinates after r).
std::vector<Vec> sample_fibers(const WarpedChart& c, int count, std::uint64_t seed, double margin = 0.01);

/// max/mean over the grid of the entrywise sup norm of Hess w + f(w) g.
ResidualStats obata_residual(const WarpedChart& c, const SolutionField& w, const expr::Expr& f,
                             const std::vector<Vec>& grid, const FdOptions& fd = {});

/// max | |grad w|^2 - (alpha^2 - 2 h(w)) | with h anchored at the level where
/// |grad w| = alpha.
ResidualStats gradient_norm_residual(const WarpedChart& c, const SolutionField& w, const classify::HFunc& h,
                                     double alpha, const std::vector<Vec>& grid, const FdOptions& fd = {});

struct Path {
    std::vector<double> t;
    std::vector<Vec> x;
    std::vector<Vec> v;
    bool complete = true;
    std::string stop_reason;  // zone name or other reason for a partial result
    Vec exit_point;
    double speed_drift = 0.0;  // max | |v|_g - |v0|_g |
};

struct PathOptions {
    double tol = 1e-12;
    int samples = 201;
    FdOptions fd;
};

Path geodesic(const WarpedChart& c, const Vec& x0, const Vec& v0, double t_end, const PathOptions& opts = {});

/// Integral curve of grad w / |grad w| from x0; stops early when |grad w|
/// drops below min_grad.
Path gradient_flow(const WarpedChart& c, const SolutionField& w, const Vec& x0, double t_end,
                   const PathOptions& opts = {}, double min_grad = 0.05);

struct PathComparison {
    double residual = 0.0;  // max coordinate distance between the two paths
    bool complete = true;
    std::string note;
};

PathComparison flowline_geodesic_residual(const WarpedChart& c, const SolutionField& w, const Vec& x0,
                                          double t_end, const PathOptions& opts = {});

/// Expected Jacobi field magnitude psi(t) along the radial geodesic and its derivative.
struct JacobiOracle {
    std::function<double(double)> psi;
    std::function<double(double)> dpsi;
};

struct JacobiResult {
    double residual = 0.0;  // max |Y(t) - psi(t) V(t)|_g
    double t_start = 0.0;   // offset start outside the pole cap
    bool complete = true;
    std::string note;
};

/// Integrates the Jacobi equation Y'' + R(Y, gamma') gamma' = 0 along the
/// radial geodesic through the fiber point y, starting at t0 with the
/// matched data Y = psi V, Y' = psi' V, and parallel transports V (a unit
/// fiber direction) alongside.
JacobiResult jacobi_residual(const WarpedChart& c, const Vec& fiber_point, const Vec& fiber_direction, double t0,
                             double t_end, const JacobiOracle& oracle, const PathOptions& opts = {});

class LevelNotAttained : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LevelSetStats {
    double std_gradnorm = 0.0;
    double std_z = 0.0;
    double mean_gradnorm = 0.0;
    double mean_z = 0.0;
    std::vector<Vec> points;
};

/// Samples {w = level} by root solves along radial lines at seeded fiber
/// points. z defaults to trace_z when the field carries none.
LevelSetStats levelset_constancy(const WarpedChart& c, const SolutionField& w, double level, int n_samples,
                                 std::uint64_t seed = 0, const FdOptions& fd = {});

/// Point (r, y) on the radial line through fiber point y where w = level;
/// nullopt when the line does not reach the level.
std::optional<Vec> radial_root(const WarpedChart& c, const SolutionField& w, const Vec& y, double level);

class BandError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct FactorizationOptions {
    std::vector<double> levels;  // s-values probed in the band
    int fiber_samples = 6;
    std::uint64_t seed = 0;
    int rk4_steps = 400;
    double jacobian_step = 1e-3;
    FdOptions fd;
};

/// Pulls g back by F(s, y) = flow of grad w / |grad w|^2 from the level set
/// {w = mu} and compares with ds^2 / h_a(s) + (h_a(s) / h_a(mu)) g_N, where
/// h_a(s) = alpha^2 - 2 h(s), h anchored at mu. Returns the max entrywise
/// deviation.
double warp_factorization_residual(const WarpedChart& c, const SolutionField& w, const classify::HFunc& h,
                                   const FactorizationOptions& opts);

/// Shape operator of the level set of w through x, as a map on the tangent
/// space restricted to the level set: returns max | S - (z / |grad w|) Id |
/// over a basis of tangent vectors to the level set.
double shape_operator_residual(const WarpedChart& c, const SolutionField& w, const Vec& x, const FdOptions& fd = {});

}  // namespace obata::geometry
