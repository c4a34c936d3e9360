#pragma once

// Model spaces: the rotationally symmetric M_{f,mu}, cosh/exp warping
// towers and Euclidean products, with their explicit solution bases,
// evaluation-map ranks, the circle monodromy obstruction and recovery of f
// from a solution.

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "obata/classify.hpp"
#include "obata/geometry.hpp"
#include "obata/profile.hpp"

namespace obata::spaces {

using geometry::Mat;
using geometry::Vec;

enum class Topology { DiskLike, SphereLike, ProductLine, NonSmoothClosure };
std::string to_string(Topology t);

struct ClosureChecks {
    double phi_0 = 0.0;
    double dphi_0 = 0.0;
    std::optional<double> phi_T;   // compact pairs only
    std::optional<double> dphi_T;
    bool pass = false;
};

struct Model {
    expr::Expr f;
    double mu = 0.0;
    int n = 0;
    classify::PairClass pair;
    std::shared_ptr<const profile::Profile> profile;
    std::shared_ptr<const geometry::WarpedChart> chart;
    Topology topology = Topology::DiskLike;
    ClosureChecks closure;
    double warp_scale = 0.0;  // phi = warp_scale * u'; -1/f(mu) for an honest model

    /// w = u(t) on the chart, with exact coordinate partials from the profile.
    geometry::SolutionField field() const;
};

struct ModelOptions {
    classify::PairOptions pair;
    profile::Options ode = tight_ode();
    double probe_cap = 6.0;       // noncompact models are probed on t <= probe_cap
    double probe_min_slope = 0.05;

    static profile::Options tight_ode() {
        profile::Options o;
        o.abs_tol = 1e-12;
        o.rel_tol = 1e-12;
        o.max_step = 0.02;
        return o;
    }
};

Model build_model(const expr::Expr& f, double mu, int n, const ModelOptions& opts = {});

/// Rebuilds a model from stored profile nodes. warp_scale may differ from
/// -1/f(mu) (used for perturbed controls).
Model model_from_nodes(const expr::Expr& f, double mu, int n, const classify::PairClass& pair,
                       std::vector<profile::Node> nodes, double warp_scale, const ModelOptions& opts = {});

// ------------------------------------------------------------ towers

/// k-fold nested cosh warping over the inner fiber: coordinates (r_1..r_k, y).
std::shared_ptr<const geometry::WarpedChart> build_cosh_tower(const geometry::Fiber& inner, int k);

/// dr^2 + e^{2r} g_inner.
std::shared_ptr<const geometry::WarpedChart> build_exp_warping(const geometry::Fiber& inner);

/// R^{k-1} x fiber as k-1 nested unit warps.
std::shared_ptr<const geometry::WarpedChart> euclidean_chart(int k, const geometry::Fiber& fiber);

// ------------------------------------------------------------- bases

enum class SpaceTag { Wh, We, Wf };
std::string to_string(SpaceTag t);

struct BasisElement {
    geometry::SolutionField field;
    geometry::ResidualStats residual;
};

struct SolutionBasis {
    SpaceTag tag = SpaceTag::Wf;
    std::shared_ptr<const geometry::WarpedChart> chart;
    std::vector<BasisElement> elements;  // verified
    std::vector<BasisElement> rejected;  // failed the residual check
    double threshold = 1e-5;
};

struct BasisOptions {
    std::size_t grid = 64;
    std::uint64_t seed = 0;
    double threshold = 1e-5;
};

/// Solutions of w'' - w = 0 on a line: {sinh y, cosh y}.
std::vector<geometry::SolutionField> line_hyperbolic_seed();

/// Product formulas sinh r_1, cosh r_1 sinh r_2, ..., cosh r_1 ... cosh r_k w_0
/// for a cosh tower; each verified against f(s) = -s.
SolutionBasis hyperbolic_basis(std::shared_ptr<const geometry::WarpedChart> tower,
                               const std::vector<geometry::SolutionField>& inner_basis, const BasisOptions& opts = {});

/// {1, x^1, ..., x^{k-1}} on R^{k-1} x fiber, verified against f = 0.
SolutionBasis euclidean_basis(int k, const geometry::Fiber& fiber, const BasisOptions& opts = {});

/// Depth of a cosh tower (number of nested cosh warps from the top).
int tower_depth(const geometry::WarpedChart& c);

struct EvaluationRank {
    int rank = 0;
    std::vector<double> singular_values;
    Mat matrix;  // (1 + n) x #basis, columns (w(p0), orthonormal components of grad w(p0))
};

EvaluationRank evaluation_rank(const SolutionBasis& basis, const Vec& p0, double tol = 1e-8);

// ------------------------------------------------------- obstruction

struct Monodromy {
    Mat matrix;           // (w, w')(0) -> (w, w')(length)
    double lambda_max = 0.0;
    double lambda_min = 0.0;
    int fixed_dim = 0;    // dim ker(M - I)
};

/// Monodromy of w'' = c w over [0, length].
Monodromy linear_monodromy(double c, double length);

/// w'' - w = 0 around a circle of radius rho.
Monodromy circle_obstruction(double rho);

// ---------------------------------------------------------- recovery

class FunctionalDependenceError : public std::runtime_error {
public:
    FunctionalDependenceError(const std::string& what, double spread, double at)
        : std::runtime_error(what), spread_(spread), at_(at) {}
    double spread() const { return spread_; }
    double worst_level() const { return at_; }

private:
    double spread_;
    double at_;
};

struct RecoveredBin {
    double s;       // mean of w in the bin
    double z;       // mean of z in the bin
    double spread;  // max z - min z
    int count;
};

struct RecoveredF {
    std::vector<std::pair<double, double>> samples;  // (w, z) sorted by w
    std::vector<RecoveredBin> bins;
    double single_valued_residual = 0.0;
    double worst_level = 0.0;

    /// Piecewise-linear interpolant through the bin means.
    double operator()(double s) const;
    double s_min() const { return bins.front().s; }
    double s_max() const { return bins.back().s; }
};

struct RecoverOptions {
    double bin_width = 1e-4;
    int min_bin_count = 3;
    double max_spread = 1e-3;
    geometry::FdOptions fd;
};

/// z = -(trace_g Hess w) / n at each grid point, binned by w.
RecoveredF recover_f(const geometry::WarpedChart& c, const geometry::SolutionField& w,
                     const std::vector<Vec>& grid, const RecoverOptions& opts = {});

/// radial x fiber product grid: radial values equispaced over the sampling
/// interval, fiber points seeded.
std::vector<Vec> product_grid(const geometry::WarpedChart& c, int radial, int fiber, std::uint64_t seed = 0);

// ------------------------------------------------------ verify suite

struct CheckResult {
    std::string op;
    double max = 0.0;
    double mean = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::optional<Vec> argmax;
    std::string note;
};

struct VerifyOptions {
    std::size_t grid = 1024;
    std::uint64_t seed = 0;
    int curvature_samples = 64;
    double tol_obata = 1e-6;
    double tol_gradient = 1e-6;
    double tol_flowline = 1e-5;
    double tol_levelset = 1e-7;
    double tol_factorization = 1e-5;
    double tol_curvature = 1e-4;
    double tol_jacobi = 1e-4;
};

/// Runs obata, gradient-norm, flow-line, level-set, factorization, curvature
/// and Jacobi checks on a model.
std::vector<CheckResult> verify_model(const Model& m, const VerifyOptions& opts = {});

/// Closed-form sectional curvature of M_{f,mu} for the plane spanned by X, Y
/// at chart point x (radial curvature f'(u), tangential (f(mu)^2 - f(u)^2)/u'^2).
double model_curvature(const Model& m, const Vec& x, const Vec& X, const Vec& Y);

}  // namespace obata::spaces
