// obata: classify (f, mu) pairs, construct and verify model spaces, build
// solution bases and recover f from a solution.
//
// Exit codes: 0 pass, 2 parse/input error, 3 undetermined, 4 degenerate
// input, 5 verification failure.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "obata/classify.hpp"
#include "obata/expr.hpp"
#include "obata/report.hpp"
#include "obata/spaces.hpp"

namespace {

using namespace obata;
using report::json;

enum Exit { kPass = 0, kInternal = 1, kParse = 2, kUndetermined = 3, kDegenerate = 4, kVerifyFailed = 5 };

struct RunConfig {
    std::string subcommand;
    std::string f_text;
    std::string mu_text;
    int dim = 2;
    double window = 20.0;
    double budget = 50.0;
    double tol_f = 1e-8;
    double tol_h = 1e-10;
    std::uint64_t seed = 0;
    std::string out;
    std::string format = "json";
    std::string model_path;
    std::string space = "hcosh";
    int k = 1;
    std::string fiber = "line";
    double rho = 1.0;
    std::string field = "model";
    double perturb_warp = 0.0;
};

class CliError : public std::runtime_error {
public:
    CliError(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
    int code() const { return code_; }

private:
    int code_;
};

json config_json(const RunConfig& c) {
    return {{"subcommand", c.subcommand}, {"f", c.f_text},         {"mu", c.mu_text},
            {"dim", c.dim},               {"window", c.window},    {"budget", c.budget},
            {"tol_f", c.tol_f},           {"tol_h", c.tol_h},      {"seed", c.seed},
            {"out", c.out},               {"format", c.format},    {"model", c.model_path},
            {"space", c.space},           {"k", c.k},              {"fiber", c.fiber},
            {"rho", c.rho},               {"field", c.field},      {"perturb_warp", c.perturb_warp}};
}

void emit(const RunConfig& c, const std::string& text) {
    if (c.out.empty() || c.out == "-") {
        std::cout << text;
        return;
    }
    std::ofstream os(c.out, std::ios::binary);
    if (!os) throw CliError(kInternal, "cannot write " + c.out);
    os << text;
}

void emit(const RunConfig& c, const json& j) { emit(c, j.dump(2) + "\n"); }

expr::Expr parse_f(const RunConfig& c) {
    if (c.f_text.empty()) throw CliError(kParse, "--f is required");
    return expr::parse(c.f_text);
}

double parse_mu(const RunConfig& c) {
    if (c.mu_text.empty()) throw CliError(kParse, "--mu is required");
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(c.mu_text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != c.mu_text.size() || !std::isfinite(v)) throw CliError(kParse, "--mu is not a number: " + c.mu_text);
    return v;
}

// Half a unit in the last written decimal place of mu, so that a truncated
// decimal such as -1.414213562 still classifies like the value it stands for.
double mu_uncertainty(const std::string& text) {
    const auto e = text.find_first_of("eE");
    const std::string mantissa = text.substr(0, e);
    const int exponent = e == std::string::npos ? 0 : std::stoi(text.substr(e + 1));
    const auto dot = mantissa.find('.');
    const int decimals = dot == std::string::npos ? 0 : static_cast<int>(mantissa.size() - dot - 1);
    return 0.5 * std::pow(10.0, exponent - decimals);
}

classify::PairOptions pair_options(const RunConfig& c) {
    classify::PairOptions o;
    o.window = c.window;
    o.t_budget = c.budget;
    o.tol.f = c.tol_f;
    o.tol.h = c.tol_h;
    o.mu_uncertainty = mu_uncertainty(c.mu_text);
    return o;
}

int cmd_classify(const RunConfig& c) {
    const expr::Expr f = parse_f(c);
    json out{{"schema", report::kSchema}, {"config", config_json(c)}, {"f", expr::to_string(f)}};
    int code = kPass;

    classify::CoercivityOptions co;
    co.tol.f = c.tol_f;
    co.tol.h = c.tol_h;
    const auto coercivity = classify::classify_coercivity(f, co);
    out["coercivity"] = report::to_json(coercivity);
    if (coercivity.label == classify::CoercivityLabel::Undetermined) code = kUndetermined;

    if (!c.mu_text.empty()) {
        const double mu = parse_mu(c);
        try {
            const auto pair = classify::classify_pair(f, mu, pair_options(c));
            out["pair"] = report::to_json(pair);
            if (pair.kind == classify::PairKind::Undetermined) code = kUndetermined;
        } catch (const classify::DegeneratePair& e) {
            out["pair"] = {{"kind", "Degenerate"}, {"note", e.what()}};
            code = kDegenerate;
        } catch (const classify::Undetermined& e) {
            out["pair"] = {{"kind", "Undetermined"}, {"note", e.what()}};
            code = kUndetermined;
        }
    }
    emit(c, out);
    return code;
}

int cmd_construct(const RunConfig& c) {
    const expr::Expr f = parse_f(c);
    const double mu = parse_mu(c);
    spaces::ModelOptions mo;
    mo.pair = pair_options(c);
    spaces::Model m = spaces::build_model(f, mu, c.dim, mo);
    if (c.perturb_warp != 0.0) {
        // Negative control: rebuild with a rescaled warp from the same nodes.
        spdlog::warn("perturbing the warp by a factor {}", 1.0 + c.perturb_warp);
        m = spaces::model_from_nodes(f, mu, c.dim, m.pair, m.profile->nodes(), m.warp_scale * (1.0 + c.perturb_warp), mo);
    }
    json out = report::model_to_json(m);
    out["config"] = config_json(c);
    emit(c, out);
    return kPass;
}

spaces::Model load_model(const RunConfig& c) {
    if (c.model_path.empty()) throw CliError(kParse, "--model is required");
    std::ifstream is(c.model_path);
    if (!is) throw CliError(kParse, "cannot read model file " + c.model_path);
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw CliError(kParse, std::string("model file is not JSON: ") + e.what());
    }
    return report::model_from_json(j);
}

int cmd_verify(const RunConfig& c) {
    const spaces::Model m = load_model(c);
    spaces::VerifyOptions vo;
    vo.seed = c.seed;
    const auto checks = spaces::verify_model(m, vo);
    json arr = json::array();
    std::string failed;
    for (const auto& r : checks) {
        arr.push_back(report::to_json(r));
        if (!r.pass && failed.empty()) failed = r.op;
    }
    json out{{"schema", report::kSchema},
             {"config", config_json(c)},
             {"model", {{"f", expr::to_string(m.f)}, {"mu", m.mu}, {"n", m.n}, {"topology", spaces::to_string(m.topology)}}},
             {"checks", arr},
             {"pass", failed.empty()}};
    if (!failed.empty()) out["failed_op"] = failed;
    emit(c, out);
    if (!failed.empty()) {
        std::cerr << "verification failed: " << failed << "\n";
        return kVerifyFailed;
    }
    return kPass;
}

geometry::Fiber fiber_from(const RunConfig& c) {
    if (c.fiber == "line") return geometry::FlatSpace{1};
    if (c.fiber == "circle") return geometry::Circle{c.rho};
    if (c.fiber == "point") return geometry::FlatSpace{0};
    throw CliError(kParse, "unknown --fiber '" + c.fiber + "' (line, circle, point)");
}

int cmd_basis(const RunConfig& c) {
    spaces::BasisOptions bo;
    bo.seed = c.seed;
    spaces::SolutionBasis basis;
    geometry::Vec p0;
    if (c.space == "hcosh") {
        const auto fiber = fiber_from(c);
        if (c.k < 1) throw CliError(kParse, "--k must be at least 1");
        const auto tower = spaces::build_cosh_tower(fiber, c.k);
        std::vector<geometry::SolutionField> inner;
        if (c.fiber == "line") inner = spaces::line_hyperbolic_seed();
        basis = spaces::hyperbolic_basis(tower, inner, bo);
        p0 = geometry::Vec::Constant(tower->dim(), 0.2);
        p0.head(c.k).setConstant(0.3);
    } else if (c.space == "euclid") {
        if (c.k < 2) throw CliError(kParse, "--k must be at least 2");
        basis = spaces::euclidean_basis(c.k, fiber_from(c), bo);
        p0 = geometry::Vec::Constant(basis.chart->dim(), 0.2);
        p0.head(c.k - 1).setConstant(0.3);
    } else {
        throw CliError(kParse, "unknown --space '" + c.space + "' (hcosh, euclid)");
    }
    const auto rank = spaces::evaluation_rank(basis, p0);
    json out{{"schema", report::kSchema},
             {"config", config_json(c)},
             {"basis", report::to_json(basis)},
             {"p0", report::vec_to_json(p0)},
             {"evaluation", report::to_json(rank)},
             {"verified", basis.elements.size()}};
    emit(c, out);
    return basis.rejected.empty() ? kPass : kVerifyFailed;
}

int cmd_recover_f(const RunConfig& c) {
    std::shared_ptr<const geometry::WarpedChart> chart;
    geometry::SolutionField w;
    std::vector<geometry::Vec> grid;
    std::optional<spaces::Model> model;
    if (c.field == "model") {
        model = load_model(c);
        chart = model->chart;
        w = model->field();
        grid = spaces::product_grid(*chart, 2000, 3, c.seed);
    } else if (c.field == "linear") {
        // w = x^1 on the flat plane.
        chart = spaces::euclidean_chart(3, geometry::FlatSpace{0});
        w = {"x1", [](const geometry::Vec& x) { return x[0]; }, {}, {}, {}};
        grid = spaces::product_grid(*chart, 2000, 3, c.seed);
    } else if (c.field == "cube") {
        // w = x^3 on a line: z is a function of w, but not a smooth one.
        chart = std::make_shared<const geometry::WarpedChart>(geometry::Warp::constant(1.0), geometry::FlatSpace{0});
        w = {"x^3", [](const geometry::Vec& x) { return x[0] * x[0] * x[0]; }, {}, {}, {}};
        grid = spaces::product_grid(*chart, 4001, 1, c.seed);
    } else {
        throw CliError(kParse, "unknown --field '" + c.field + "' (model, linear, cube)");
    }
    try {
        const auto rec = spaces::recover_f(*chart, w, grid);
        if (c.format == "csv") {
            emit(c, report::recovered_csv(rec));
        } else {
            json bins = json::array();
            for (const auto& b : rec.bins) bins.push_back({b.s, b.z});
            emit(c, json{{"schema", report::kSchema},
                         {"config", config_json(c)},
                         {"single_valued_residual", rec.single_valued_residual},
                         {"f_samples", bins}});
        }
        return kPass;
    } catch (const spaces::FunctionalDependenceError& e) {
        std::cerr << "recover-f failed: " << e.what() << "\n";
        if (c.format != "csv")
            emit(c, json{{"schema", report::kSchema},
                         {"config", config_json(c)},
                         {"error", "FunctionalDependenceFailed"},
                         {"single_valued_residual", e.spread()},
                         {"worst_level", e.worst_level()}});
        return kVerifyFailed;
    }
}

void common_flags(CLI::App* sub, RunConfig& c) {
    sub->add_option("--f", c.f_text, "profile function f(s)");
    sub->add_option("--mu", c.mu_text, "initial value mu");
    sub->add_option("--dim", c.dim, "manifold dimension n");
    sub->add_option("--window", c.window, "search window for nu");
    sub->add_option("--budget", c.budget, "ODE time budget");
    sub->add_option("--tol-f", c.tol_f, "|f| below this is a zero of f");
    sub->add_option("--tol-h", c.tol_h, "|h| below this is a zero of h");
    sub->add_option("--seed", c.seed, "grid seed");
    sub->add_option("--out", c.out, "output path (default stdout)");
    sub->add_option("--format", c.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
}

void setup_logging() {
    auto logger = spdlog::stderr_logger_st("obata");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* lvl = std::getenv("OBATA_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    RunConfig cfg;
    CLI::App app{"Generalized Obata equation toolkit"};
    app.require_subcommand(1);

    auto* classify = app.add_subcommand("classify", "pair type of (f, mu) and coercivity of f");
    common_flags(classify, cfg);
    auto* construct = app.add_subcommand("construct", "build the model M_{f,mu} and write it as JSON");
    common_flags(construct, cfg);
    construct->add_option("--perturb-warp", cfg.perturb_warp, "rescale the warp by 1+x (negative control)");
    auto* verify = app.add_subcommand("verify", "run the identity suite on a model file");
    common_flags(verify, cfg);
    verify->add_option("--model", cfg.model_path, "model file")->required();
    auto* basis = app.add_subcommand("basis", "explicit solution basis of a tower or product");
    common_flags(basis, cfg);
    basis->add_option("--space", cfg.space, "hcosh or euclid");
    basis->add_option("--k", cfg.k, "tower depth / Euclidean factor R^{k-1}");
    basis->add_option("--fiber", cfg.fiber, "line, circle or point (euclid default: point)");
    basis->add_option("--rho", cfg.rho, "circle radius");
    auto* recover = app.add_subcommand("recover-f", "recover f from z = -(trace Hess w)/n");
    common_flags(recover, cfg);
    recover->add_option("--model", cfg.model_path, "model file (field=model)");
    recover->add_option("--field", cfg.field, "model, linear or cube");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kParse;
    }

    cfg.subcommand = app.get_subcommands().front()->get_name();
    if (cfg.subcommand == "recover-f" && !recover->count("--format")) cfg.format = "csv";
    if (cfg.subcommand == "basis" && cfg.space == "euclid" && !basis->count("--fiber")) cfg.fiber = "point";
    spdlog::debug("running {}", cfg.subcommand);
    try {
        if (cfg.subcommand == "classify") return cmd_classify(cfg);
        if (cfg.subcommand == "construct") return cmd_construct(cfg);
        if (cfg.subcommand == "verify") return cmd_verify(cfg);
        if (cfg.subcommand == "basis") return cmd_basis(cfg);
        if (cfg.subcommand == "recover-f") return cmd_recover_f(cfg);
    } catch (const CliError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code();
    } catch (const expr::ParseError& e) {
        std::cerr << "parse error at offset " << e.offset() << ": " << e.what() << "\n";
        return kParse;
    } catch (const report::ModelFileError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kParse;
    } catch (const classify::DegeneratePair& e) {
        std::cerr << "degenerate input: " << e.what() << "\n";
        return kDegenerate;
    } catch (const profile::ConstantSolution& e) {
        std::cerr << "degenerate input: " << e.what() << "\n";
        return kDegenerate;
    } catch (const expr::DomainError& e) {
        std::cerr << "degenerate input: " << e.what() << "\n";
        return kDegenerate;
    } catch (const classify::Undetermined& e) {
        std::cerr << "undetermined: " << e.what() << "\n";
        return kUndetermined;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInternal;
    }
    return kInternal;
}
