#include "obata/report.hpp"

#include <cstdio>
#include <sstream>

namespace obata::report {

namespace {

template <class T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

std::optional<double> opt_double(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

classify::PairKind pair_kind_from(const std::string& s) {
    for (auto k : {classify::PairKind::NoncompactI, classify::PairKind::NoncompactII, classify::PairKind::Compact,
                   classify::PairKind::Undetermined})
        if (classify::to_string(k) == s) return k;
    throw ModelFileError("unknown pair kind '" + s + "'");
}

}  // namespace

json vec_to_json(const geometry::Vec& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json to_json(const classify::PairClass& p) {
    const auto& e = p.evidence;
    return {{"kind", classify::to_string(p.kind)},
            {"mu", p.mu},
            {"nu", opt(p.nu)},
            {"T", opt(p.T)},
            {"coincidence_residual", opt(p.coincidence_residual)},
            {"evidence",
             {{"ode_event", opt(e.ode_event)},
              {"quadrature_T", opt(e.quadrature_T)},
              {"nu_root_residual", opt(e.nu_root_residual)},
              {"f_nu_magnitude", opt(e.f_nu_magnitude)},
              {"ode_terminal", e.ode_terminal},
              {"note", e.note}}}};
}

json to_json(const classify::CoercivityClass& c) {
    json w = json::array();
    for (const auto& x : c.witnesses)
        w.push_back({{"offset", x.offset}, {"a", x.a}, {"b", x.b}, {"f_a", opt(x.f_a)}, {"f_b", opt(x.f_b)}, {"reason", x.reason}});
    return {{"label", classify::to_string(c.label)}, {"offsets_scanned", c.offsets_scanned}, {"witnesses", w}};
}

json to_json(const geometry::ResidualStats& s) {
    return {{"max", s.max}, {"mean", s.mean}, {"count", s.count}, {"argmax_point", vec_to_json(s.argmax)}};
}

json to_json(const spaces::CheckResult& r) {
    return {{"op", r.op},
            {"max", r.max},
            {"mean", r.mean},
            {"tolerance", r.tolerance},
            {"pass", r.pass},
            {"argmax_point", r.argmax ? vec_to_json(*r.argmax) : json(nullptr)},
            {"note", r.note}};
}

json to_json(const spaces::Monodromy& m) {
    json mat = json::array();
    for (int i = 0; i < m.matrix.rows(); ++i) mat.push_back(vec_to_json(m.matrix.row(i).transpose()));
    return {{"matrix", mat}, {"lambda_max", m.lambda_max}, {"lambda_min", m.lambda_min}, {"fixed_dim", m.fixed_dim}};
}

json to_json(const spaces::SolutionBasis& b) {
    auto elems = [](const std::vector<spaces::BasisElement>& v) {
        json a = json::array();
        for (const auto& e : v) a.push_back({{"name", e.field.name}, {"residual", to_json(e.residual)}});
        return a;
    };
    return {{"space", spaces::to_string(b.tag)},
            {"chart", b.chart->describe()},
            {"dim", b.chart->dim()},
            {"threshold", b.threshold},
            {"elements", elems(b.elements)},
            {"rejected", elems(b.rejected)}};
}

json to_json(const spaces::EvaluationRank& r) { return {{"rank", r.rank}, {"singular_values", r.singular_values}}; }

json model_to_json(const spaces::Model& m) {
    json nodes = json::array();
    for (const auto& nd : m.profile->nodes()) nodes.push_back({nd.t, nd.u, nd.up});
    const auto& cl = m.closure;
    const geometry::Interval dom = m.chart->r_domain(), band = m.chart->r_sampling();
    return {{"schema", kSchema},
            {"f", expr::to_string(m.f)},
            {"mu", m.mu},
            {"n", m.n},
            {"pair", to_json(m.pair)},
            {"warp_scale", m.warp_scale},
            {"topology", spaces::to_string(m.topology)},
            {"closure",
             {{"phi_0", cl.phi_0}, {"dphi_0", cl.dphi_0}, {"phi_T", opt(cl.phi_T)}, {"dphi_T", opt(cl.dphi_T)}, {"pass", cl.pass}}},
            {"chart",
             {{"metric", m.chart->describe()},
              {"r_domain", {dom.lo, dom.hi}},
              {"probe_band", {band.lo, band.hi}},
              {"end_exclusion", m.chart->end_exclusion()}}},
            {"energy_max_drift", m.profile->energy_max_drift()},
            {"nodes", nodes}};
}

spaces::Model model_from_json(const json& j) {
    try {
        if (j.at("schema").get<int>() != kSchema) throw ModelFileError("unsupported schema version");
        const expr::Expr f = expr::parse(j.at("f").get<std::string>());
        const double mu = j.at("mu").get<double>();
        const int n = j.at("n").get<int>();
        const json& pj = j.at("pair");
        classify::PairClass pair;
        pair.kind = pair_kind_from(pj.at("kind").get<std::string>());
        pair.mu = pj.at("mu").get<double>();
        pair.nu = opt_double(pj, "nu");
        pair.T = opt_double(pj, "T");
        pair.coincidence_residual = opt_double(pj, "coincidence_residual");
        if (pj.contains("evidence")) {
            const json& ej = pj.at("evidence");
            auto& e = pair.evidence;
            e.ode_event = opt_double(ej, "ode_event");
            e.quadrature_T = opt_double(ej, "quadrature_T");
            e.nu_root_residual = opt_double(ej, "nu_root_residual");
            e.f_nu_magnitude = opt_double(ej, "f_nu_magnitude");
            e.ode_terminal = ej.value("ode_terminal", "");
            e.note = ej.value("note", "");
        }
        std::vector<profile::Node> nodes;
        for (const auto& nd : j.at("nodes")) nodes.push_back({nd.at(0).get<double>(), nd.at(1).get<double>(), nd.at(2).get<double>()});
        return spaces::model_from_nodes(f, mu, n, pair, std::move(nodes), j.at("warp_scale").get<double>());
    } catch (const json::exception& e) {
        throw ModelFileError(std::string("malformed model file: ") + e.what());
    }
}

std::string recovered_csv(const spaces::RecoveredF& r) {
    std::ostringstream os;
    os << "s,f\n";
    char buf[64];
    for (const auto& b : r.bins) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", b.s, b.z);
        os << buf;
    }
    return os.str();
}

}  // namespace obata::report
