#pragma once

// JSON and CSV serialization of classification results, models, bases and
// verification reports. Keys are emitted in sorted order, so identical
// inputs give byte-identical output.

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "obata/classify.hpp"
#include "obata/geometry.hpp"
#include "obata/spaces.hpp"

namespace obata::report {

using json = nlohmann::json;

inline constexpr int kSchema = 1;

json to_json(const classify::PairClass& p);
json to_json(const classify::CoercivityClass& c);
json to_json(const geometry::ResidualStats& s);
json to_json(const spaces::CheckResult& r);
json to_json(const spaces::Monodromy& m);
json to_json(const spaces::SolutionBasis& b);
json to_json(const spaces::EvaluationRank& r);

/// Model file: f, mu, n, pair class, warp scale, closure checks, topology,
/// chart descriptor and the profile nodes (t, u, u').
json model_to_json(const spaces::Model& m);

class ModelFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rebuilds a model from its file; the profile is reconstructed from the
/// stored nodes (no re-integration).
spaces::Model model_from_json(const json& j);

json vec_to_json(const geometry::Vec& v);

/// "s,f" header then one line per bin mean.
std::string recovered_csv(const spaces::RecoveredF& r);

}  // namespace obata::report
