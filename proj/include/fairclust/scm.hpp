#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "fairclust/dataset.hpp"

namespace fairclust::scm {

// Tiny JSON-encoded expression language for structural assignments:
// arithmetic, comparison, boolean logic, set membership, and CPT lookup
// ("pick": a conditional probability row realised by thresholding a uniform
// finite-support noise term). Specs stay declarative data so fixtures are
// portable across implementations.
struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    enum class Op {
        constant, var, add, sub, mul, div,
        lt, le, eq, ge, gt, logic_and, logic_or, logic_not,
        if_else, in_set, pick
    };
    Op op = Op::constant;
    double value = 0.0;                 // constant
    std::string name;                   // var: variable name; pick: noise name
    std::vector<ExprPtr> args;
    std::vector<double> set;            // in_set
    std::vector<std::string> parents;   // pick
    std::map<std::string, std::vector<double>> cpt;  // pick: "i,j" -> probs
};

ExprPtr parse_expr(const void* json_value);  // nlohmann::json internally

struct ExogenousSpec {
    std::string name;
    std::vector<double> probs;  // strictly positive, sums to 1
    int cardinality() const { return static_cast<int>(probs.size()); }
};

struct VariableSpec {
    std::string name;
    Role role = Role::confounder;
    Kind kind = Kind::categorical;
    std::vector<std::string> levels;        // categorical labels
    std::vector<double> numeric_levels;     // continuous support values
    ExprPtr expr;
    int cardinality() const {
        return kind == Kind::categorical ? static_cast<int>(levels.size())
                                         : static_cast<int>(numeric_levels.size());
    }
};

// Named deterministic cluster maps shipped with a spec; these are the fixed
// f_C maps used by ground-truth sidecars and estimator tests.
struct AssignmentSpec {
    std::string name;
    int k = 2;
    ExprPtr expr;  // evaluates to a 0-based cluster index
};

struct ScmSpec {
    std::string name;
    std::vector<ExogenousSpec> exogenous;
    std::vector<VariableSpec> variables;   // topological order
    std::vector<AssignmentSpec> assignments;
    int bins = 10;

    int var_index(const std::string& name) const;
    int exo_index(const std::string& name) const;
    int protected_var() const;
    SfmSchema schema() const;
    int64_t joint_support() const;

    // Structural checks: unique names, references in topological order,
    // SFM edge constraints (nothing into X but exogenous; no W into Z),
    // strictly positive exogenous probabilities, binary protected variable.
    void validate() const;
};

ScmSpec scm_from_json(const std::string& text);
ScmSpec load_scm(const std::string& path);

// One realisation of all exogenous variables.
struct Unit {
    std::vector<int> u;  // support index per exogenous, in spec order
};

// Evaluates all endogenous variables for a unit in the submodel where the
// intervened variables (by index) are pinned to level indices. The returned
// vector holds one level index per variable, in spec order.
std::vector<int> evaluate(const ScmSpec& spec, const Unit& unit,
                          const std::map<int, int>& interventions = {});

// Name/level-checked wrapper for the above (the public potential-response
// surface; rejects interventions on unknown variables or non-level values).
std::vector<int> potential_response(
    const ScmSpec& spec, const Unit& unit,
    const std::vector<std::pair<std::string, int>>& interventions);

// n i.i.d. rows drawn by sampling U and evaluating mechanisms; bit-identical
// for identical seeds.
Dataset sample(const ScmSpec& spec, size_t n, uint64_t seed);

// Calls fn(unit, p(u)) for every joint exogenous state.
void for_each_unit(const ScmSpec& spec,
                   const std::function<void(const Unit&, double)>& fn);

// Deterministic cluster map over the endogenous level vector.
using ClusterMap = std::function<int(const std::vector<int>& levels)>;

ClusterMap make_cluster_map(const ScmSpec& spec, const AssignmentSpec& assignment);

}  // namespace fairclust::scm
