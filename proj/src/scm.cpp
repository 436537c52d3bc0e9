#include "fairclust/scm.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "fairclust/common.hpp"
#include "fairclust/rng.hpp"

namespace fairclust::scm {

using nlohmann::json;

namespace {

Expr::Op op_from_string(const std::string& s) {
    if (s == "const") return Expr::Op::constant;
    if (s == "var") return Expr::Op::var;
    if (s == "add") return Expr::Op::add;
    if (s == "sub") return Expr::Op::sub;
    if (s == "mul") return Expr::Op::mul;
    if (s == "div") return Expr::Op::div;
    if (s == "lt") return Expr::Op::lt;
    if (s == "le") return Expr::Op::le;
    if (s == "eq") return Expr::Op::eq;
    if (s == "ge") return Expr::Op::ge;
    if (s == "gt") return Expr::Op::gt;
    if (s == "and") return Expr::Op::logic_and;
    if (s == "or") return Expr::Op::logic_or;
    if (s == "not") return Expr::Op::logic_not;
    if (s == "if") return Expr::Op::if_else;
    if (s == "in") return Expr::Op::in_set;
    if (s == "pick") return Expr::Op::pick;
    throw SchemaError("scm: unknown expression op '" + s + "'");
}

ExprPtr parse_expr_json(const json& j) {
    auto node = std::make_shared<Expr>();
    if (j.is_number()) {
        node->op = Expr::Op::constant;
        node->value = j.get<double>();
        return node;
    }
    if (!j.is_array() || j.empty() || !j[0].is_string())
        throw SchemaError("scm: expression must be a number or [op, ...] array");
    node->op = op_from_string(j[0].get<std::string>());
    switch (node->op) {
        case Expr::Op::constant:
            node->value = j.at(1).get<double>();
            break;
        case Expr::Op::var:
            node->name = j.at(1).get<std::string>();
            break;
        case Expr::Op::logic_not:
            node->args.push_back(parse_expr_json(j.at(1)));
            break;
        case Expr::Op::if_else:
            for (int i = 1; i <= 3; ++i) node->args.push_back(parse_expr_json(j.at(i)));
            break;
        case Expr::Op::in_set:
            node->args.push_back(parse_expr_json(j.at(1)));
            if (!j.at(2).is_array()) throw SchemaError("scm: 'in' needs a value list");
            for (const auto& v : j.at(2)) node->set.push_back(v.get<double>());
            break;
        case Expr::Op::pick: {
            const auto& spec = j.at(1);
            node->name = spec.at("noise").get<std::string>();
            for (const auto& p : spec.at("parents")) node->parents.push_back(p.get<std::string>());
            for (const auto& [key, probs] : spec.at("cpt").items()) {
                std::vector<double> row;
                double sum = 0.0;
                for (const auto& v : probs) {
                    row.push_back(v.get<double>());
                    sum += row.back();
                }
                if (row.empty() || std::abs(sum - 1.0) > 1e-9)
                    throw SchemaError("scm: cpt row '" + key + "' does not sum to 1");
                node->cpt.emplace(key, std::move(row));
            }
            break;
        }
        default:
            node->args.push_back(parse_expr_json(j.at(1)));
            node->args.push_back(parse_expr_json(j.at(2)));
            break;
    }
    return node;
}

void collect_vars(const ExprPtr& e, std::set<std::string>* out) {
    if (!e) return;
    if (e->op == Expr::Op::var) out->insert(e->name);
    if (e->op == Expr::Op::pick) {
        out->insert(e->name);
        for (const auto& p : e->parents) out->insert(p);
    }
    for (const auto& a : e->args) collect_vars(a, out);
}

// Evaluation context: exogenous support indices plus the level index and
// numeric value of every endogenous variable computed so far.
struct Context {
    const ScmSpec* spec;
    const std::vector<int>* exo;
    std::vector<int> levels;
    std::vector<double> values;
    int computed = 0;
};

double eval(const Expr& e, const Context& ctx);

double eval_var(const std::string& name, const Context& ctx) {
    const int vi = ctx.spec->var_index(name);
    if (vi >= 0) {
        if (vi >= ctx.computed)
            throw ValidationError("scm: variable '" + name + "' referenced before definition");
        return ctx.values[static_cast<size_t>(vi)];
    }
    const int ei = ctx.spec->exo_index(name);
    if (ei >= 0) return static_cast<double>((*ctx.exo)[static_cast<size_t>(ei)]);
    throw ValidationError("scm: unknown variable '" + name + "'");
}

int eval_pick(const Expr& e, const Context& ctx) {
    std::string key;
    for (size_t i = 0; i < e.parents.size(); ++i) {
        // parents may be endogenous (level index) or exogenous (support index)
        int part;
        const int vi = ctx.spec->var_index(e.parents[i]);
        if (vi >= 0) {
            if (vi >= ctx.computed)
                throw ValidationError("scm: pick parent '" + e.parents[i] + "' not available");
            part = ctx.levels[static_cast<size_t>(vi)];
        } else {
            const int ei = ctx.spec->exo_index(e.parents[i]);
            if (ei < 0)
                throw ValidationError("scm: pick parent '" + e.parents[i] + "' unknown");
            part = (*ctx.exo)[static_cast<size_t>(ei)];
        }
        if (i) key += ',';
        key += std::to_string(part);
    }
    auto it = e.cpt.find(key);
    if (it == e.cpt.end())
        throw ValidationError("scm: cpt has no row for parent cell (" + key + ")");
    const int ei = ctx.spec->exo_index(e.name);
    if (ei < 0) throw ValidationError("scm: pick noise '" + e.name + "' is not exogenous");
    const int card = ctx.spec->exogenous[static_cast<size_t>(ei)].cardinality();
    const int u = (*ctx.exo)[static_cast<size_t>(ei)];
    // threshold the uniform noise index against the cumulative row
    double cum = 0.0;
    for (size_t j = 0; j < it->second.size(); ++j) {
        cum += it->second[j];
        const auto threshold = static_cast<int>(std::llround(cum * card));
        if (u < threshold) return static_cast<int>(j);
    }
    return static_cast<int>(it->second.size()) - 1;
}

double eval(const Expr& e, const Context& ctx) {
    switch (e.op) {
        case Expr::Op::constant: return e.value;
        case Expr::Op::var: return eval_var(e.name, ctx);
        case Expr::Op::add: return eval(*e.args[0], ctx) + eval(*e.args[1], ctx);
        case Expr::Op::sub: return eval(*e.args[0], ctx) - eval(*e.args[1], ctx);
        case Expr::Op::mul: return eval(*e.args[0], ctx) * eval(*e.args[1], ctx);
        case Expr::Op::div: return eval(*e.args[0], ctx) / eval(*e.args[1], ctx);
        case Expr::Op::lt: return eval(*e.args[0], ctx) < eval(*e.args[1], ctx) ? 1.0 : 0.0;
        case Expr::Op::le: return eval(*e.args[0], ctx) <= eval(*e.args[1], ctx) ? 1.0 : 0.0;
        case Expr::Op::eq: return eval(*e.args[0], ctx) == eval(*e.args[1], ctx) ? 1.0 : 0.0;
        case Expr::Op::ge: return eval(*e.args[0], ctx) >= eval(*e.args[1], ctx) ? 1.0 : 0.0;
        case Expr::Op::gt: return eval(*e.args[0], ctx) > eval(*e.args[1], ctx) ? 1.0 : 0.0;
        case Expr::Op::logic_and:
            return (eval(*e.args[0], ctx) != 0.0 && eval(*e.args[1], ctx) != 0.0) ? 1.0 : 0.0;
        case Expr::Op::logic_or:
            return (eval(*e.args[0], ctx) != 0.0 || eval(*e.args[1], ctx) != 0.0) ? 1.0 : 0.0;
        case Expr::Op::logic_not: return eval(*e.args[0], ctx) == 0.0 ? 1.0 : 0.0;
        case Expr::Op::if_else:
            return eval(*e.args[0], ctx) != 0.0 ? eval(*e.args[1], ctx) : eval(*e.args[2], ctx);
        case Expr::Op::in_set: {
            const double v = eval(*e.args[0], ctx);
            for (double s : e.set)
                if (v == s) return 1.0;
            return 0.0;
        }
        case Expr::Op::pick: return static_cast<double>(eval_pick(e, ctx));
    }
    return 0.0;
}

}  // namespace

ExprPtr parse_expr(const void* json_value) {
    return parse_expr_json(*static_cast<const json*>(json_value));
}

int ScmSpec::var_index(const std::string& n) const {
    for (size_t i = 0; i < variables.size(); ++i)
        if (variables[i].name == n) return static_cast<int>(i);
    return -1;
}

int ScmSpec::exo_index(const std::string& n) const {
    for (size_t i = 0; i < exogenous.size(); ++i)
        if (exogenous[i].name == n) return static_cast<int>(i);
    return -1;
}

int ScmSpec::protected_var() const {
    for (size_t i = 0; i < variables.size(); ++i)
        if (variables[i].role == Role::protected_attr) return static_cast<int>(i);
    return -1;
}

SfmSchema ScmSpec::schema() const {
    SfmSchema s;
    for (const auto& v : variables)
        s.columns.push_back({v.name, v.role, v.kind});
    const int x = protected_var();
    s.x0_label = variables[static_cast<size_t>(x)].levels[0];
    s.x1_label = variables[static_cast<size_t>(x)].levels[1];
    s.bins = bins;
    return s;
}

int64_t ScmSpec::joint_support() const {
    int64_t total = 1;
    for (const auto& e : exogenous) {
        total *= e.cardinality();
        if (total > (int64_t{1} << 60)) return total;  // saturate
    }
    return total;
}

void ScmSpec::validate() const {
    if (exogenous.empty()) throw SchemaError("scm: no exogenous variables");
    if (variables.empty()) throw SchemaError("scm: no variables");
    std::set<std::string> names;
    for (const auto& e : exogenous) {
        if (!names.insert(e.name).second) throw SchemaError("scm: duplicate name " + e.name);
        if (e.probs.empty()) throw SchemaError("scm: exogenous " + e.name + " has no support");
        double sum = 0.0;
        for (double p : e.probs) {
            if (p <= 0.0)
                throw SchemaError("scm: P(u) must be strictly positive (" + e.name + ")");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw SchemaError("scm: probabilities of " + e.name + " do not sum to 1");
    }
    int protected_count = 0;
    for (size_t i = 0; i < variables.size(); ++i) {
        const auto& v = variables[i];
        if (!names.insert(v.name).second) throw SchemaError("scm: duplicate name " + v.name);
        if (v.cardinality() < 1) throw SchemaError("scm: variable " + v.name + " has no levels");
        if (!v.expr) throw SchemaError("scm: variable " + v.name + " has no mechanism");
        if (v.role == Role::protected_attr) {
            ++protected_count;
            if (v.kind != Kind::categorical || v.levels.size() != 2)
                throw SchemaError("scm: protected variable must be binary categorical");
        }
        std::set<std::string> refs;
        collect_vars(v.expr, &refs);
        for (const auto& r : refs) {
            if (exo_index(r) >= 0) continue;
            const int vi = var_index(r);
            if (vi < 0) throw SchemaError("scm: " + v.name + " references unknown '" + r + "'");
            if (vi >= static_cast<int>(i))
                throw SchemaError("scm: " + v.name + " references '" + r +
                                  "' out of topological order");
            const Role parent_role = variables[static_cast<size_t>(vi)].role;
            if (v.role == Role::protected_attr)
                throw SchemaError("scm: protected variable cannot have endogenous parents");
            if (v.role == Role::confounder && parent_role != Role::confounder)
                throw SchemaError("scm: confounder " + v.name +
                                  " may only depend on confounders (SFM)");
        }
    }
    if (protected_count != 1)
        throw SchemaError("scm: need exactly one protected variable");
    schema().validate();
}

ScmSpec scm_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("scm json: ") + e.what());
    }
    ScmSpec spec;
    spec.name = j.value("name", "scm");
    spec.bins = j.value("bins", 10);
    for (const auto& je : j.at("exogenous")) {
        ExogenousSpec e;
        e.name = je.at("name").get<std::string>();
        if (je.contains("probs")) {
            for (const auto& p : je["probs"]) e.probs.push_back(p.get<double>());
        } else {
            const int card = je.at("card").get<int>();
            if (card < 1) throw SchemaError("scm: card must be >= 1");
            e.probs.assign(static_cast<size_t>(card), 1.0 / card);
        }
        spec.exogenous.push_back(std::move(e));
    }
    for (const auto& jv : j.at("variables")) {
        VariableSpec v;
        v.name = jv.at("name").get<std::string>();
        v.role = role_from_string(jv.at("role").get<std::string>());
        v.kind = kind_from_string(jv.at("kind").get<std::string>());
        if (v.kind == Kind::categorical) {
            for (const auto& l : jv.at("levels")) v.levels.push_back(l.get<std::string>());
        } else {
            for (const auto& l : jv.at("levels")) v.numeric_levels.push_back(l.get<double>());
        }
        v.expr = parse_expr_json(jv.at("expr"));
        spec.variables.push_back(std::move(v));
    }
    if (j.contains("assignments")) {
        for (const auto& ja : j["assignments"]) {
            AssignmentSpec a;
            a.name = ja.at("name").get<std::string>();
            a.k = ja.at("k").get<int>();
            a.expr = parse_expr_json(ja.at("expr"));
            spec.assignments.push_back(std::move(a));
        }
    }
    spec.validate();
    return spec;
}

ScmSpec load_scm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open scm file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return scm_from_json(buf.str());
}

std::vector<int> evaluate(const ScmSpec& spec, const Unit& unit,
                          const std::map<int, int>& interventions) {
    Context ctx;
    ctx.spec = &spec;
    ctx.exo = &unit.u;
    ctx.levels.resize(spec.variables.size());
    ctx.values.resize(spec.variables.size());
    for (size_t i = 0; i < spec.variables.size(); ++i) {
        const auto& v = spec.variables[i];
        int level;
        auto it = interventions.find(static_cast<int>(i));
        if (it != interventions.end()) {
            level = it->second;
        } else {
            const double raw = eval(*v.expr, ctx);
            level = static_cast<int>(std::llround(raw));
        }
        if (level < 0 || level >= v.cardinality())
            throw ValidationError("scm: mechanism for " + v.name +
                                  " produced out-of-range level " + std::to_string(level));
        ctx.levels[i] = level;
        ctx.values[i] = v.kind == Kind::categorical
                            ? static_cast<double>(level)
                            : v.numeric_levels[static_cast<size_t>(level)];
        ctx.computed = static_cast<int>(i) + 1;
    }
    return ctx.levels;
}

std::vector<int> potential_response(
    const ScmSpec& spec, const Unit& unit,
    const std::vector<std::pair<std::string, int>>& interventions) {
    if (unit.u.size() != spec.exogenous.size())
        throw ValidationError("scm: unit does not match exogenous list");
    for (size_t i = 0; i < unit.u.size(); ++i)
        if (unit.u[i] < 0 || unit.u[i] >= spec.exogenous[i].cardinality())
            throw ValidationError("scm: unit value outside declared support");
    std::map<int, int> by_index;
    for (const auto& [name, level] : interventions) {
        const int vi = spec.var_index(name);
        if (vi < 0)
            throw ValidationError("scm: intervention target '" + name +
                                  "' is not an endogenous variable");
        if (level < 0 || level >= spec.variables[static_cast<size_t>(vi)].cardinality())
            throw ValidationError("scm: intervention on " + name +
                                  " with non-level value " + std::to_string(level));
        by_index[vi] = level;
    }
    return evaluate(spec, unit, by_index);
}

Dataset sample(const ScmSpec& spec, size_t n, uint64_t seed) {
    spec.validate();
    const SfmSchema schema = spec.schema();
    std::vector<Column> columns(spec.variables.size());
    for (size_t i = 0; i < spec.variables.size(); ++i) {
        const auto& v = spec.variables[i];
        if (v.kind == Kind::categorical) {
            columns[i].levels = v.levels;
            columns[i].codes.reserve(n);
        } else {
            columns[i].values.reserve(n);
        }
    }
    // precompute cumulative distributions for the exogenous draws
    std::vector<std::vector<double>> cum(spec.exogenous.size());
    for (size_t e = 0; e < spec.exogenous.size(); ++e) {
        double c = 0.0;
        for (double p : spec.exogenous[e].probs) {
            c += p;
            cum[e].push_back(c);
        }
        cum[e].back() = 1.0;
    }
    Rng rng(seed);
    Unit unit;
    unit.u.resize(spec.exogenous.size());
    for (size_t r = 0; r < n; ++r) {
        for (size_t e = 0; e < spec.exogenous.size(); ++e) {
            const double x = rng.uniform();
            const auto& c = cum[e];
            unit.u[e] = static_cast<int>(
                std::lower_bound(c.begin(), c.end(), x) - c.begin());
            if (unit.u[e] >= static_cast<int>(c.size()))
                unit.u[e] = static_cast<int>(c.size()) - 1;
        }
        const std::vector<int> levels = evaluate(spec, unit);
        for (size_t i = 0; i < spec.variables.size(); ++i) {
            const auto& v = spec.variables[i];
            if (v.kind == Kind::categorical)
                columns[i].codes.push_back(levels[i]);
            else
                columns[i].values.push_back(v.numeric_levels[static_cast<size_t>(levels[i])]);
        }
    }
    return Dataset(schema, std::move(columns));
}

void for_each_unit(const ScmSpec& spec,
                   const std::function<void(const Unit&, double)>& fn) {
    Unit unit;
    unit.u.assign(spec.exogenous.size(), 0);
    for (;;) {
        double p = 1.0;
        for (size_t e = 0; e < spec.exogenous.size(); ++e)
            p *= spec.exogenous[e].probs[static_cast<size_t>(unit.u[e])];
        fn(unit, p);
        // odometer increment over the joint support
        size_t e = 0;
        for (; e < spec.exogenous.size(); ++e) {
            if (++unit.u[e] < spec.exogenous[e].cardinality()) break;
            unit.u[e] = 0;
        }
        if (e == spec.exogenous.size()) return;
    }
}

ClusterMap make_cluster_map(const ScmSpec& spec, const AssignmentSpec& assignment) {
    const ExprPtr expr = assignment.expr;
    const int k = assignment.k;
    const std::string name = assignment.name;
    const ScmSpec* spec_ptr = &spec;
    return [expr, k, name, spec_ptr](const std::vector<int>& levels) {
        Context ctx;
        ctx.spec = spec_ptr;
        static const std::vector<int> no_exo;
        ctx.exo = &no_exo;
        ctx.levels = levels;
        ctx.values.resize(levels.size());
        for (size_t i = 0; i < levels.size(); ++i) {
            const auto& v = spec_ptr->variables[i];
            ctx.values[i] = v.kind == Kind::categorical
                                ? static_cast<double>(levels[i])
                                : v.numeric_levels[static_cast<size_t>(levels[i])];
        }
        ctx.computed = static_cast<int>(levels.size());
        const int cluster = static_cast<int>(std::llround(eval(*expr, ctx)));
        if (cluster < 0 || cluster >= k)
            throw ValidationError("scm: assignment '" + name +
                                  "' produced out-of-range cluster");
        return cluster;
    };
}

}  // namespace fairclust::scm
