#include "fairclust/transport.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

#include "fairclust/rng.hpp"

namespace fairclust::transport {

namespace {

// Distinct ascending values with the mean plotting position (i + 0.5) / m of
// their duplicates.
struct Knots {
    std::vector<double> vals;
    std::vector<double> pos;
};

Knots make_knots(const std::vector<double>& sorted) {
    Knots k;
    const double m = static_cast<double>(sorted.size());
    size_t i = 0;
    while (i < sorted.size()) {
        size_t j = i;
        while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
        k.vals.push_back(sorted[i]);
        k.pos.push_back((static_cast<double>(i + j) / 2.0 + 0.5) / m);
        i = j + 1;
    }
    return k;
}

// Piecewise-linear interpolation with linear extrapolation at both ends.
double interp(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    if (xs.size() == 1) return ys[0];
    size_t hi = std::lower_bound(xs.begin(), xs.end(), x) - xs.begin();
    if (hi == 0) hi = 1;
    if (hi == xs.size()) hi = xs.size() - 1;
    const size_t lo = hi - 1;
    const double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[lo] + t * (ys[hi] - ys[lo]);
}

std::vector<int64_t> apportion(int64_t m, const std::vector<double>& probs) {
    std::vector<int64_t> counts(probs.size(), 0);
    std::vector<std::pair<double, size_t>> fracs;
    int64_t assigned = 0;
    for (size_t j = 0; j < probs.size(); ++j) {
        const double target = static_cast<double>(m) * probs[j];
        counts[j] = static_cast<int64_t>(std::floor(target));
        assigned += counts[j];
        fracs.emplace_back(target - std::floor(target), j);
    }
    std::sort(fracs.begin(), fracs.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int64_t r = 0; r < m - assigned; ++r) ++counts[fracs[static_cast<size_t>(r)].second];
    return counts;
}

std::vector<double> level_distribution(const std::vector<int32_t>& codes,
                                       const std::vector<uint32_t>& rows,
                                       size_t levels) {
    std::vector<double> p(levels, 0.0);
    for (uint32_t r : rows) p[static_cast<size_t>(codes[r])] += 1.0;
    for (double& v : p) v /= static_cast<double>(rows.size());
    return p;
}

std::vector<double> gather(const std::vector<double>& values,
                           const std::vector<uint32_t>& rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (uint32_t r : rows) out.push_back(values[r]);
    return out;
}

ColumnMap fit_continuous(const std::vector<double>& src, const std::vector<double>& dst) {
    ColumnMap map;
    map.kind = Kind::continuous;
    map.quantile = fit_quantile_map(src, dst);
    return map;
}

ColumnMap fit_categorical(const std::vector<double>& src_p, const std::vector<double>& dst_p) {
    ColumnMap map;
    map.kind = Kind::categorical;
    map.coupling = fit_categorical_map(src_p, dst_p);
    return map;
}

ColumnMap identity_map(Kind kind) {
    ColumnMap map;
    map.kind = kind;
    if (kind == Kind::continuous)
        map.quantile.identity = true;
    else
        map.coupling.identity = true;
    return map;
}

// Reassigns categorical codes for `rows` per the coupling: per source level,
// integer destination counts by largest remainder, rows permuted by a seeded
// shuffle so reruns are bit-identical.
void apply_coupling(std::vector<int32_t>* codes, const std::vector<uint32_t>& rows,
                    const CategoricalCoupling& coupling, uint64_t seed) {
    if (coupling.identity) return;
    const size_t levels = coupling.levels();
    std::vector<std::vector<uint32_t>> by_level(levels);
    for (uint32_t r : rows)
        by_level[static_cast<size_t>((*codes)[r])].push_back(r);
    for (size_t l = 0; l < levels; ++l) {
        auto& members = by_level[l];
        if (members.empty()) continue;
        const auto counts =
            apportion(static_cast<int64_t>(members.size()), coupling.rows[l]);
        Rng rng(derive_seed(seed, 0x51u, static_cast<uint64_t>(l)));
        for (size_t i = members.size(); i > 1; --i)
            std::swap(members[i - 1], members[rng.below(i)]);
        size_t at = 0;
        for (size_t dst = 0; dst < counts.size(); ++dst)
            for (int64_t c = 0; c < counts[dst]; ++c)
                (*codes)[members[at++]] = static_cast<int32_t>(dst);
    }
}

int64_t z_cell_of(const Dataset& d, const CellSpace& z_cells, size_t row) {
    return z_cells.trivial() ? 0 : z_cells.cell_of(d, row);
}

Dataset apply_z_stage(const Dataset& d, const TransportPlan& plan, ApplyStats* stats) {
    const auto z_idx = d.schema().z_indices();
    bool all_identity = true;
    for (const auto& m : plan.tau_z) all_identity &= m.is_identity();
    if (z_idx.empty() || all_identity) return d;

    std::vector<Column> columns;
    columns.reserve(d.schema().columns.size());
    for (size_t i = 0; i < d.schema().columns.size(); ++i) columns.push_back(d.column(static_cast<int>(i)));
    const auto rows1 = d.group_rows(1);
    for (size_t zi = 0; zi < z_idx.size(); ++zi) {
        const int col = z_idx[zi];
        const ColumnMap& map = plan.tau_z[zi];
        if (map.is_identity()) continue;
        if (map.kind == Kind::continuous) {
            auto& values = columns[static_cast<size_t>(col)].values;
            for (uint32_t r : rows1) {
                bool extra = false;
                values[r] = map.quantile.apply(values[r], &extra);
                if (extra && stats) ++stats->extrapolated;
            }
        } else {
            apply_coupling(&columns[static_cast<size_t>(col)].codes, rows1, map.coupling,
                           derive_seed(plan.seed, 0x7au /* z stage */, static_cast<uint64_t>(col)));
        }
    }
    return d.with_columns(std::move(columns));
}

Dataset apply_w_stage(const Dataset& inter, const TransportPlan& plan, ApplyStats* stats) {
    const auto w_idx = inter.schema().w_indices();
    if (w_idx.empty() || plan.tau_w.empty()) return inter;

    std::vector<Column> columns;
    columns.reserve(inter.schema().columns.size());
    for (size_t i = 0; i < inter.schema().columns.size(); ++i)
        columns.push_back(inter.column(static_cast<int>(i)));

    const std::vector<int> groups = plan.flags.nie ? std::vector<int>{1} : std::vector<int>{0, 1};
    for (int x : groups) {
        std::map<int64_t, std::vector<uint32_t>> by_cell;
        for (uint32_t r : inter.group_rows(x))
            by_cell[z_cell_of(inter, plan.z_cells, r)].push_back(r);
        for (const auto& [cell, rows] : by_cell) {
            auto it = plan.tau_w.find({x, cell});
            if (it == plan.tau_w.end()) continue;  // no map fitted for this cell
            const auto& maps = it->second;
            for (size_t wi = 0; wi < w_idx.size(); ++wi) {
                const int col = w_idx[wi];
                const ColumnMap& map = maps[wi];
                if (map.is_identity()) continue;
                if (map.kind == Kind::continuous) {
                    auto& values = columns[static_cast<size_t>(col)].values;
                    for (uint32_t r : rows) {
                        bool extra = false;
                        values[r] = map.quantile.apply(values[r], &extra);
                        if (extra && stats) ++stats->extrapolated;
                    }
                } else {
                    apply_coupling(&columns[static_cast<size_t>(col)].codes, rows, map.coupling,
                                   derive_seed(plan.seed,
                                               0x3bu + static_cast<uint64_t>(x),
                                               static_cast<uint64_t>(cell),
                                               static_cast<uint64_t>(col)));
                }
            }
        }
    }
    return inter.with_columns(std::move(columns));
}

}  // namespace

double QuantileMap::apply(double v, bool* extrapolated) const {
    if (identity) return v;
    if (extrapolated && (src.empty() || v < src.front() || v > src.back()))
        *extrapolated = true;
    if (src.size() == 1) return mapped[0] + (v - src[0]);
    return interp(src, mapped, v);
}

QuantileMap fit_quantile_map(const std::vector<double>& source,
                             const std::vector<double>& target) {
    if (source.empty() || target.empty())
        throw ValidationError("transport: quantile map needs non-empty samples");
    std::vector<double> s = source;
    std::vector<double> t = target;
    std::sort(s.begin(), s.end());
    std::sort(t.begin(), t.end());

    QuantileMap map;
    if (s == t) {
        map.identity = true;
        const Knots ks = make_knots(s);
        map.src = ks.vals;
        map.mapped = ks.vals;
        return map;
    }
    const Knots ks = make_knots(s);
    const Knots kt = make_knots(t);
    map.src = ks.vals;
    map.mapped.reserve(ks.vals.size());
    for (double p : ks.pos) map.mapped.push_back(interp(kt.pos, kt.vals, p));
    return map;
}

CategoricalCoupling fit_categorical_map(const std::vector<double>& source_p,
                                        const std::vector<double>& target_p) {
    if (source_p.size() != target_p.size() || source_p.empty())
        throw ValidationError("transport: level distributions must share a support");
    const size_t levels = source_p.size();
    CategoricalCoupling coupling;
    coupling.rows.assign(levels, std::vector<double>(levels, 0.0));
    double moved = 0.0;
    std::vector<double> deficit(levels, 0.0);
    for (size_t i = 0; i < levels; ++i) {
        moved += std::max(source_p[i] - target_p[i], 0.0);
        deficit[i] = std::max(target_p[i] - source_p[i], 0.0);
    }
    if (moved <= 0.0) {
        coupling.identity = true;
        for (size_t i = 0; i < levels; ++i) coupling.rows[i][i] = 1.0;
        return coupling;
    }
    for (size_t i = 0; i < levels; ++i) {
        if (source_p[i] <= 0.0) {
            coupling.rows[i][i] = 1.0;  // unused row, keep it a distribution
            continue;
        }
        const double stay = std::min(source_p[i], target_p[i]);
        const double excess = source_p[i] - stay;
        coupling.rows[i][i] = stay / source_p[i];
        if (excess > 0.0)
            for (size_t j = 0; j < levels; ++j)
                coupling.rows[i][j] += (excess / source_p[i]) * (deficit[j] / moved);
    }
    return coupling;
}

TransportPlan fit_plan(const Dataset& d, EffectFlags flags, uint64_t seed) {
    const SfmSchema& schema = d.schema();
    const auto z_idx = schema.z_indices();
    const auto w_idx = schema.w_indices();

    TransportPlan plan;
    plan.flags = flags;
    plan.seed = seed;
    plan.bins = schema.bins;
    plan.z_cells = CellSpace::build(d, z_idx, schema.bins);
    plan.w_cells = CellSpace::build(d, w_idx, schema.bins);

    if (d.group_size(0) == 0 || d.group_size(1) == 0)
        throw ValidationError("transport: both protected groups must be non-empty");
    if (flags.se && z_idx.empty())
        plan.warnings.push_back("SE flag set with no confounders; tau^z is the identity");
    if (flags.nie && w_idx.empty())
        plan.warnings.push_back("NIE flag set with no mediators; tau^w is empty");

    const auto rows0 = d.group_rows(0);
    const auto rows1 = d.group_rows(1);

    // tau^z: transport Z|x1 onto Z|x0 (per column) when the SE flag is on,
    // otherwise the identity map.
    for (int col : z_idx) {
        const auto& spec = schema.columns[static_cast<size_t>(col)];
        if (!flags.se) {
            plan.tau_z.push_back(identity_map(spec.kind));
        } else if (spec.kind == Kind::continuous) {
            plan.tau_z.push_back(fit_continuous(gather(d.column(col).values, rows1),
                                                gather(d.column(col).values, rows0)));
        } else {
            const size_t levels = d.column(col).levels.size();
            plan.tau_z.push_back(
                fit_categorical(level_distribution(d.column(col).codes, rows1, levels),
                                level_distribution(d.column(col).codes, rows0, levels)));
        }
    }

    const Dataset inter = apply_z_stage(d, plan, nullptr);

    // Group rows per conditioning cell: x1 rows by their adapted tau^z(Z)
    // cell, x0 rows by their original cell (x0 is never moved by tau^z).
    auto cells_of_group = [&](const Dataset& data, int x) {
        std::map<int64_t, std::vector<uint32_t>> by_cell;
        for (uint32_t r : data.group_rows(x))
            by_cell[z_cell_of(data, plan.z_cells, r)].push_back(r);
        return by_cell;
    };

    auto fit_cell_maps = [&](const Dataset& src_data, const std::vector<uint32_t>& src_rows,
                             const Dataset& dst_data, const std::vector<uint32_t>& dst_rows) {
        std::vector<ColumnMap> maps;
        for (int col : w_idx) {
            const auto& spec = schema.columns[static_cast<size_t>(col)];
            if (spec.kind == Kind::continuous) {
                maps.push_back(fit_continuous(gather(src_data.column(col).values, src_rows),
                                              gather(dst_data.column(col).values, dst_rows)));
            } else {
                const size_t levels = src_data.column(col).levels.size();
                maps.push_back(fit_categorical(
                    level_distribution(src_data.column(col).codes, src_rows, levels),
                    level_distribution(dst_data.column(col).codes, dst_rows, levels)));
            }
        }
        return maps;
    };

    if (!w_idx.empty()) {
        if (flags.nie) {
            // Transport W | x1, tau^z(Z) onto W | x0, Z.
            const auto src_cells = cells_of_group(inter, 1);
            const auto dst_cells = cells_of_group(d, 0);
            for (const auto& [cell, src_rows] : src_cells) {
                auto it = dst_cells.find(cell);
                if (it == dst_cells.end() || it->second.empty()) {
                    plan.fallback_cells.push_back(cell);
                    plan.warnings.push_back("z-cell " + std::to_string(cell) +
                                            " has no x0 rows; using the unconditional map");
                    plan.tau_w[{1, cell}] = fit_cell_maps(inter, src_rows, d, rows0);
                } else {
                    plan.tau_w[{1, cell}] = fit_cell_maps(inter, src_rows, d, it->second);
                }
            }
        } else {
            // Else-branch: transport W | x, tau^z(Z) onto W | x, Z within each
            // group. A near-identity when SE = 0, fitted literally.
            for (int x : {0, 1}) {
                const auto src_cells = cells_of_group(inter, x);
                const auto dst_cells = cells_of_group(d, x);
                const auto group_rows = d.group_rows(x);
                for (const auto& [cell, src_rows] : src_cells) {
                    auto it = dst_cells.find(cell);
                    if (it == dst_cells.end() || it->second.empty()) {
                        plan.fallback_cells.push_back(cell);
                        plan.warnings.push_back("z-cell " + std::to_string(cell) +
                                                " empty in group " + std::to_string(x) +
                                                "; using the unconditional map");
                        plan.tau_w[{x, cell}] = fit_cell_maps(inter, src_rows, d, group_rows);
                    } else {
                        plan.tau_w[{x, cell}] = fit_cell_maps(inter, src_rows, d, it->second);
                    }
                }
            }
        }
    }

    // Residuals are measured on the adapted data itself, so the plan's
    // deltas are exactly what a re-audit of the output would find.
    const Dataset adapted = apply_w_stage(inter, plan, nullptr);
    if (!z_idx.empty()) {
        const double gap = l1_group_gap(count_cells_by_group(adapted, plan.z_cells));
        plan.residual_delta_z = std::max(gap, 0.0);
    }
    if (!w_idx.empty()) {
        std::map<int64_t, GroupedCellCounts> per_cell;
        for (size_t r = 0; r < adapted.n(); ++r) {
            const int64_t cell = z_cell_of(adapted, plan.z_cells, r);
            auto& counts = per_cell[cell];
            ++counts.counts[plan.w_cells.cell_of(adapted, r)][static_cast<size_t>(adapted.x_code(r))];
            ++counts.totals[static_cast<size_t>(adapted.x_code(r))];
        }
        for (const auto& [cell, counts] : per_cell) {
            const double gap = l1_group_gap(counts);
            // a cell seen in only one group carries the worst-case gap
            plan.residual_delta_w[cell] = gap < 0.0 ? 2.0 : gap;
        }
    }
    return plan;
}

Dataset apply_plan(const Dataset& d, const TransportPlan& plan, ApplyStats* stats) {
    if (d.schema().z_indices().size() != plan.tau_z.size() && !plan.tau_z.empty())
        throw ValidationError("transport: plan does not match the dataset schema");
    const Dataset inter = apply_z_stage(d, plan, stats);
    return apply_w_stage(inter, plan, stats);
}

namespace {

using nlohmann::ordered_json;

ordered_json cells_to_json(const CellSpace& space, const Dataset& d) {
    ordered_json out = ordered_json::array();
    for (size_t i = 0; i < space.columns().size(); ++i) {
        const int col = space.columns()[i];
        const auto& cc = space.column_cells()[i];
        ordered_json jc;
        jc["column"] = d.schema().columns[static_cast<size_t>(col)].name;
        jc["kind"] = to_string(cc.kind);
        jc["cardinality"] = cc.cardinality;
        if (cc.kind == Kind::continuous) {
            ordered_json edges = ordered_json::array();
            for (double e : cc.edges) edges.push_back(e);
            jc["edges"] = edges;
        }
        out.push_back(jc);
    }
    return out;
}

CellSpace cells_from_json(const nlohmann::json& j, const Dataset& d) {
    std::vector<int> cols;
    std::vector<ColumnCells> cells;
    for (const auto& jc : j) {
        const std::string name = jc.at("column").get<std::string>();
        const int idx = d.schema().column_index(name);
        if (idx < 0) throw ValidationError("plan: unknown column " + name);
        ColumnCells cc;
        cc.kind = kind_from_string(jc.at("kind").get<std::string>());
        cc.cardinality = jc.at("cardinality").get<int>();
        if (jc.contains("edges"))
            for (const auto& e : jc["edges"]) cc.edges.push_back(e.get<double>());
        cols.push_back(idx);
        cells.push_back(std::move(cc));
    }
    return CellSpace::from_parts(std::move(cols), std::move(cells));
}

ordered_json column_map_to_json(const ColumnMap& map) {
    ordered_json j;
    j["kind"] = to_string(map.kind);
    j["identity"] = map.is_identity();
    if (map.kind == Kind::continuous) {
        if (!map.quantile.identity) {
            j["knots_src"] = map.quantile.src;
            j["knots_mapped"] = map.quantile.mapped;
        }
    } else if (!map.coupling.identity) {
        j["rows"] = map.coupling.rows;
    }
    return j;
}

ColumnMap column_map_from_json(const nlohmann::json& j) {
    ColumnMap map;
    map.kind = kind_from_string(j.at("kind").get<std::string>());
    const bool identity = j.at("identity").get<bool>();
    if (map.kind == Kind::continuous) {
        map.quantile.identity = identity;
        if (!identity) {
            map.quantile.src = j.at("knots_src").get<std::vector<double>>();
            map.quantile.mapped = j.at("knots_mapped").get<std::vector<double>>();
        }
    } else {
        map.coupling.identity = identity;
        if (!identity)
            map.coupling.rows = j.at("rows").get<std::vector<std::vector<double>>>();
    }
    return map;
}

}  // namespace

std::string plan_to_json(const TransportPlan& plan, const Dataset& fit_data) {
    ordered_json j;
    j["flags"] = {{"nde", plan.flags.nde}, {"nie", plan.flags.nie}, {"se", plan.flags.se}};
    j["seed"] = plan.seed;
    j["bins"] = plan.bins;
    j["z_cells"] = cells_to_json(plan.z_cells, fit_data);
    j["w_cells"] = cells_to_json(plan.w_cells, fit_data);
    j["tau_z"] = ordered_json::array();
    for (const auto& map : plan.tau_z) j["tau_z"].push_back(column_map_to_json(map));
    j["tau_w"] = ordered_json::array();
    for (const auto& [key, maps] : plan.tau_w) {
        ordered_json entry;
        entry["group"] = key.first;
        entry["z_cell"] = key.second;
        entry["maps"] = ordered_json::array();
        for (const auto& map : maps) entry["maps"].push_back(column_map_to_json(map));
        j["tau_w"].push_back(entry);
    }
    j["residual_delta_z"] = plan.residual_delta_z;
    j["residual_delta_w"] = ordered_json::array();
    for (const auto& [cell, delta] : plan.residual_delta_w)
        j["residual_delta_w"].push_back({{"z_cell", cell}, {"delta", delta}});
    j["fallback_cells"] = plan.fallback_cells;
    j["warnings"] = plan.warnings;
    return j.dump(2) + "\n";
}

TransportPlan plan_from_json(const std::string& text, const Dataset& d) {
    nlohmann::json j = nlohmann::json::parse(text);
    TransportPlan plan;
    plan.flags.nde = j.at("flags").at("nde").get<bool>();
    plan.flags.nie = j.at("flags").at("nie").get<bool>();
    plan.flags.se = j.at("flags").at("se").get<bool>();
    plan.seed = j.at("seed").get<uint64_t>();
    plan.bins = j.at("bins").get<int>();
    plan.z_cells = cells_from_json(j.at("z_cells"), d);
    plan.w_cells = cells_from_json(j.at("w_cells"), d);
    for (const auto& jm : j.at("tau_z")) plan.tau_z.push_back(column_map_from_json(jm));
    for (const auto& je : j.at("tau_w")) {
        std::vector<ColumnMap> maps;
        for (const auto& jm : je.at("maps")) maps.push_back(column_map_from_json(jm));
        plan.tau_w[{je.at("group").get<int>(), je.at("z_cell").get<int64_t>()}] = std::move(maps);
    }
    plan.residual_delta_z = j.at("residual_delta_z").get<double>();
    for (const auto& je : j.at("residual_delta_w"))
        plan.residual_delta_w[je.at("z_cell").get<int64_t>()] = je.at("delta").get<double>();
    for (const auto& c : j.at("fallback_cells")) plan.fallback_cells.push_back(c.get<int64_t>());
    for (const auto& w : j.at("warnings")) plan.warnings.push_back(w.get<std::string>());
    return plan;
}

}  // namespace fairclust::transport
