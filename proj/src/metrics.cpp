#include "fairclust/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "fairclust/parallel.hpp"
#include "fairclust/rng.hpp"

namespace fairclust::metrics {

namespace {

void tally_row(EstimatorTables* t, const Dataset& d, const std::vector<int32_t>& labels,
               const CellSpace& z_cells, const CellSpace& w_cells, size_t r) {
    const int x = d.x_code(r);
    const int32_t label = labels[r];
    const int64_t zc = z_cells.trivial() ? 0 : z_cells.cell_of(d, r);
    const int64_t wc = w_cells.trivial() ? 0 : w_cells.cell_of(d, r);
    ++t->n;
    ++t->n_x[x];
    ++t->labels_x[x][static_cast<size_t>(label)];

    auto& zw = t->zw[zc * t->w_cardinality + wc];
    if (zw.nk[0].empty()) {
        zw.nk[0].assign(static_cast<size_t>(t->k), 0);
        zw.nk[1].assign(static_cast<size_t>(t->k), 0);
    }
    ++zw.n[x];
    ++zw.nk[x][static_cast<size_t>(label)];

    auto& z = t->z[zc];
    if (z.nk[0].empty()) {
        z.nk[0].assign(static_cast<size_t>(t->k), 0);
        z.nk[1].assign(static_cast<size_t>(t->k), 0);
    }
    ++z.n[x];
    ++z.nk[x][static_cast<size_t>(label)];
}

EstimatorTables make_tables(const Dataset& d, const std::vector<int32_t>& labels, int k,
                            const CellSpace& z_cells, const CellSpace& w_cells) {
    if (labels.size() != d.n())
        throw ValidationError("metrics: assignment length does not match the dataset");
    if (k < 1) throw ValidationError("metrics: K must be >= 1");
    for (int32_t l : labels)
        if (l < 0 || l >= k) throw ValidationError("metrics: label out of range");
    EstimatorTables t;
    t.k = k;
    t.labels_x[0].assign(static_cast<size_t>(k), 0);
    t.labels_x[1].assign(static_cast<size_t>(k), 0);
    t.w_cardinality = std::max<int64_t>(w_cells.cardinality(), 1);
    return t;
}

// P(label = k | x, cell) with the shared smoothing policy: raw frequency for
// well-populated cells, additive smoothing below the threshold (uniform for
// empty cells).
double label_prob(const EstimatorTables::Cell& cell, int x, int k0, int k) {
    const int64_t n = cell.n[x];
    const int64_t nk = cell.nk[x][static_cast<size_t>(k0)];
    if (n >= kSmoothingMinCount)
        return static_cast<double>(nk) / static_cast<double>(n);
    return (static_cast<double>(nk) + kSmoothingAlpha) /
           (static_cast<double>(n) + kSmoothingAlpha * static_cast<double>(k));
}

}  // namespace

EstimatorTables build_tables(const Dataset& d, const std::vector<int32_t>& labels,
                             int k, const CellSpace& z_cells, const CellSpace& w_cells) {
    EstimatorTables t = make_tables(d, labels, k, z_cells, w_cells);
    for (size_t r = 0; r < d.n(); ++r) tally_row(&t, d, labels, z_cells, w_cells, r);
    return t;
}

EstimatorTables build_tables(const Dataset& d, const std::vector<int32_t>& labels,
                             int k, const CellSpace& z_cells, const CellSpace& w_cells,
                             const std::vector<uint32_t>& rows) {
    EstimatorTables t = make_tables(d, labels, k, z_cells, w_cells);
    for (uint32_t r : rows) tally_row(&t, d, labels, z_cells, w_cells, r);
    return t;
}

PointEffects point_effects(const EstimatorTables& t) {
    if (t.n_x[0] == 0 || t.n_x[1] == 0)
        throw ValidationError("metrics: a protected group is empty");
    const int k = t.k;
    PointEffects out;
    out.tv.assign(static_cast<size_t>(k), 0.0);
    out.nde.assign(static_cast<size_t>(k), 0.0);
    out.nie.assign(static_cast<size_t>(k), 0.0);
    out.nie_reversed.assign(static_cast<size_t>(k), 0.0);
    out.exp_se.assign(static_cast<size_t>(k), 0.0);

    const auto n = static_cast<double>(t.n);
    const double n_x0 = static_cast<double>(t.n_x[0]);
    const double n_x1 = static_cast<double>(t.n_x[1]);

    for (int c = 0; c < k; ++c)
        out.tv[static_cast<size_t>(c)] =
            static_cast<double>(t.labels_x[1][static_cast<size_t>(c)]) / n_x1 -
            static_cast<double>(t.labels_x[0][static_cast<size_t>(c)]) / n_x0;

    // flagged cells: any conditioning cell below the smoothing threshold
    for (const auto& [key, cell] : t.zw) {
        (void)key;
        if (cell.n[0] < kSmoothingMinCount) ++out.flagged_cells;
        if (cell.n[1] < kSmoothingMinCount) ++out.flagged_cells;
    }
    for (const auto& [key, cell] : t.z) {
        (void)key;
        if (cell.n[0] < kSmoothingMinCount) ++out.flagged_cells;
        if (cell.n[1] < kSmoothingMinCount) ++out.flagged_cells;
    }

    // NDE and both NIE subscript orders share the (z,w) sweep.
    for (const auto& [key, cell] : t.zw) {
        const int64_t zc = key / t.w_cardinality;
        const auto& zcell = t.z.at(zc);
        const double pz = static_cast<double>(zcell.n[0] + zcell.n[1]) / n;
        const double w_x0 = zcell.n[0] > 0 ? static_cast<double>(cell.n[0]) /
                                                 static_cast<double>(zcell.n[0])
                                           : 0.0;
        const double w_x1 = zcell.n[1] > 0 ? static_cast<double>(cell.n[1]) /
                                                 static_cast<double>(zcell.n[1])
                                           : 0.0;
        // a z-cell unseen in one group contributes no mediator bracket
        const bool bracket_ok = zcell.n[0] > 0 && zcell.n[1] > 0;
        for (int c = 0; c < k; ++c) {
            const double pc_x0 = label_prob(cell, 0, c, k);
            const double pc_x1 = label_prob(cell, 1, c, k);
            if (zcell.n[0] > 0)
                out.nde[static_cast<size_t>(c)] += (pc_x1 - pc_x0) * w_x0 * pz;
            if (bracket_ok) {
                out.nie[static_cast<size_t>(c)] += pc_x0 * (w_x1 - w_x0) * pz;
                out.nie_reversed[static_cast<size_t>(c)] += pc_x1 * (w_x0 - w_x1) * pz;
            }
        }
    }

    // Exp-SE via the spurious-effect expansion over Z cells.
    for (const auto& [zc, zcell] : t.z) {
        (void)zc;
        const double pz = static_cast<double>(zcell.n[0] + zcell.n[1]) / n;
        const double pz_x0 = static_cast<double>(zcell.n[0]) / n_x0;
        const double pz_x1 = static_cast<double>(zcell.n[1]) / n_x1;
        for (int c = 0; c < k; ++c) {
            const double pc_x0 = label_prob(zcell, 0, c, k);
            const double pc_x1 = label_prob(zcell, 1, c, k);
            out.exp_se[static_cast<size_t>(c)] +=
                pc_x1 * (pz_x1 - pz) - pc_x0 * (pz_x0 - pz);
        }
    }
    return out;
}

namespace {

PointEffects default_point_effects(const Dataset& d, const cluster::Assignment& a) {
    const auto& schema = d.schema();
    const CellSpace z_cells = CellSpace::build(d, schema.z_indices(), schema.bins);
    const CellSpace w_cells = CellSpace::build(d, schema.w_indices(), schema.bins);
    return point_effects(build_tables(d, a.labels, a.k, z_cells, w_cells));
}

size_t cluster_index0(const cluster::Assignment& a, int cluster) {
    if (cluster < 1 || cluster > a.k)
        throw ValidationError("metrics: cluster index out of range");
    return static_cast<size_t>(cluster - 1);
}

}  // namespace

double estimate_tv_point(const Dataset& d, const cluster::Assignment& a, int cluster) {
    return default_point_effects(d, a).tv[cluster_index0(a, cluster)];
}

double estimate_nde_point(const Dataset& d, const cluster::Assignment& a, int cluster) {
    return default_point_effects(d, a).nde[cluster_index0(a, cluster)];
}

double estimate_nie_point(const Dataset& d, const cluster::Assignment& a, int cluster) {
    return default_point_effects(d, a).nie[cluster_index0(a, cluster)];
}

double estimate_exp_se_point(const Dataset& d, const cluster::Assignment& a, int cluster) {
    return default_point_effects(d, a).exp_se[cluster_index0(a, cluster)];
}

double nie_bound(const EstimatorTables& t, const transport::TransportPlan& plan,
                 int cluster_index0) {
    // sum_z P(z) * sup_w P(c_k | x0, z, w) * delta_w(z), with the sup taken
    // over the same smoothed conditionals the estimator itself uses.
    std::unordered_map<int64_t, double> sup_by_z;
    for (const auto& [key, cell] : t.zw) {
        const int64_t zc = key / t.w_cardinality;
        const double pc = label_prob(cell, 0, cluster_index0, t.k);
        auto [it, inserted] = sup_by_z.emplace(zc, pc);
        if (!inserted) it->second = std::max(it->second, pc);
    }
    double bound = 0.0;
    const auto n = static_cast<double>(t.n);
    for (const auto& [zc, zcell] : t.z) {
        const double pz = static_cast<double>(zcell.n[0] + zcell.n[1]) / n;
        double delta = 0.0;
        if (!plan.residual_delta_w.empty()) {
            auto it = plan.residual_delta_w.find(zc);
            delta = it != plan.residual_delta_w.end() ? it->second : 2.0;
        }
        auto sup_it = sup_by_z.find(zc);
        const double sup = sup_it != sup_by_z.end() ? sup_it->second : 0.0;
        bound += pz * sup * delta;
    }
    return bound;
}

double exp_se_bound(const EstimatorTables& t, const transport::TransportPlan& plan,
                    int cluster_index0, bool ftu_assignment) {
    if (!ftu_assignment)
        throw HypothesisViolation(
            "exp_se_bound requires a fairness-through-unawareness assignment");
    double sup = 0.0;
    for (const auto& [zc, zcell] : t.z) {
        (void)zc;
        const int64_t n = zcell.n[0] + zcell.n[1];
        const int64_t nk = zcell.nk[0][static_cast<size_t>(cluster_index0)] +
                           zcell.nk[1][static_cast<size_t>(cluster_index0)];
        if (n > 0) sup = std::max(sup, static_cast<double>(nk) / static_cast<double>(n));
    }
    return sup * plan.residual_delta_z;
}

namespace {

struct Percentile {
    double lo, hi;
};

Percentile percentile_interval(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    auto quantile = [&](double p) {
        const double idx = p * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<size_t>(std::floor(idx));
        const size_t hi = std::min(lo + 1, values.size() - 1);
        const double frac = idx - std::floor(idx);
        return values[lo] + frac * (values[hi] - values[lo]);
    };
    return {quantile(0.025), quantile(0.975)};
}

std::vector<uint32_t> resample(size_t n, Rng* rng) {
    std::vector<uint32_t> rows(n);
    for (size_t i = 0; i < n; ++i)
        rows[i] = static_cast<uint32_t>(rng->below(static_cast<uint64_t>(n)));
    return rows;
}

}  // namespace

EffectReport full_report(const Dataset& d_original, const Dataset& d_measure,
                         const cluster::Assignment& a,
                         const transport::TransportPlan* plan, int k,
                         const BootstrapParams& params, uint64_t seed) {
    if (d_original.n() != d_measure.n())
        throw ValidationError("full_report: datasets are not row-aligned");
    if (params.n_inner < 1 || params.n_outer < 1)
        throw ValidationError("full_report: bootstrap repetitions must be >= 1");
    // The adaptation never touches X: the disparity audited by TV must be
    // identical on both views.
    for (size_t r = 0; r < d_original.n(); ++r)
        if (d_original.x_code(r) != d_measure.x_code(r))
            throw ValidationError("full_report: protected column differs between views");

    const auto& schema = d_measure.schema();
    const CellSpace z_cells = plan ? plan->z_cells
                                   : CellSpace::build(d_measure, schema.z_indices(), schema.bins);
    const CellSpace w_cells = plan ? plan->w_cells
                                   : CellSpace::build(d_measure, schema.w_indices(), schema.bins);

    const EstimatorTables tables = build_tables(d_measure, a.labels, k, z_cells, w_cells);
    const PointEffects points = point_effects(tables);

    // Outer resamples fix the rows "after the potential outcomes have been
    // obtained"; inner repetitions refit the probability tables on nested
    // resamples of each outer draw.
    const size_t n = d_measure.n();
    std::vector<std::vector<uint32_t>> outer(static_cast<size_t>(params.n_outer));
    for (int o = 0; o < params.n_outer; ++o) {
        Rng rng(derive_seed(seed, 0xb001u, static_cast<uint64_t>(o)));
        outer[static_cast<size_t>(o)] = resample(n, &rng);
    }

    const int reps = params.n_inner * params.n_outer;
    std::vector<PointEffects> rep_effects(static_cast<size_t>(reps));
    parallel_tasks(reps, [&](int rep) {
        const int o = rep / params.n_inner;
        const int i = rep % params.n_inner;
        const auto& base = outer[static_cast<size_t>(o)];
        for (uint64_t attempt = 0;; ++attempt) {
            Rng rng(derive_seed(seed, 0xb002u,
                                static_cast<uint64_t>(o) * 131071u + static_cast<uint64_t>(i),
                                attempt));
            std::vector<uint32_t> rows(n);
            for (size_t j = 0; j < n; ++j)
                rows[j] = base[rng.below(static_cast<uint64_t>(n))];
            try {
                rep_effects[static_cast<size_t>(rep)] = point_effects(
                    build_tables(d_measure, a.labels, k, z_cells, w_cells, rows));
                break;
            } catch (const ValidationError&) {
                if (attempt >= 64) throw;  // a group is essentially absent
            }
        }
    });

    EffectReport report;
    report.k = k;
    report.flagged_cells = points.flagged_cells;
    const bool degenerate = reps == 1;
    if (degenerate)
        report.notes.push_back("degenerate bootstrap: a single resample, interval collapses");

    auto make_estimate = [&](double point, auto metric_of) {
        EffectEstimate e;
        e.point = point;
        e.n_inner = params.n_inner;
        e.n_outer = params.n_outer;
        e.flagged_cells = points.flagged_cells;
        e.degenerate = degenerate;
        std::vector<double> values;
        values.reserve(static_cast<size_t>(reps));
        for (const auto& pe : rep_effects) values.push_back(metric_of(pe));
        const Percentile pct = percentile_interval(std::move(values));
        // percentile intervals over resamples need not contain the full-data
        // point; widen so ci_low <= point <= ci_high always holds
        e.ci_low = std::min(pct.lo, point);
        e.ci_high = std::max(pct.hi, point);
        return e;
    };

    for (int c = 0; c < k; ++c) {
        const auto ci = static_cast<size_t>(c);
        ClusterReport cr;
        cr.cluster = c + 1;
        cr.tv = make_estimate(points.tv[ci], [&](const PointEffects& p) { return p.tv[ci]; });
        cr.nde = make_estimate(points.nde[ci], [&](const PointEffects& p) { return p.nde[ci]; });
        cr.nie = make_estimate(points.nie[ci], [&](const PointEffects& p) { return p.nie[ci]; });
        cr.exp_se =
            make_estimate(points.exp_se[ci], [&](const PointEffects& p) { return p.exp_se[ci]; });
        cr.nie_reversed = points.nie_reversed[ci];
        cr.decomposition_residual =
            points.tv[ci] - (points.nde[ci] - points.nie_reversed[ci] + points.exp_se[ci]);
        if (plan) {
            cr.nie_bound = nie_bound(tables, *plan, c);
            if (a.ftu) cr.exp_se_bound = exp_se_bound(tables, *plan, c, a.ftu);
        }
        report.clusters.push_back(std::move(cr));
    }
    if (plan && !a.ftu)
        report.notes.push_back(
            "exp_se_bound omitted: assignment uses the protected attribute (Lemma "
            "hypothesis violated)");
    return report;
}

std::string report_to_json(const EffectReport& report) {
    nlohmann::ordered_json j;
    j["k"] = report.k;
    j["flagged_cells"] = report.flagged_cells;
    j["notes"] = report.notes;
    j["clusters"] = nlohmann::ordered_json::array();
    auto estimate_json = [](const EffectEstimate& e) {
        nlohmann::ordered_json je;
        je["point"] = e.point;
        je["ci_low"] = e.ci_low;
        je["ci_high"] = e.ci_high;
        je["n_inner"] = e.n_inner;
        je["n_outer"] = e.n_outer;
        je["degenerate"] = e.degenerate;
        return je;
    };
    for (const auto& c : report.clusters) {
        nlohmann::ordered_json jc;
        jc["cluster"] = c.cluster;
        jc["tv"] = estimate_json(c.tv);
        jc["nde"] = estimate_json(c.nde);
        jc["nie"] = estimate_json(c.nie);
        jc["exp_se"] = estimate_json(c.exp_se);
        jc["nie_reversed"] = c.nie_reversed;
        jc["decomposition_residual"] = c.decomposition_residual;
        if (c.nie_bound) jc["nie_bound"] = *c.nie_bound;
        else jc["nie_bound"] = nullptr;
        if (c.exp_se_bound) jc["exp_se_bound"] = *c.exp_se_bound;
        else jc["exp_se_bound"] = nullptr;
        j["clusters"].push_back(jc);
    }
    return j.dump(2) + "\n";
}

}  // namespace fairclust::metrics
