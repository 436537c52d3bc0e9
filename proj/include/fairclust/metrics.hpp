#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fairclust/clustering.hpp"
#include "fairclust/dataset.hpp"
#include "fairclust/prob.hpp"
#include "fairclust/transport.hpp"

namespace fairclust::metrics {

// Frequency tables shared by all plug-in estimators: one pass over the rows
// builds every conditional the identification formulas need, so the exact
// algebraic relations between them (and hence the decomposition identity)
// hold by construction.
struct EstimatorTables {
    int k = 0;
    int64_t n = 0;
    int64_t n_x[2] = {0, 0};
    std::vector<int64_t> labels_x[2];  // [x][cluster]

    struct Cell {
        int64_t n[2] = {0, 0};
        std::vector<int64_t> nk[2];
    };
    // (z,w) joint cells keyed by z_cell * w_cardinality + w_cell
    std::unordered_map<int64_t, Cell> zw;
    std::unordered_map<int64_t, Cell> z;
    int64_t w_cardinality = 1;
};

EstimatorTables build_tables(const Dataset& d, const std::vector<int32_t>& labels,
                             int k, const CellSpace& z_cells, const CellSpace& w_cells);
EstimatorTables build_tables(const Dataset& d, const std::vector<int32_t>& labels,
                             int k, const CellSpace& z_cells, const CellSpace& w_cells,
                             const std::vector<uint32_t>& rows);

// Point estimates for every cluster at once, plus the count of smoothed or
// empty cells the estimators touched. `nie` follows the x0-conditioned
// identification; `nie_reversed` is the opposite subscript order used by the
// decomposition identity.
struct PointEffects {
    std::vector<double> tv, nde, nie, nie_reversed, exp_se;
    int flagged_cells = 0;
};

PointEffects point_effects(const EstimatorTables& t);

// Spec-level single-effect views (cluster is 1-based).
double estimate_tv_point(const Dataset& d, const cluster::Assignment& a, int cluster);
double estimate_nde_point(const Dataset& d, const cluster::Assignment& a, int cluster);
double estimate_nie_point(const Dataset& d, const cluster::Assignment& a, int cluster);
double estimate_exp_se_point(const Dataset& d, const cluster::Assignment& a, int cluster);

// Lemma bounds, evaluated from the same tables the estimators use plus the
// plan's stored transport residuals.
double nie_bound(const EstimatorTables& t, const transport::TransportPlan& plan,
                 int cluster_index0);
double exp_se_bound(const EstimatorTables& t, const transport::TransportPlan& plan,
                    int cluster_index0, bool ftu_assignment);

struct EffectEstimate {
    double point = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int n_inner = 0;
    int n_outer = 0;
    int flagged_cells = 0;
    bool degenerate = false;  // single resample; interval collapses
};

struct ClusterReport {
    int cluster = 0;  // 1-based
    EffectEstimate tv, nde, nie, exp_se;
    std::optional<double> nie_bound;
    std::optional<double> exp_se_bound;
    double nie_reversed = 0.0;            // decomposition-convention NIE point
    double decomposition_residual = 0.0;  // TV - (NDE - NIE_rev + ExpSE)
};

struct EffectReport {
    int k = 0;
    std::vector<ClusterReport> clusters;
    int flagged_cells = 0;
    std::vector<std::string> notes;
};

struct BootstrapParams {
    int n_inner = 100;
    int n_outer = 5;
};

// Percentile bootstrap over n_outer row resamples, each refit n_inner times
// on nested resamples (tables are refit per draw; labels travel with rows).
// Point estimates come from the full data. Deterministic given the seed and
// invariant to worker count.
EffectReport full_report(const Dataset& d_original, const Dataset& d_measure,
                         const cluster::Assignment& a,
                         const transport::TransportPlan* plan, int k,
                         const BootstrapParams& params, uint64_t seed);

std::string report_to_json(const EffectReport& report);

}  // namespace fairclust::metrics
