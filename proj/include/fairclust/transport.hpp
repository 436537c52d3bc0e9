#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fairclust/common.hpp"
#include "fairclust/dataset.hpp"
#include "fairclust/prob.hpp"

namespace fairclust::transport {

// Monotone 1-D empirical quantile map: sends the p-th quantile of the source
// sample to the p-th quantile of the target, with linear interpolation
// between order statistics and linear extrapolation at the boundaries. This
// is the one-dimensional optimal transport map for convex costs.
struct QuantileMap {
    std::vector<double> src;     // distinct ascending source knots
    std::vector<double> mapped;  // image of each knot
    bool identity = false;       // source and target samples coincide

    double apply(double v, bool* extrapolated = nullptr) const;
};

QuantileMap fit_quantile_map(const std::vector<double>& source,
                             const std::vector<double>& target);

// Minimum-total-movement coupling between two level distributions: levels
// keep their shared mass; excess mass is reapportioned across deficit levels
// (any such assignment is optimal under 0/1 cost; apportioning is
// proportional in level order to stay deterministic).
struct CategoricalCoupling {
    std::vector<std::vector<double>> rows;  // rows[src][dst], each a distribution
    bool identity = false;

    size_t levels() const { return rows.size(); }
};

CategoricalCoupling fit_categorical_map(const std::vector<double>& source_p,
                                        const std::vector<double>& target_p);

struct ColumnMap {
    Kind kind = Kind::continuous;
    QuantileMap quantile;
    CategoricalCoupling coupling;

    bool is_identity() const {
        return kind == Kind::continuous ? quantile.identity : coupling.identity;
    }
};

// The fitted tau^z / tau^w maps plus post-application residuals. The cell
// structure (bin edges) is pinned here at fit time so fitting, application,
// residuals, and downstream audits all agree on conditioning cells.
struct TransportPlan {
    EffectFlags flags;
    uint64_t seed = 0;
    int bins = 10;

    CellSpace z_cells;  // over confounder columns, edges from the fit dataset
    CellSpace w_cells;  // over mediator columns, for the residual audit

    std::vector<ColumnMap> tau_z;  // per Z column, identity when flags.se == 0

    // tau_w keyed by (group, z-cell). With flags.nie == 1 only group 1 maps
    // exist (x1 transported onto x0); with flags.nie == 0 both groups carry
    // within-group maps per the algorithm's else-branch.
    std::map<std::pair<int, int64_t>, std::vector<ColumnMap>> tau_w;

    // Cross-group alignment residuals measured on the adapted data:
    // delta_z = ||P(Z|x1) - P(Z|x0)||_1, delta_w[z] the per-cell joint gap.
    double residual_delta_z = 0.0;
    std::map<int64_t, double> residual_delta_w;

    std::vector<int64_t> fallback_cells;  // z-cells fit from pooled groups
    std::vector<std::string> warnings;
};

struct ApplyStats {
    size_t extrapolated = 0;  // continuous values mapped outside knot range
};

TransportPlan fit_plan(const Dataset& d, EffectFlags flags, uint64_t seed);

// Rows with X = x1 get Z replaced by tau^z(Z) and W by tau^w(W | z-cell);
// x0 rows are returned unchanged unless the plan carries within-group maps.
// The X column itself is never altered.
Dataset apply_plan(const Dataset& d, const TransportPlan& plan,
                   ApplyStats* stats = nullptr);

std::string plan_to_json(const TransportPlan& plan, const Dataset& fit_data);
TransportPlan plan_from_json(const std::string& text, const Dataset& d);

}  // namespace fairclust::transport
