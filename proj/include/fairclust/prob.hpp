#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fairclust/dataset.hpp"

namespace fairclust {

// Additive smoothing is applied to conditional tables whose conditioning
// cell holds fewer than this many observations; identification formulas
// divide by these masses, so tiny cells are stabilised and flagged.
inline constexpr int64_t kSmoothingMinCount = 5;
inline constexpr double kSmoothingAlpha = 1.0;

// Equal-frequency interior edges for a continuous column (ascending,
// deduplicated; at most bins-1 of them). bin_of maps a value to its bin.
std::vector<double> equal_frequency_edges(std::vector<double> values, int bins);
int bin_of(const std::vector<double>& edges, double v);

struct ColumnCells {
    Kind kind = Kind::categorical;
    int cardinality = 1;
    std::vector<double> edges;  // continuous only
};

// Joint discretization over an ordered list of columns; cell ids are
// mixed-radix codes over the per-column cardinalities. An empty column list
// is the trivial space with a single cell.
class CellSpace {
public:
    CellSpace() = default;

    // Edges computed from the whole dataset (shared binning policy); a plan
    // can later pin this structure so fit, apply, and audit agree on cells.
    static CellSpace build(const Dataset& d, const std::vector<int>& cols, int bins);

    // Rebuild from serialized parts (plan audit files).
    static CellSpace from_parts(std::vector<int> cols, std::vector<ColumnCells> cells);

    int64_t cardinality() const { return cardinality_; }
    bool trivial() const { return cols_.empty(); }
    int64_t cell_of(const Dataset& d, size_t row) const;
    std::vector<int> decode(int64_t id) const;

    const std::vector<int>& columns() const { return cols_; }
    const std::vector<ColumnCells>& column_cells() const { return cells_; }

private:
    std::vector<int> cols_;
    std::vector<ColumnCells> cells_;
    int64_t cardinality_ = 1;
};

// Probability table over a known finite cardinality. Zero-count levels are
// retained with probability 0; `smoothed` marks tables that fell under the
// smoothing policy.
struct ProbTable {
    std::vector<double> p;
    std::vector<std::string> labels;
    int64_t count = 0;
    bool smoothed = false;
};

ProbTable empirical_marginal(const Dataset& d, const std::string& col);

// P(target | given...) where `given` pairs a column with a categorical level
// label or, for continuous columns, a bin index rendered as a string.
ProbTable empirical_conditional(
    const Dataset& d, const std::string& target,
    const std::vector<std::pair<std::string, std::string>>& given);

// Per-protected-group cell counts for a joint space, over an optional row
// subset; the workhorse behind transport residuals.
struct GroupedCellCounts {
    std::unordered_map<int64_t, std::array<int64_t, 2>> counts;
    std::array<int64_t, 2> totals = {0, 0};
};

GroupedCellCounts count_cells_by_group(const Dataset& d, const CellSpace& space);
GroupedCellCounts count_cells_by_group(const Dataset& d, const CellSpace& space,
                                       const std::vector<uint32_t>& rows);

// L1 distance between the two group-conditional cell distributions,
// over the union of observed cells. Either group empty => -1 (undefined).
double l1_group_gap(const GroupedCellCounts& counts);

}  // namespace fairclust
