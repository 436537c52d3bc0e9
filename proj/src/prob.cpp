#include "fairclust/prob.hpp"

#include <algorithm>
#include <cmath>

#include "fairclust/common.hpp"

namespace fairclust {

std::vector<double> equal_frequency_edges(std::vector<double> values, int bins) {
    if (values.empty()) throw ValidationError("binning: empty column");
    if (bins < 1) throw ValidationError("binning: bins must be >= 1");
    std::sort(values.begin(), values.end());
    std::vector<double> edges;
    const size_t n = values.size();
    for (int b = 1; b < bins; ++b) {
        // boundary between bins b-1 and b at the ceil(n*b/bins)-th order stat
        const size_t idx = (n * static_cast<size_t>(b)) / static_cast<size_t>(bins);
        if (idx == 0 || idx >= n) continue;
        const double edge = values[idx - 1];
        if (edges.empty() || edge > edges.back()) edges.push_back(edge);
    }
    return edges;
}

int bin_of(const std::vector<double>& edges, double v) {
    // values <= edge[i] fall in bin i; above the last edge in the final bin
    return static_cast<int>(std::lower_bound(edges.begin(), edges.end(), v) -
                            edges.begin());
}

CellSpace CellSpace::build(const Dataset& d, const std::vector<int>& cols, int bins) {
    CellSpace space;
    space.cols_ = cols;
    for (int idx : cols) {
        const auto& spec = d.schema().columns[static_cast<size_t>(idx)];
        ColumnCells cc;
        cc.kind = spec.kind;
        if (spec.kind == Kind::categorical) {
            cc.cardinality = static_cast<int>(d.column(idx).levels.size());
        } else {
            cc.edges = equal_frequency_edges(d.column(idx).values, bins);
            cc.cardinality = static_cast<int>(cc.edges.size()) + 1;
        }
        space.cells_.push_back(std::move(cc));
        space.cardinality_ *= space.cells_.back().cardinality;
    }
    return space;
}

CellSpace CellSpace::from_parts(std::vector<int> cols, std::vector<ColumnCells> cells) {
    CellSpace space;
    space.cols_ = std::move(cols);
    space.cells_ = std::move(cells);
    for (const auto& cc : space.cells_) space.cardinality_ *= cc.cardinality;
    return space;
}

int64_t CellSpace::cell_of(const Dataset& d, size_t row) const {
    int64_t id = 0;
    for (size_t i = 0; i < cols_.size(); ++i) {
        const auto& cc = cells_[i];
        const auto& col = d.column(cols_[i]);
        const int part = cc.kind == Kind::categorical
                             ? col.codes[row]
                             : bin_of(cc.edges, col.values[row]);
        id = id * cc.cardinality + part;
    }
    return id;
}

std::vector<int> CellSpace::decode(int64_t id) const {
    std::vector<int> parts(cols_.size(), 0);
    for (size_t i = cols_.size(); i-- > 0;) {
        parts[i] = static_cast<int>(id % cells_[i].cardinality);
        id /= cells_[i].cardinality;
    }
    return parts;
}

namespace {

std::vector<std::string> cell_labels(const Dataset& d, int col_idx, int bins) {
    const auto& spec = d.schema().columns[static_cast<size_t>(col_idx)];
    if (spec.kind == Kind::categorical) return d.column(col_idx).levels;
    const auto edges = equal_frequency_edges(d.column(col_idx).values, bins);
    std::vector<std::string> labels;
    for (size_t b = 0; b <= edges.size(); ++b)
        labels.push_back("bin" + std::to_string(b));
    return labels;
}

ProbTable from_counts(std::vector<int64_t> counts, std::vector<std::string> labels,
                      int64_t total) {
    ProbTable t;
    t.labels = std::move(labels);
    t.count = total;
    t.p.resize(counts.size(), 0.0);
    const auto m = static_cast<double>(counts.size());
    if (total >= kSmoothingMinCount) {
        for (size_t i = 0; i < counts.size(); ++i)
            t.p[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
    } else {
        t.smoothed = true;
        const double denom = static_cast<double>(total) + kSmoothingAlpha * m;
        for (size_t i = 0; i < counts.size(); ++i)
            t.p[i] = (static_cast<double>(counts[i]) + kSmoothingAlpha) / denom;
    }
    return t;
}

}  // namespace

ProbTable empirical_marginal(const Dataset& d, const std::string& col) {
    if (d.n() == 0) throw ValidationError("empirical_marginal: empty dataset");
    const int idx = d.schema().column_index(col);
    if (idx < 0) throw ValidationError("empirical_marginal: no column " + col);
    const int bins = d.schema().bins;
    CellSpace space = CellSpace::build(d, {idx}, bins);
    std::vector<int64_t> counts(static_cast<size_t>(space.cardinality()), 0);
    for (size_t r = 0; r < d.n(); ++r) ++counts[static_cast<size_t>(space.cell_of(d, r))];
    // marginals are never smoothed: they are exact relative frequencies
    ProbTable t;
    t.labels = cell_labels(d, idx, bins);
    t.count = static_cast<int64_t>(d.n());
    t.p.resize(counts.size());
    for (size_t i = 0; i < counts.size(); ++i)
        t.p[i] = static_cast<double>(counts[i]) / static_cast<double>(d.n());
    return t;
}

ProbTable empirical_conditional(
    const Dataset& d, const std::string& target,
    const std::vector<std::pair<std::string, std::string>>& given) {
    if (d.n() == 0) throw ValidationError("empirical_conditional: empty dataset");
    const int target_idx = d.schema().column_index(target);
    if (target_idx < 0) throw ValidationError("empirical_conditional: no column " + target);
    const int bins = d.schema().bins;

    // Resolve the conditioning cell per column.
    struct Cond {
        int col;
        Kind kind;
        int32_t code = 0;
        int bin = 0;
        std::vector<double> edges;
    };
    std::vector<Cond> conds;
    for (const auto& [name, level] : given) {
        const int idx = d.schema().column_index(name);
        if (idx < 0) throw ValidationError("empirical_conditional: no column " + name);
        Cond c;
        c.col = idx;
        c.kind = d.schema().columns[static_cast<size_t>(idx)].kind;
        if (c.kind == Kind::categorical) {
            const auto& levels = d.column(idx).levels;
            auto it = std::find(levels.begin(), levels.end(), level);
            if (it == levels.end())
                throw ValidationError("empirical_conditional: unknown level '" + level +
                                      "' for " + name);
            c.code = static_cast<int32_t>(it - levels.begin());
        } else {
            c.edges = equal_frequency_edges(d.column(idx).values, bins);
            c.bin = std::stoi(level);
            if (c.bin < 0 || c.bin > static_cast<int>(c.edges.size()))
                throw ValidationError("empirical_conditional: bin out of range for " + name);
        }
        conds.push_back(std::move(c));
    }

    CellSpace target_space = CellSpace::build(d, {target_idx}, bins);
    std::vector<int64_t> counts(static_cast<size_t>(target_space.cardinality()), 0);
    int64_t total = 0;
    for (size_t r = 0; r < d.n(); ++r) {
        bool match = true;
        for (const auto& c : conds) {
            if (c.kind == Kind::categorical) {
                if (d.column(c.col).codes[r] != c.code) { match = false; break; }
            } else {
                if (bin_of(c.edges, d.column(c.col).values[r]) != c.bin) { match = false; break; }
            }
        }
        if (!match) continue;
        ++total;
        ++counts[static_cast<size_t>(target_space.cell_of(d, r))];
    }
    return from_counts(std::move(counts), cell_labels(d, target_idx, bins), total);
}

GroupedCellCounts count_cells_by_group(const Dataset& d, const CellSpace& space) {
    GroupedCellCounts out;
    for (size_t r = 0; r < d.n(); ++r) {
        const int x = d.x_code(r);
        ++out.counts[space.cell_of(d, r)][static_cast<size_t>(x)];
        ++out.totals[static_cast<size_t>(x)];
    }
    return out;
}

GroupedCellCounts count_cells_by_group(const Dataset& d, const CellSpace& space,
                                       const std::vector<uint32_t>& rows) {
    GroupedCellCounts out;
    for (uint32_t r : rows) {
        const int x = d.x_code(r);
        ++out.counts[space.cell_of(d, r)][static_cast<size_t>(x)];
        ++out.totals[static_cast<size_t>(x)];
    }
    return out;
}

double l1_group_gap(const GroupedCellCounts& counts) {
    if (counts.totals[0] == 0 || counts.totals[1] == 0) return -1.0;
    double gap = 0.0;
    for (const auto& [cell, c] : counts.counts) {
        const double p0 = static_cast<double>(c[0]) / static_cast<double>(counts.totals[0]);
        const double p1 = static_cast<double>(c[1]) / static_cast<double>(counts.totals[1]);
        gap += std::abs(p1 - p0);
    }
    return gap;
}

}  // namespace fairclust
