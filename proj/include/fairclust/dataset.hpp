#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fairclust/schema.hpp"

namespace fairclust {

// One column of a dataset. Categorical columns store a frozen, sorted level
// vocabulary plus per-row codes; continuous columns store finite doubles.
// The protected column is special-cased: code 0 is always the schema's x0
// level and code 1 its x1 level.
struct Column {
    std::vector<std::string> levels;
    std::vector<int32_t> codes;
    std::vector<double> values;
};

// Immutable mixed-type table with a frozen SfmSchema. Adaptations produce
// new Datasets; instances are safe to share across threads.
class Dataset {
public:
    Dataset(SfmSchema schema, std::vector<Column> columns,
            std::vector<int> export_order = {});

    const SfmSchema& schema() const { return schema_; }
    size_t n() const { return n_; }
    const Column& column(int idx) const { return columns_[static_cast<size_t>(idx)]; }
    const Column& column(const std::string& name) const;

    int x_index() const { return x_index_; }
    int x_code(size_t row) const {
        return columns_[static_cast<size_t>(x_index_)].codes[row];
    }
    size_t group_size(int x) const { return group_sizes_[static_cast<size_t>(x)]; }
    std::vector<uint32_t> group_rows(int x) const;

    // Same schema and row count, replacement column data (transport output).
    Dataset with_columns(std::vector<Column> columns) const;

    // Same data under a different discretization default.
    Dataset with_bins(int bins) const;

    const std::vector<int>& export_order() const { return export_order_; }

private:
    SfmSchema schema_;
    std::vector<Column> columns_;
    std::vector<int> export_order_;  // schema-column index per output position
    size_t n_ = 0;
    int x_index_ = -1;
    size_t group_sizes_[2] = {0, 0};

    void check() const;
};

struct LoadReport {
    size_t rows_read = 0;
    size_t rows_kept = 0;
    size_t rows_dropped = 0;
    std::vector<std::string> warnings;  // first few drop reasons, never silent
};

// Ingests a header-bearing CSV under the given schema. Rows with missing or
// unparseable cells are dropped and counted. Categorical vocabularies are
// frozen from the observed data (sorted); the protected column must show
// exactly the schema's two declared levels.
std::pair<Dataset, LoadReport> load_dataset(const std::string& path,
                                            const SfmSchema& schema);

void export_csv(const Dataset& d, const std::string& path);

}  // namespace fairclust
