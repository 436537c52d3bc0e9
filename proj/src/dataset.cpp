#include "fairclust/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>

#include "fairclust/common.hpp"
#include "fairclust/csv.hpp"

namespace fairclust {

Dataset::Dataset(SfmSchema schema, std::vector<Column> columns,
                 std::vector<int> export_order)
    : schema_(std::move(schema)),
      columns_(std::move(columns)),
      export_order_(std::move(export_order)) {
    schema_.validate();
    if (export_order_.empty()) {
        export_order_.resize(schema_.columns.size());
        for (size_t i = 0; i < export_order_.size(); ++i)
            export_order_[i] = static_cast<int>(i);
    }
    x_index_ = schema_.protected_index();
    check();
    n_ = schema_.columns[0].kind == Kind::categorical ? columns_[0].codes.size()
                                                      : columns_[0].values.size();
    const auto& x = columns_[static_cast<size_t>(x_index_)];
    for (int32_t code : x.codes) ++group_sizes_[static_cast<size_t>(code)];
}

void Dataset::check() const {
    if (columns_.size() != schema_.columns.size())
        throw ValidationError("dataset: column count does not match schema");
    size_t n = SIZE_MAX;
    for (size_t i = 0; i < columns_.size(); ++i) {
        const auto& spec = schema_.columns[i];
        const auto& col = columns_[i];
        const size_t rows = spec.kind == Kind::categorical ? col.codes.size()
                                                           : col.values.size();
        if (n == SIZE_MAX) n = rows;
        if (rows != n)
            throw ValidationError("dataset: ragged column " + spec.name);
        if (spec.kind == Kind::categorical) {
            for (int32_t code : col.codes)
                if (code < 0 || static_cast<size_t>(code) >= col.levels.size())
                    throw ValidationError("dataset: code out of range in " + spec.name);
        } else {
            for (double v : col.values)
                if (!std::isfinite(v))
                    throw ValidationError("dataset: non-finite value in " + spec.name);
        }
    }
    const auto& x = columns_[static_cast<size_t>(x_index_)];
    if (x.levels.size() != 2 || x.levels[0] != schema_.x0_label ||
        x.levels[1] != schema_.x1_label)
        throw ValidationError("dataset: protected column levels must be {x0, x1}");
}

const Column& Dataset::column(const std::string& name) const {
    const int idx = schema_.column_index(name);
    if (idx < 0) throw ValidationError("dataset: no column named " + name);
    return columns_[static_cast<size_t>(idx)];
}

std::vector<uint32_t> Dataset::group_rows(int x) const {
    std::vector<uint32_t> rows;
    rows.reserve(group_sizes_[static_cast<size_t>(x)]);
    const auto& codes = columns_[static_cast<size_t>(x_index_)].codes;
    for (uint32_t i = 0; i < n_; ++i)
        if (codes[i] == x) rows.push_back(i);
    return rows;
}

Dataset Dataset::with_columns(std::vector<Column> columns) const {
    return Dataset(schema_, std::move(columns), export_order_);
}

Dataset Dataset::with_bins(int bins) const {
    SfmSchema schema = schema_;
    schema.bins = bins;
    return Dataset(std::move(schema), columns_, export_order_);
}

namespace {

bool parse_finite_double(const std::string& s, double* out) {
    if (s.empty()) return false;
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end != begin + s.size()) return false;
    if (!std::isfinite(v)) return false;
    *out = v;
    return true;
}

}  // namespace

std::pair<Dataset, LoadReport> load_dataset(const std::string& path,
                                            const SfmSchema& schema) {
    schema.validate();
    const csv::Table table = csv::read_file(path);
    LoadReport report;
    report.rows_read = table.rows.size();

    // Map schema columns onto the file header. Non-ignored columns must be
    // present; ignored columns may be absent (they are then dropped from the
    // loaded schema).
    std::map<std::string, int> header_pos;
    for (size_t i = 0; i < table.header.size(); ++i) {
        if (!header_pos.emplace(table.header[i], static_cast<int>(i)).second)
            throw SchemaError("duplicate CSV header: " + table.header[i]);
    }
    for (const auto& name : table.header)
        if (schema.column_index(name) < 0)
            throw SchemaError("CSV column '" + name +
                              "' has no role in the schema (declare it ignored)");

    SfmSchema loaded = schema;
    loaded.columns.clear();
    std::vector<int> file_pos;
    for (const auto& spec : schema.columns) {
        auto it = header_pos.find(spec.name);
        if (it == header_pos.end()) {
            if (spec.role == Role::ignored) continue;
            throw SchemaError("CSV is missing required column: " + spec.name);
        }
        loaded.columns.push_back(spec);
        file_pos.push_back(it->second);
    }
    loaded.validate();

    // First pass: keep rows whose cells all parse; drop (and count) the rest.
    const size_t ncols = loaded.columns.size();
    std::vector<std::vector<std::string>> kept_cat(ncols);
    std::vector<std::vector<double>> kept_num(ncols);
    auto warn = [&](const std::string& msg) {
        if (report.warnings.size() < 10) report.warnings.push_back(msg);
    };
    for (size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() != table.header.size()) {
            ++report.rows_dropped;
            warn("row " + std::to_string(r + 1) + ": wrong field count");
            continue;
        }
        bool ok = true;
        std::vector<double> nums(ncols, 0.0);
        for (size_t c = 0; c < ncols && ok; ++c) {
            const std::string& cell = row[static_cast<size_t>(file_pos[c])];
            if (cell.empty()) {
                ok = false;
                warn("row " + std::to_string(r + 1) + ": missing value in " +
                     loaded.columns[c].name);
            } else if (loaded.columns[c].kind == Kind::continuous &&
                       !parse_finite_double(cell, &nums[c])) {
                ok = false;
                warn("row " + std::to_string(r + 1) + ": unparseable numeric '" +
                     cell + "' in " + loaded.columns[c].name);
            }
        }
        if (!ok) {
            ++report.rows_dropped;
            continue;
        }
        for (size_t c = 0; c < ncols; ++c) {
            if (loaded.columns[c].kind == Kind::categorical)
                kept_cat[c].push_back(row[static_cast<size_t>(file_pos[c])]);
            else
                kept_num[c].push_back(nums[c]);
        }
        ++report.rows_kept;
    }
    if (report.rows_kept == 0) throw ValidationError("dataset is empty after ingestion");

    // Freeze categorical vocabularies (sorted, so the coding is independent
    // of row order). The protected column is pinned to {x0, x1}.
    const int x_idx = loaded.protected_index();
    std::vector<Column> columns(ncols);
    for (size_t c = 0; c < ncols; ++c) {
        if (loaded.columns[c].kind == Kind::continuous) {
            columns[c].values = std::move(kept_num[c]);
            continue;
        }
        std::set<std::string> observed(kept_cat[c].begin(), kept_cat[c].end());
        if (static_cast<int>(c) == x_idx) {
            if (observed.size() != 2)
                throw SchemaError("protected column '" + loaded.columns[c].name +
                                  "' has " + std::to_string(observed.size()) +
                                  " observed levels, need exactly 2");
            if (!observed.count(loaded.x0_label) || !observed.count(loaded.x1_label))
                throw SchemaError("protected column levels do not match schema x0/x1");
            columns[c].levels = {loaded.x0_label, loaded.x1_label};
        } else {
            columns[c].levels.assign(observed.begin(), observed.end());
        }
        std::map<std::string, int32_t> code_of;
        for (size_t l = 0; l < columns[c].levels.size(); ++l)
            code_of[columns[c].levels[l]] = static_cast<int32_t>(l);
        columns[c].codes.reserve(kept_cat[c].size());
        for (const auto& label : kept_cat[c]) columns[c].codes.push_back(code_of[label]);
    }

    // Export order mirrors the file header so re-export round-trips.
    std::vector<int> export_order;
    for (const auto& name : table.header) {
        const int idx = loaded.column_index(name);
        if (idx >= 0) export_order.push_back(idx);
    }
    return {Dataset(std::move(loaded), std::move(columns), std::move(export_order)),
            report};
}

void export_csv(const Dataset& d, const std::string& path) {
    csv::Table table;
    for (int idx : d.export_order())
        table.header.push_back(d.schema().columns[static_cast<size_t>(idx)].name);
    table.rows.resize(d.n());
    for (size_t r = 0; r < d.n(); ++r) table.rows[r].reserve(d.export_order().size());
    for (int idx : d.export_order()) {
        const auto& spec = d.schema().columns[static_cast<size_t>(idx)];
        const auto& col = d.column(idx);
        for (size_t r = 0; r < d.n(); ++r) {
            if (spec.kind == Kind::categorical)
                table.rows[r].push_back(col.levels[static_cast<size_t>(col.codes[r])]);
            else
                table.rows[r].push_back(fmt_double(col.values[r]));
        }
    }
    csv::write_file(path, table);
}

}  // namespace fairclust
