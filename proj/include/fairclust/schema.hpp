#pragma once

#include <string>
#include <vector>

#include "fairclust/common.hpp"

namespace fairclust {

enum class Role { protected_attr, confounder, mediator, ignored };
enum class Kind { categorical, continuous };

std::string to_string(Role role);
std::string to_string(Kind kind);
Role role_from_string(const std::string& s);
Kind kind_from_string(const std::string& s);

struct ColumnSpec {
    std::string name;
    Role role = Role::ignored;
    Kind kind = Kind::categorical;
};

// Column-role projection of a dataset onto (X, Z, W): the standard fairness
// model as a schema. x0 is the declared baseline level of the protected
// column, x1 the comparison level; effect signs depend on this order, so it
// is never inferred from the data.
struct SfmSchema {
    std::vector<ColumnSpec> columns;
    std::string x0_label;
    std::string x1_label;
    int bins = 10;  // equal-frequency bins for continuous probability tables

    int protected_index() const;
    std::vector<int> role_indices(Role role) const;
    std::vector<int> z_indices() const { return role_indices(Role::confounder); }
    std::vector<int> w_indices() const { return role_indices(Role::mediator); }
    int column_index(const std::string& name) const;  // -1 when absent

    // Checks the structural invariants: exactly one protected categorical
    // column, distinct x0/x1 labels, unique column names, bins >= 1.
    void validate() const;
};

SfmSchema load_schema(const std::string& path);
std::string schema_to_json(const SfmSchema& schema);
SfmSchema schema_from_json(const std::string& text);

}  // namespace fairclust
