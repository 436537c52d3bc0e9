#include "fairclust/schema.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "fairclust/common.hpp"

namespace fairclust {

std::string to_string(Role role) {
    switch (role) {
        case Role::protected_attr: return "protected";
        case Role::confounder: return "confounder";
        case Role::mediator: return "mediator";
        case Role::ignored: return "ignored";
    }
    return "ignored";
}

std::string to_string(Kind kind) {
    return kind == Kind::categorical ? "categorical" : "continuous";
}

Role role_from_string(const std::string& s) {
    if (s == "protected") return Role::protected_attr;
    if (s == "confounder") return Role::confounder;
    if (s == "mediator") return Role::mediator;
    if (s == "ignored") return Role::ignored;
    throw SchemaError("unknown column role: " + s);
}

Kind kind_from_string(const std::string& s) {
    if (s == "categorical") return Kind::categorical;
    if (s == "continuous") return Kind::continuous;
    throw SchemaError("unknown column kind: " + s);
}

int SfmSchema::protected_index() const {
    for (size_t i = 0; i < columns.size(); ++i)
        if (columns[i].role == Role::protected_attr) return static_cast<int>(i);
    return -1;
}

std::vector<int> SfmSchema::role_indices(Role role) const {
    std::vector<int> out;
    for (size_t i = 0; i < columns.size(); ++i)
        if (columns[i].role == role) out.push_back(static_cast<int>(i));
    return out;
}

int SfmSchema::column_index(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i)
        if (columns[i].name == name) return static_cast<int>(i);
    return -1;
}

void SfmSchema::validate() const {
    if (columns.empty()) throw SchemaError("schema has no columns");
    std::set<std::string> names;
    int protected_count = 0;
    for (const auto& col : columns) {
        if (col.name.empty()) throw SchemaError("schema column with empty name");
        if (!names.insert(col.name).second)
            throw SchemaError("duplicate column name: " + col.name);
        if (col.role == Role::protected_attr) {
            ++protected_count;
            if (col.kind != Kind::categorical)
                throw SchemaError("protected column must be categorical: " + col.name);
        }
    }
    if (protected_count != 1)
        throw SchemaError("schema must declare exactly one protected column, got " +
                          std::to_string(protected_count));
    if (x0_label.empty() || x1_label.empty())
        throw SchemaError("schema must declare x0 and x1 labels");
    if (x0_label == x1_label)
        throw SchemaError("x0 and x1 labels must differ");
    if (bins < 1) throw SchemaError("bins must be >= 1");
}

std::string schema_to_json(const SfmSchema& schema) {
    nlohmann::ordered_json j;
    j["columns"] = nlohmann::ordered_json::array();
    for (const auto& col : schema.columns) {
        j["columns"].push_back({{"name", col.name},
                                {"role", to_string(col.role)},
                                {"kind", to_string(col.kind)}});
    }
    j["x0"] = schema.x0_label;
    j["x1"] = schema.x1_label;
    j["bins"] = schema.bins;
    return j.dump(2) + "\n";
}

SfmSchema schema_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("schema json: ") + e.what());
    }
    SfmSchema schema;
    if (!j.contains("columns") || !j["columns"].is_array())
        throw SchemaError("schema json: missing columns array");
    for (const auto& jc : j["columns"]) {
        ColumnSpec col;
        col.name = jc.at("name").get<std::string>();
        col.role = role_from_string(jc.at("role").get<std::string>());
        col.kind = kind_from_string(jc.at("kind").get<std::string>());
        schema.columns.push_back(col);
    }
    schema.x0_label = j.at("x0").get<std::string>();
    schema.x1_label = j.at("x1").get<std::string>();
    schema.bins = j.value("bins", 10);
    schema.validate();
    return schema;
}

SfmSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open schema file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return schema_from_json(buf.str());
}

}  // namespace fairclust
