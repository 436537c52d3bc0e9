#include "fairclust/csv.hpp"

#include <fstream>
#include <sstream>

#include "fairclust/common.hpp"

namespace fairclust::csv {

Table parse(const std::string& text) {
    Table out;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool record_started = false;

    auto end_field = [&] {
        record.push_back(field);
        field.clear();
    };
    auto end_record = [&] {
        end_field();
        if (out.header.empty() && out.rows.empty()) {
            out.header = record;
        } else {
            out.rows.push_back(record);
        }
        record.clear();
        record_started = false;
    };

    for (size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        switch (c) {
            case '"':
                in_quotes = true;
                record_started = true;
                break;
            case ',':
                end_field();
                record_started = true;
                break;
            case '\r':
                break;
            case '\n':
                if (record_started || !field.empty() || !record.empty()) end_record();
                break;
            default:
                field += c;
                record_started = true;
                break;
        }
    }
    if (in_quotes) throw ValidationError("csv: unterminated quoted field");
    if (record_started || !field.empty() || !record.empty()) end_record();
    return out;
}

Table read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("csv: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::string escape_field(const std::string& field) {
    const bool needs_quotes =
        field.find_first_of(",\"\r\n") != std::string::npos;
    if (!needs_quotes) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

void write_file(const std::string& path, const Table& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("csv: cannot write " + path);
    auto write_row = [&](const std::vector<std::string>& row) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << escape_field(row[i]);
        }
        out << '\n';
    };
    write_row(table.header);
    for (const auto& row : table.rows) write_row(row);
}

}  // namespace fairclust::csv
