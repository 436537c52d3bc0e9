#pragma once

#include <string>
#include <vector>

namespace fairclust::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// RFC-4180 style reader: quoted fields, embedded commas/newlines/quotes,
// CRLF or LF line endings, UTF-8 passed through untouched.
Table read_file(const std::string& path);
Table parse(const std::string& text);

std::string escape_field(const std::string& field);
void write_file(const std::string& path, const Table& table);

}  // namespace fairclust::csv
