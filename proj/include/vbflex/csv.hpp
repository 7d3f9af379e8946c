#pragma once

// Minimal CSV helpers for the toolkit's tabular artifacts. All numeric output
// uses round-trip precision so cached artifacts reload bit-identically.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace vbflex::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw std::runtime_error("csv: missing column '" + name + "'");
    }

    std::vector<double> column_values(const std::string& name) const {
        const std::size_t c = column(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r.at(c));
        return out;
    }
};

inline Table read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv: cannot open " + path);
    Table t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        if (first) {
            while (std::getline(ss, cell, ',')) t.header.push_back(cell);
            first = false;
            continue;
        }
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw std::runtime_error("csv: non-numeric cell '" + cell + "' in " + path);
            }
        }
        if (row.size() != t.header.size())
            throw std::runtime_error("csv: ragged row in " + path);
        t.rows.push_back(std::move(row));
    }
    if (first) throw std::runtime_error("csv: empty file " + path);
    return t;
}

inline std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write(const std::string& path, const std::vector<std::string>& header,
                  const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("csv: cannot write " + path);
    for (std::size_t i = 0; i < header.size(); ++i)
        out << header[i] << (i + 1 == header.size() ? "\n" : ",");
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << format_value(row[i]) << (i + 1 == row.size() ? "\n" : ",");
    }
}

}  // namespace vbflex::csv
