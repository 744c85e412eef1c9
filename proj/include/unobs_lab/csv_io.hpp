#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "unobs_lab/errors.hpp"
#include "unobs_lab/model_core.hpp"

namespace unobs_lab {

/// Formats a real with 17 significant digits (round-trip exact).
inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

inline double parse_real(std::string_view s, std::size_t line, std::string_view column) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw ParseError(line, "column '" + std::string(column) + "': not a real number: '" + std::string(s) + "'");
    return v;
}

inline long long parse_integer(std::string_view s, std::size_t line, std::string_view column) {
    s = trim(s);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw ParseError(line, "column '" + std::string(column) + "': not an integer: '" + std::string(s) + "'");
    return v;
}

}  // namespace detail

/// Reads the long format `cluster,unit,y,x1,...,xp`. Clusters keep the
/// order of first appearance; rows within a cluster are ordered by `unit`.
inline Dataset read_dataset(std::istream& in) {
    std::string raw;
    std::size_t line_no = 0;

    auto next_line = [&](std::string& out) -> bool {
        while (std::getline(in, out)) {
            ++line_no;
            if (!out.empty() && out.back() == '\r') out.pop_back();
            if (line_no == 1 && out.starts_with("\xEF\xBB\xBF")) out.erase(0, 3);
            if (!detail::trim(out).empty()) return true;
        }
        return false;
    };

    if (!next_line(raw)) throw ParseError(0, "empty input: missing header");
    const auto header = detail::split_commas(raw);
    if (header.size() < 4 || detail::trim(header[0]) != "cluster" || detail::trim(header[1]) != "unit" ||
        detail::trim(header[2]) != "y")
        throw ParseError(line_no, "header must be 'cluster,unit,y,x1,...,xp' with p >= 1");
    std::vector<std::string> names;
    for (std::size_t k = 3; k < header.size(); ++k) names.emplace_back(detail::trim(header[k]));
    const std::size_t p = names.size();

    struct Row {
        long long unit;
        std::size_t line;
        double y;
        std::vector<double> x;
    };
    std::vector<std::string> order;
    std::map<std::string, std::vector<Row>> rows;

    while (next_line(raw)) {
        const auto fields = detail::split_commas(raw);
        if (fields.size() != header.size())
            throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                          std::to_string(fields.size()));
        std::string key(detail::trim(fields[0]));
        if (key.empty()) throw ParseError(line_no, "empty cluster key");
        Row row{detail::parse_integer(fields[1], line_no, "unit"), line_no,
                detail::parse_real(fields[2], line_no, "y"), {}};
        row.x.reserve(p);
        for (std::size_t k = 0; k < p; ++k) row.x.push_back(detail::parse_real(fields[3 + k], line_no, names[k]));
        auto [it, inserted] = rows.try_emplace(key);
        if (inserted) order.push_back(key);
        it->second.push_back(std::move(row));
    }
    if (order.empty()) throw ParseError(line_no, "no data rows");

    std::vector<ClusterData> clusters;
    clusters.reserve(order.size());
    for (const auto& key : order) {
        auto& rs = rows.at(key);
        std::stable_sort(rs.begin(), rs.end(), [](const Row& a, const Row& b) { return a.unit < b.unit; });
        for (std::size_t r = 1; r < rs.size(); ++r)
            if (rs[r].unit == rs[r - 1].unit)
                throw ParseError(rs[r].line, "duplicate unit " + std::to_string(rs[r].unit) + " in cluster '" + key + "'");
        const auto n = static_cast<Eigen::Index>(rs.size());
        Eigen::VectorXd y(n);
        Eigen::MatrixXd x(n, static_cast<Eigen::Index>(p));
        for (Eigen::Index r = 0; r < n; ++r) {
            const auto& row = rs[static_cast<std::size_t>(r)];
            y(r) = row.y;
            for (std::size_t k = 0; k < p; ++k) x(r, static_cast<Eigen::Index>(k)) = row.x[k];
        }
        clusters.emplace_back(key, std::move(y), std::move(x));
    }
    return Dataset(std::move(clusters), std::move(names));
}

inline Dataset read_dataset_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(0, "cannot open '" + path + "'");
    return read_dataset(in);
}

/// Writes the long format; `unit` is the 1-based row index within the cluster.
inline void write_dataset(std::ostream& out, const Dataset& data) {
    out << "cluster,unit,y";
    for (const auto& name : data.covariate_names()) out << ',' << name;
    out << '\n';
    for (const auto& c : data.clusters()) {
        for (std::size_t r = 0; r < c.size(); ++r) {
            const auto row = static_cast<Eigen::Index>(r);
            out << c.id() << ',' << (r + 1) << ',' << format_real(c.y()(row));
            for (Eigen::Index k = 0; k < c.x().cols(); ++k) out << ',' << format_real(c.x()(row, k));
            out << '\n';
        }
    }
}

}  // namespace unobs_lab
