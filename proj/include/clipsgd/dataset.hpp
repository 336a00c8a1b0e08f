#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "clipsgd/matrix.hpp"
#include "clipsgd/rng.hpp"

namespace clipsgd {

/// Supervised dataset on a declared compact domain: every input lies in
/// [-x_max, x_max]^d and every regression target in [-y_max, y_max]. The
/// trainers refuse data that violates its own declaration.
struct Dataset {
    std::vector<Vector> inputs;
    std::vector<double> targets; // real targets or integer class labels
    bool classification = false;
    int num_classes = 0; // classification only
    double x_max = 0.0;
    double y_max = 0.0;

    std::size_t size() const { return inputs.size(); }
    int dim() const { return inputs.empty() ? 0 : static_cast<int>(inputs[0].size()); }

    int label(std::size_t i) const { return static_cast<int>(targets[i]); }

    void check_bounds() const {
        if (inputs.empty()) throw std::invalid_argument("dataset: empty");
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (inputs[i].size() != inputs[0].size())
                throw std::invalid_argument("dataset: ragged record " + std::to_string(i));
            for (double v : inputs[i])
                if (!std::isfinite(v) || std::abs(v) > x_max)
                    throw std::invalid_argument("dataset: record " + std::to_string(i) +
                                                " outside declared input box");
            if (!classification && std::abs(targets[i]) > y_max)
                throw std::invalid_argument("dataset: record " + std::to_string(i) +
                                            " target outside declared bound");
            if (classification && (label(i) < 0 || label(i) >= num_classes))
                throw std::invalid_argument("dataset: record " + std::to_string(i) +
                                            " label out of range");
        }
    }
};

/// Synthetic regression data: x uniform on [-1, 1]^d,
/// y = clamp(sin(<w*, x>) + noise, -y_max, y_max) for a seed-fixed w*.
inline Dataset gen_regression(std::size_t n, int d, double noise_sd, std::uint64_t seed) {
    if (n < 1 || d < 1) throw std::invalid_argument("gen_regression: n, d must be >= 1");
    Rng rng(seed);
    Vector w_star(d);
    for (double& w : w_star) w = rng.uniform(-1.5, 1.5);

    Dataset ds;
    ds.x_max = 1.0;
    ds.y_max = 1.5;
    ds.inputs.reserve(n);
    ds.targets.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vector x(d);
        for (double& v : x) v = rng.uniform(-1.0, 1.0);
        double y = std::sin(dot(w_star, x));
        if (noise_sd > 0.0) y += noise_sd * rng.normal();
        y = std::clamp(y, -ds.y_max, ds.y_max);
        ds.inputs.push_back(std::move(x));
        ds.targets.push_back(y);
    }
    return ds;
}

/// Balanced binary blobs: two unit-sd truncated-Gaussian clusters centered at
/// -separation/2 and +separation/2 along the first coordinate, truncated at
/// three sds so the domain is compact.
inline Dataset gen_blobs(std::size_t n, int d, double separation, std::uint64_t seed) {
    if (n < 2 || n % 2 != 0) throw std::invalid_argument("gen_blobs: n must be even and >= 2");
    if (d < 1 || separation < 0.0) throw std::invalid_argument("gen_blobs: bad d or separation");
    Rng rng(seed);
    Dataset ds;
    ds.classification = true;
    ds.num_classes = 2;
    ds.x_max = separation / 2.0 + 3.0;
    ds.inputs.reserve(n);
    ds.targets.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        int cls = static_cast<int>(i % 2);
        double center = (cls == 0 ? -0.5 : 0.5) * separation;
        Vector x(d);
        x[0] = center + rng.truncated_normal(1.0, 3.0);
        for (int j = 1; j < d; ++j) x[j] = rng.truncated_normal(1.0, 3.0);
        ds.inputs.push_back(std::move(x));
        ds.targets.push_back(static_cast<double>(cls));
    }
    return ds;
}

namespace detail {

inline double parse_cell(const std::string& cell, std::size_t line, std::size_t col) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t' || *(end - 1) == '\r')) --end;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw std::invalid_argument("csv: non-numeric cell at line " + std::to_string(line) +
                                    ", column " + std::to_string(col + 1));
    return v;
}

} // namespace detail

/// Numeric CSV with a header row; the last column is the target. Bounds are
/// computed from the data and then declared on the result.
inline Dataset load_csv(const std::string& path, bool classification) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line.empty())
        throw std::invalid_argument("csv: empty file '" + path + "'");

    Dataset ds;
    ds.classification = classification;
    std::size_t line_no = 1;
    std::size_t cols = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) row.push_back(detail::parse_cell(cell, line_no, col++));
        if (row.size() < 2)
            throw std::invalid_argument("csv: line " + std::to_string(line_no) +
                                        " needs at least one feature and a target");
        if (cols == 0) cols = row.size();
        if (row.size() != cols)
            throw std::invalid_argument("csv: line " + std::to_string(line_no) +
                                        " has inconsistent column count");
        double target = row.back();
        if (!std::isfinite(target))
            throw std::invalid_argument("csv: non-finite target at line " + std::to_string(line_no));
        row.pop_back();
        for (double v : row)
            if (!std::isfinite(v))
                throw std::invalid_argument("csv: non-finite value at line " +
                                            std::to_string(line_no));
        ds.inputs.push_back(std::move(row));
        ds.targets.push_back(target);
    }
    if (ds.inputs.empty()) throw std::invalid_argument("csv: no data rows in '" + path + "'");

    for (const auto& x : ds.inputs)
        for (double v : x) ds.x_max = std::max(ds.x_max, std::abs(v));
    if (classification) {
        int max_label = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            double t = ds.targets[i];
            if (t != std::floor(t) || t < 0.0)
                throw std::invalid_argument("csv: non-integer class label at row " +
                                            std::to_string(i));
            max_label = std::max(max_label, static_cast<int>(t));
        }
        ds.num_classes = max_label + 1;
        if (ds.num_classes < 2) throw std::invalid_argument("csv: needs at least two classes");
    } else {
        for (double t : ds.targets) ds.y_max = std::max(ds.y_max, std::abs(t));
    }
    return ds;
}

/// Writer used by tests and tooling; shortest round-trip float formatting so
/// save followed by load reproduces the dataset exactly.
inline void save_csv(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("csv: cannot write '" + path + "'");
    for (int j = 0; j < ds.dim(); ++j) out << "x" << j << ",";
    out << (ds.classification ? "label" : "y") << "\n";
    char buf[32];
    auto put = [&](double v) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
        out.write(buf, ptr - buf);
    };
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.inputs[i]) {
            put(v);
            out << ",";
        }
        put(ds.targets[i]);
        out << "\n";
    }
}

} // namespace clipsgd
