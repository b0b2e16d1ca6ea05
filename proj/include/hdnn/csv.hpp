#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>

#include "dataset.hpp"

// Dataset CSV layout: header x0..x{n-1},label then one row per sample.
// Values are written with max_digits10 precision so a write/read round trip
// reproduces every double bit-exactly.

namespace hdnn {

inline void save_dataset_csv(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << std::setprecision(17);
    const int dim = d.dim();
    for (int j = 0; j < dim; ++j) out << "x" << j << ",";
    out << "label\n";
    for (std::size_t i = 0; i < d.features.size(); ++i) {
        for (int j = 0; j < dim; ++j) out << d.features[i][std::size_t(j)] << ",";
        out << d.labels[i] << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline Dataset load_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty dataset file: " + path);

    int dim = 0;
    {
        std::stringstream header(line);
        std::string col;
        bool saw_label = false;
        while (std::getline(header, col, ',')) {
            if (col == "label") {
                saw_label = true;
            } else if (col == "x" + std::to_string(dim) && !saw_label) {
                ++dim;
            } else {
                throw std::runtime_error("unexpected dataset column: " + col);
            }
        }
        if (!saw_label || dim == 0) throw std::runtime_error("malformed dataset header: " + line);
    }

    Dataset d;
    int max_label = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        Vec v(std::size_t(dim), 0.0);
        for (int j = 0; j < dim; ++j) {
            if (!std::getline(row, cell, ',')) throw std::runtime_error("short dataset row: " + line);
            v[std::size_t(j)] = std::stod(cell);
        }
        if (!std::getline(row, cell, ',')) throw std::runtime_error("missing label: " + line);
        const int label = std::stoi(cell);
        if (label < 0) throw std::runtime_error("negative label: " + line);
        max_label = std::max(max_label, label);
        d.features.push_back(std::move(v));
        d.labels.push_back(label);
    }
    d.n_classes = std::max(2, max_label + 1);
    return d;
}

}  // namespace hdnn
