#pragma once

#include <cstdlib>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdnn/backprop.hpp"
#include "hdnn/binmat.hpp"
#include "hdnn/layers.hpp"
#include "hdnn/serialize.hpp"

// Distributed two-part networks.  The p and q halves are split across M nodes,
// node i owning blocks[i] entries of each half.  S is the communication graph
// (unit diagonal: every node talks to itself), T constrains the coupling
// matrix X, and R_j constrains the layer weights Kp_j, Kq_j.  admissible() is
// the compatibility test between the weight structure and the graph: when it
// holds, each half-update at a node reads only data held by its S-neighbors,
// one exchange round per half.

namespace hdnn {

struct SparsityPattern {
    std::vector<int> blocks;  // per-node width of each feature half
    BinMat S;
    BinMat T;
    std::vector<BinMat> R;  // one per layer

    int nodes() const { return int(blocks.size()); }
    int half_width() const { return std::accumulate(blocks.begin(), blocks.end(), 0); }
};

inline void validate_pattern(const SparsityPattern& p) {
    const int M = p.nodes();
    if (M == 0) throw std::invalid_argument("pattern: no nodes");
    for (int w : p.blocks) {
        if (w <= 0) throw std::invalid_argument("pattern: block widths must be positive");
    }
    const auto square = [&](const BinMat& B, const char* name) {
        if (B.rows != M || B.cols != M) {
            throw std::invalid_argument(std::string("pattern: ") + name + " must be " +
                                        std::to_string(M) + "x" + std::to_string(M));
        }
    };
    square(p.S, "S");
    square(p.T, "T");
    if (!bin_symmetric(p.S) || !bin_unit_diagonal(p.S)) {
        throw std::invalid_argument("pattern: S must be symmetric with a unit diagonal");
    }
    if (!bin_symmetric(p.T) || !bin_unit_diagonal(p.T)) {
        throw std::invalid_argument("pattern: T must be symmetric with a unit diagonal");
    }
    if (p.R.empty()) throw std::invalid_argument("pattern: needs at least one layer mask");
    for (const BinMat& R : p.R) {
        square(R, "R");
        if (!bin_unit_diagonal(R)) {
            throw std::invalid_argument("pattern: every R must have a unit diagonal");
        }
    }
}

// One-layer compatibility between weight structure (T, R) and graph S.
inline bool admissible(const BinMat& S, const BinMat& T, const BinMat& R) {
    const BinMat RtR = bin_mul(bin_transpose(R), R);
    return bin_leq(bin_add(bin_mul(T, RtR), bin_mul(RtR, T)), S);
}

inline bool pattern_admissible(const SparsityPattern& p) {
    for (const BinMat& R : p.R) {
        if (!admissible(p.S, p.T, R)) return false;
    }
    return true;
}

// off[i]..off[i+1] is node i's index range within one half; off[M] = n/2
inline std::vector<int> block_offsets(const std::vector<int>& blocks) {
    std::vector<int> off(blocks.size() + 1, 0);
    for (std::size_t i = 0; i < blocks.size(); ++i) off[i + 1] = off[i] + blocks[i];
    return off;
}

namespace detail {

inline void mask_blocks(Mat& A, const std::vector<int>& off, const BinMat& keep) {
    const int M = keep.rows;
    for (int bi = 0; bi < M; ++bi) {
        for (int bk = 0; bk < M; ++bk) {
            if (keep(bi, bk)) continue;
            for (int r = off[std::size_t(bi)]; r < off[std::size_t(bi) + 1]; ++r) {
                for (int c = off[std::size_t(bk)]; c < off[std::size_t(bk) + 1]; ++c) {
                    A(r, c) = 0.0;
                }
            }
        }
    }
}

inline void mask_h2(H2Layer& l, const std::vector<int>& off, const BinMat& R, const BinMat& T) {
    mask_blocks(l.Kp, off, R);
    mask_blocks(l.Kq, off, R);
    mask_blocks(l.X, off, T);
}

inline void check_compatible(const Network& net, const SparsityPattern& p) {
    validate_pattern(p);
    if (net.arch != Arch::H2) {
        throw std::invalid_argument("sparsity masks only apply to the two-part architecture");
    }
    if (int(p.R.size()) != net.depth()) {
        throw std::invalid_argument("pattern: exactly one R per layer required");
    }
    if (2 * p.half_width() != net.n) {
        throw std::invalid_argument("pattern: block widths do not add up to the feature size");
    }
}

}  // namespace detail

inline void apply_masks(Network& net, const SparsityPattern& p) {
    detail::check_compatible(net, p);
    const auto off = block_offsets(p.blocks);
    for (int j = 0; j < net.depth(); ++j) {
        detail::mask_h2(std::get<H2Layer>(net.layers[std::size_t(j)]), off, p.R[std::size_t(j)],
                        p.T);
    }
}

// Zero the gradient entries of masked weights.  Plugged into the trainer this
// keeps masked weights at exactly 0.0 forever: a moment estimate fed only
// zeros never moves.
inline void mask_grads(const Network& net, const SparsityPattern& p, GradientSet& g) {
    detail::check_compatible(net, p);
    if (g.layers.size() != net.layers.size()) {
        throw std::invalid_argument("mask_grads: gradient holder mismatch");
    }
    const auto off = block_offsets(p.blocks);
    for (std::size_t j = 0; j < g.layers.size(); ++j) {
        detail::mask_h2(std::get<H2Layer>(g.layers[j]), off, p.R[j], p.T);
    }
}

// Nodes on a circle; entry 1 when the circular distance is at most `order`.
inline BinMat ring_adjacency(int nodes, int order) {
    if (nodes <= 0 || order < 0) throw std::invalid_argument("ring_adjacency: bad sizes");
    BinMat A(nodes, nodes);
    for (int i = 0; i < nodes; ++i) {
        for (int j = 0; j < nodes; ++j) {
            int d = std::abs(i - j);
            d = std::min(d, nodes - d);
            if (d <= order) A(i, j) = 1;
        }
    }
    return A;
}

// ------------------------------------------------------------ pattern files --

inline nlohmann::json binmat_to_json(const BinMat& B) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < B.rows; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < B.cols; ++j) row.push_back(int(B(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline BinMat binmat_from_json(const nlohmann::json& j, int m, const std::string& where) {
    if (!j.is_array() || int(j.size()) != m) {
        throw std::runtime_error(where + ": expected " + std::to_string(m) + " rows");
    }
    BinMat B(m, m);
    for (int i = 0; i < m; ++i) {
        const auto& row = j[std::size_t(i)];
        if (!row.is_array() || int(row.size()) != m) {
            throw std::runtime_error(where + ": expected " + std::to_string(m) +
                                     " entries per row");
        }
        for (int k = 0; k < m; ++k) {
            const auto& v = row[std::size_t(k)];
            if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
                throw std::runtime_error(where + ": entries must be 0 or 1");
            }
            B(i, k) = std::uint8_t(v.get<int>());
        }
    }
    return B;
}

inline nlohmann::json pattern_to_json(const SparsityPattern& p) {
    nlohmann::json doc;
    doc["format"] = "hdnn-sparsity";
    doc["version"] = 1;
    doc["blocks"] = p.blocks;
    doc["S"] = binmat_to_json(p.S);
    doc["T"] = binmat_to_json(p.T);
    nlohmann::json rs = nlohmann::json::array();
    for (const BinMat& R : p.R) rs.push_back(binmat_to_json(R));
    doc["R"] = std::move(rs);
    return doc;
}

inline SparsityPattern pattern_from_json(const nlohmann::json& doc) {
    detail::require_keys(doc, {"format", "version", "blocks", "S", "T", "R"}, "pattern");
    if (doc["format"].get<std::string>() != "hdnn-sparsity") {
        throw std::runtime_error("pattern: unknown format tag");
    }
    if (doc["version"].get<int>() != 1) throw std::runtime_error("pattern: unsupported version");

    SparsityPattern p;
    if (!doc["blocks"].is_array() || doc["blocks"].empty()) {
        throw std::runtime_error("pattern: blocks must be a non-empty array");
    }
    for (const auto& b : doc["blocks"]) {
        if (!b.is_number_integer() || b.get<int>() <= 0) {
            throw std::runtime_error("pattern: block widths must be positive integers");
        }
        p.blocks.push_back(b.get<int>());
    }
    const int M = p.nodes();
    p.S = binmat_from_json(doc["S"], M, "pattern S");
    p.T = binmat_from_json(doc["T"], M, "pattern T");
    if (!doc["R"].is_array() || doc["R"].empty()) {
        throw std::runtime_error("pattern: R must be a non-empty array of matrices");
    }
    for (std::size_t j = 0; j < doc["R"].size(); ++j) {
        p.R.push_back(binmat_from_json(doc["R"][j], M, "pattern R[" + std::to_string(j) + "]"));
    }
    validate_pattern(p);
    return p;
}

inline void save_pattern(const SparsityPattern& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << pattern_to_json(p).dump(2) << "\n";
}

inline SparsityPattern load_pattern(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open pattern file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("pattern file " + path + ": " + e.what());
    }
    return pattern_from_json(doc);
}

}  // namespace hdnn
