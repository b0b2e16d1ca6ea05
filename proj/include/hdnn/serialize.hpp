#pragma once

#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "hdnn/layers.hpp"

// Model files are JSON with a fixed schema (see README).  Matrices are
// flattened row-major.  Reading is strict: missing or unexpected keys are
// errors, so a typo in a hand-edited file cannot silently change a run.

namespace hdnn {

namespace detail {

using nlohmann::json;

inline json mat_to_json(const Mat& m) { return json(m.a); }
inline json vec_to_json(const Vec& v) { return json(v); }

inline void require_keys(const json& j, const std::set<std::string>& keys, const std::string& where) {
    if (!j.is_object()) throw std::runtime_error(where + ": expected an object");
    for (const auto& item : j.items()) {
        if (!keys.count(item.key())) {
            throw std::runtime_error(where + ": unexpected key '" + item.key() + "'");
        }
    }
    for (const auto& k : keys) {
        if (!j.contains(k)) throw std::runtime_error(where + ": missing key '" + k + "'");
    }
}

inline Mat mat_from_json(const json& j, int rows, int cols, const std::string& where) {
    if (!j.is_array() || j.size() != std::size_t(rows) * std::size_t(cols)) {
        throw std::runtime_error(where + ": expected " + std::to_string(rows * cols) + " values");
    }
    Mat m(rows, cols);
    for (std::size_t i = 0; i < m.a.size(); ++i) m.a[i] = j[i].get<double>();
    return m;
}

inline Vec vec_from_json(const json& j, int len, const std::string& where) {
    if (!j.is_array() || j.size() != std::size_t(len)) {
        throw std::runtime_error(where + ": expected " + std::to_string(len) + " values");
    }
    Vec v(std::size_t(len), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
    return v;
}

}  // namespace detail

inline nlohmann::json network_to_json(const Network& net) {
    using nlohmann::json;
    json doc;
    doc["format"] = "hdnn-model";
    doc["version"] = 1;
    doc["arch"] = arch_name(net.arch);
    doc["activation"] = act_name(net.act);
    doc["n"] = net.n;
    doc["num_layers"] = net.depth();
    doc["step_size"] = net.step_size();
    bool train_j = false;
    if (net.arch == Arch::H1 && !net.layers.empty()) {
        train_j = std::get<H1Layer>(net.layers.front()).train_j;
    }
    doc["trainable_j"] = train_j;
    json layers = json::array();
    for (const Layer& layer : net.layers) {
        json lj;
        std::visit(
            [&](const auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, H1Layer>) {
                    lj["J"] = detail::mat_to_json(l.J);
                    lj["K"] = detail::mat_to_json(l.K);
                    lj["b"] = detail::vec_to_json(l.b);
                } else if constexpr (std::is_same_v<T, H2Layer>) {
                    lj["X"] = detail::mat_to_json(l.X);
                    lj["Kp"] = detail::mat_to_json(l.Kp);
                    lj["Kq"] = detail::mat_to_json(l.Kq);
                    lj["bp"] = detail::vec_to_json(l.bp);
                    lj["bq"] = detail::vec_to_json(l.bq);
                } else if constexpr (std::is_same_v<T, MS1Layer>) {
                    lj["K0"] = detail::mat_to_json(l.K0);
                    lj["b1"] = detail::vec_to_json(l.b1);
                    lj["b2"] = detail::vec_to_json(l.b2);
                } else if constexpr (std::is_same_v<T, MS2Layer>) {
                    lj["K"] = detail::mat_to_json(l.K);
                    lj["b"] = detail::vec_to_json(l.b);
                } else if constexpr (std::is_same_v<T, MS3Layer>) {
                    lj["K1"] = detail::mat_to_json(l.K1);
                    lj["K2"] = detail::mat_to_json(l.K2);
                    lj["b1"] = detail::vec_to_json(l.b1);
                    lj["b2"] = detail::vec_to_json(l.b2);
                } else {
                    lj["K"] = detail::mat_to_json(l.K);
                    lj["b"] = detail::vec_to_json(l.b);
                }
            },
            layer);
        layers.push_back(std::move(lj));
    }
    doc["layers"] = std::move(layers);
    doc["head"] = {{"classes", net.classes()},
                   {"W", detail::mat_to_json(net.head.W)},
                   {"c", detail::vec_to_json(net.head.c)}};
    return doc;
}

inline Network network_from_json(const nlohmann::json& doc) {
    using detail::require_keys;
    require_keys(doc,
                 {"format", "version", "arch", "activation", "n", "num_layers", "step_size",
                  "trainable_j", "layers", "head"},
                 "model");
    if (doc["format"].get<std::string>() != "hdnn-model") {
        throw std::runtime_error("model: unknown format tag");
    }
    if (doc["version"].get<int>() != 1) throw std::runtime_error("model: unsupported version");

    Network net;
    net.arch = arch_from_name(doc["arch"].get<std::string>());
    net.act = act_from_name(doc["activation"].get<std::string>());
    net.n = doc["n"].get<int>();
    const int N = doc["num_layers"].get<int>();
    const double h = doc["step_size"].get<double>();
    const bool train_j = doc["trainable_j"].get<bool>();
    const auto& layers = doc["layers"];
    if (!layers.is_array() || int(layers.size()) != N) {
        throw std::runtime_error("model: layer count mismatch");
    }
    const int n = net.n;
    const int half = n / 2;
    for (int j = 0; j < N; ++j) {
        const auto& lj = layers[std::size_t(j)];
        const std::string where = "model layer " + std::to_string(j);
        switch (net.arch) {
            case Arch::H1: {
                require_keys(lj, {"J", "K", "b"}, where);
                H1Layer l;
                l.J = detail::mat_from_json(lj["J"], n, n, where + " J");
                l.K = detail::mat_from_json(lj["K"], n, n, where + " K");
                l.b = detail::vec_from_json(lj["b"], n, where + " b");
                l.h = h;
                l.train_j = train_j;
                net.layers.emplace_back(std::move(l));
                break;
            }
            case Arch::H2: {
                require_keys(lj, {"X", "Kp", "Kq", "bp", "bq"}, where);
                H2Layer l;
                l.X = detail::mat_from_json(lj["X"], half, half, where + " X");
                l.Kp = detail::mat_from_json(lj["Kp"], half, half, where + " Kp");
                l.Kq = detail::mat_from_json(lj["Kq"], half, half, where + " Kq");
                l.bp = detail::vec_from_json(lj["bp"], half, where + " bp");
                l.bq = detail::vec_from_json(lj["bq"], half, where + " bq");
                l.h = h;
                net.layers.emplace_back(std::move(l));
                break;
            }
            case Arch::MS1: {
                require_keys(lj, {"K0", "b1", "b2"}, where);
                MS1Layer l;
                l.K0 = detail::mat_from_json(lj["K0"], half, half, where + " K0");
                l.b1 = detail::vec_from_json(lj["b1"], half, where + " b1");
                l.b2 = detail::vec_from_json(lj["b2"], half, where + " b2");
                l.h = h;
                net.layers.emplace_back(std::move(l));
                break;
            }
            case Arch::MS2: {
                require_keys(lj, {"K", "b"}, where);
                MS2Layer l;
                l.K = detail::mat_from_json(lj["K"], n, n, where + " K");
                l.b = detail::vec_from_json(lj["b"], n, where + " b");
                l.h = h;
                net.layers.emplace_back(std::move(l));
                break;
            }
            case Arch::MS3: {
                require_keys(lj, {"K1", "K2", "b1", "b2"}, where);
                MS3Layer l;
                l.K1 = detail::mat_from_json(lj["K1"], half, half, where + " K1");
                l.K2 = detail::mat_from_json(lj["K2"], half, half, where + " K2");
                l.b1 = detail::vec_from_json(lj["b1"], half, where + " b1");
                l.b2 = detail::vec_from_json(lj["b2"], half, where + " b2");
                l.h = h;
                net.layers.emplace_back(std::move(l));
                break;
            }
            case Arch::MLP: {
                require_keys(lj, {"K", "b"}, where);
                MlpLayer l;
                l.K = detail::mat_from_json(lj["K"], n, n, where + " K");
                l.b = detail::vec_from_json(lj["b"], n, where + " b");
                net.layers.emplace_back(std::move(l));
                break;
            }
        }
    }
    require_keys(doc["head"], {"classes", "W", "c"}, "model head");
    const int classes = doc["head"]["classes"].get<int>();
    net.head.W = detail::mat_from_json(doc["head"]["W"], classes, n, "model head W");
    net.head.c = detail::vec_from_json(doc["head"]["c"], classes, "model head c");
    validate_network(net);
    return net;
}

inline void save_network(const Network& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << network_to_json(net).dump(2) << "\n";
}

inline Network load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("model file " + path + ": " + e.what());
    }
    return network_from_json(doc);
}

}  // namespace hdnn
