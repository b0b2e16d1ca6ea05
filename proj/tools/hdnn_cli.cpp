#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <hdnn/backprop.hpp>
#include <hdnn/csv.hpp>
#include <hdnn/dataset.hpp>
#include <hdnn/layers.hpp>
#include <hdnn/ode.hpp>
#include <hdnn/serialize.hpp>
#include <hdnn/sparsity.hpp>
#include <hdnn/train.hpp>

// Experiment front end.  Every command merges defaults <- config file <- flags,
// rejects unknown config keys, and drops a resolved_config.json snapshot next
// to its outputs, so a run can be reproduced from the artifact directory alone.
//
// Exit codes: 0 success, 1 domain failure (condition violated or an --assert
// gate unmet), 2 usage or validation problem, 3 numerical divergence.

namespace {

using hdnn::Dataset;
using hdnn::Mat;
using hdnn::Network;
using hdnn::Trajectory;
using hdnn::Vec;
using nlohmann::json;

// thrown for bad flags, bad config values, and malformed input files (exit 2)
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open: " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw UsageError(path + ": " + e.what());
    }
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot open for writing: " + path.string());
    out << content;
    if (!out) throw UsageError("write failed: " + path.string());
}

// defaults double as the set of allowed keys
json merge_config(const json& defaults, const std::string& config_path) {
    json cfg = defaults;
    if (config_path.empty()) return cfg;
    const json file = read_json_file(config_path);
    if (!file.is_object()) throw UsageError(config_path + ": top level must be an object");
    for (const auto& [key, value] : file.items()) {
        if (!defaults.contains(key)) {
            throw UsageError(config_path + ": unknown setting '" + key + "'");
        }
        cfg[key] = value;
    }
    return cfg;
}

std::filesystem::path ensure_out_dir(const json& cfg) {
    std::string out = cfg.at("out").get<std::string>();
    if (out.empty()) out = ".";
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw UsageError("cannot create output directory: " + out);
    return out;
}

void write_resolved(const std::filesystem::path& dir, const std::string& command, json cfg) {
    cfg["command"] = command;
    write_file(dir / "resolved_config.json", cfg.dump(2) + "\n");
}

// ------------------------------------------------------------ shared plumbing

Dataset generated_dataset(const std::string& name, int samples, double noise,
                          std::uint64_t seed) {
    if (name == "swiss_roll") return hdnn::gen_swiss_roll(samples, noise, seed);
    if (name == "double_moons") return hdnn::gen_double_moons(samples, noise, seed);
    if (name == "double_circles") return hdnn::gen_double_circles(samples, noise, seed);
    throw UsageError("unknown dataset '" + name +
                     "'; expected swiss_roll, double_moons, or double_circles");
}

std::vector<std::pair<int, int>> placement_from(const json& j) {
    if (!j.is_array() || j.empty()) throw UsageError("placement must be a nonempty array");
    std::vector<std::pair<int, int>> out;
    for (const auto& pair : j) {
        if (!pair.is_array() || pair.size() != 2) {
            throw UsageError("placement entries must be [raw, target] pairs");
        }
        out.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
    }
    return out;
}

Vec vec_from(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty()) throw UsageError(what + " must be a nonempty array");
    Vec v;
    v.reserve(j.size());
    for (const auto& x : j) v.push_back(x.get<double>());
    return v;
}

// file path wins over the generator spec; seed_shift separates the train and
// test draws of a generated pair
Dataset raw_dataset(const json& cfg, const char* file_key, std::uint64_t seed_shift) {
    const std::string file = cfg.at(file_key).get<std::string>();
    if (!file.empty()) return hdnn::load_dataset_csv(file);
    return generated_dataset(cfg.at("dataset").get<std::string>(), cfg.at("samples").get<int>(),
                             cfg.at("noise").get<double>(),
                             cfg.at("seed").get<std::uint64_t>() + seed_shift);
}

void write_history(const std::vector<hdnn::HistoryRow>& history,
                   const std::filesystem::path& path) {
    std::string text = "epoch,iteration,train_loss,train_acc,test_acc,min_bsm_norm,max_bsm_norm\n";
    for (const auto& row : history) {
        text += std::to_string(row.epoch) + "," + std::to_string(row.iteration) + "," +
                fmt(row.train_loss) + "," + fmt(row.train_acc) + "," + fmt(row.test_acc) + "," +
                fmt(row.min_bsm) + "," + fmt(row.max_bsm) + "\n";
    }
    write_file(path, text);
}

// One row per (sequential sample batch, depth): norms of the backward
// sensitivity product spanning the last layer_index layers, averaged over the
// first monitor samples of the batch.
int write_grad_report(const Network& net, const Dataset& ds, int batch, int monitor,
                      const std::filesystem::path& path) {
    if (batch <= 0 || monitor <= 0) throw UsageError("batch and monitor_samples must be positive");
    std::string text = "iteration,layer_index,bsm_norm_2,bsm_norm_fro\n";
    int rows = 0;
    const int depth = net.depth();
    const int batches = (ds.size() + batch - 1) / batch;
    for (int b = 0; b < batches; ++b) {
        const int lo = b * batch;
        const int m = std::min(monitor, std::min(ds.size(), lo + batch) - lo);
        std::vector<double> mean2(std::size_t(depth) + 1, 0.0);
        std::vector<double> meanf(std::size_t(depth) + 1, 0.0);
        for (int i = lo; i < lo + m; ++i) {
            const hdnn::ForwardTrace tr = forward_states(net, ds.features[std::size_t(i)]);
            const hdnn::BsmTrace bsm = bsm_trace(net, tr);
            for (int k = 1; k <= depth; ++k) {
                mean2[std::size_t(k)] += bsm.norm2[std::size_t(k)] / m;
                meanf[std::size_t(k)] += bsm.norm_fro[std::size_t(k)] / m;
            }
        }
        for (int k = 1; k <= depth; ++k) {
            text += std::to_string(b + 1) + "," + std::to_string(k) + "," +
                    fmt(mean2[std::size_t(k)]) + "," + fmt(meanf[std::size_t(k)]) + "\n";
            ++rows;
        }
    }
    write_file(path, text);
    return rows;
}

// ------------------------------------------------------------------- commands

int cmd_generate(const json& cfg) {
    const Dataset d =
        generated_dataset(cfg.at("dataset").get<std::string>(), cfg.at("samples").get<int>(),
                          cfg.at("noise").get<double>(), cfg.at("seed").get<std::uint64_t>());
    const auto dir = ensure_out_dir(cfg);
    write_resolved(dir, "generate", cfg);
    std::string file = cfg.at("file").get<std::string>();
    if (file.empty()) file = cfg.at("dataset").get<std::string>() + ".csv";
    const auto path = dir / file;
    hdnn::save_dataset_csv(d, path.string());
    std::printf("wrote %d rows to %s\n", d.size(), path.string().c_str());
    return 0;
}

int cmd_train(const json& cfg, bool assert_gate) {
    const auto dir = ensure_out_dir(cfg);
    write_resolved(dir, "train", cfg);

    const int width = cfg.at("width").get<int>();
    const auto placement = placement_from(cfg.at("placement"));
    const Dataset train_set = augment(raw_dataset(cfg, "dataset_file", 0), width, placement);
    Dataset test_raw;
    const std::string test_file = cfg.at("test_file").get<std::string>();
    if (!test_file.empty()) {
        test_raw = hdnn::load_dataset_csv(test_file);
    } else if (!cfg.at("dataset_file").get<std::string>().empty()) {
        test_raw = raw_dataset(cfg, "dataset_file", 0);  // no separate test file given
    } else {
        test_raw = raw_dataset(cfg, "dataset_file", 1);
    }
    const Dataset test_set = augment(test_raw, width, placement);

    Network net = hdnn::make_network(
        hdnn::arch_from_name(cfg.at("arch").get<std::string>()), width, cfg.at("layers").get<int>(),
        cfg.at("step").get<double>(), hdnn::act_from_name(cfg.at("activation").get<std::string>()),
        train_set.n_classes, cfg.at("seed").get<std::uint64_t>(), cfg.at("trainable_j").get<bool>());

    hdnn::TrainConfig tcfg;
    tcfg.epochs = cfg.at("epochs").get<int>();
    tcfg.batch = cfg.at("batch").get<int>();
    tcfg.lr = cfg.at("lr").get<double>();
    tcfg.beta1 = cfg.at("beta1").get<double>();
    tcfg.beta2 = cfg.at("beta2").get<double>();
    tcfg.head_iters = cfg.at("head_iters").get<int>();
    tcfg.head_tol = cfg.at("head_tol").get<double>();
    tcfg.seed = cfg.at("seed").get<std::uint64_t>();
    tcfg.monitor_samples = cfg.at("monitor_samples").get<int>();
    tcfg.divergence_limit = cfg.at("divergence_limit").get<double>();
    tcfg.reg.alpha = cfg.at("alpha").get<double>();
    tcfg.reg.alpha_ell = cfg.at("alpha_ell").get<double>();
    tcfg.reg.alpha_n = cfg.at("alpha_n").get<double>();

    const auto model_path = dir / cfg.at("model_file").get<std::string>();
    const auto history_path = dir / cfg.at("history_file").get<std::string>();
    const auto report_path = dir / cfg.at("report_file").get<std::string>();

    // a checkpoint exists from the start, so a first-epoch divergence still
    // leaves a loadable (initial) model behind
    save_network(net, model_path.string());
    write_history({}, history_path);
    tcfg.on_epoch_end = [&](int, const Network& snapshot,
                            const std::vector<hdnn::HistoryRow>& history) {
        save_network(snapshot, model_path.string());
        write_history(history, history_path);
    };

    hdnn::TrainResult result;
    try {
        result = train(net, train_set, test_set, tcfg);
    } catch (const hdnn::DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        std::printf("kept the last completed epoch checkpoint at %s\n",
                    model_path.string().c_str());
        return 3;
    }

    save_network(net, model_path.string());
    write_history(result.history, history_path);
    const int report_rows =
        write_grad_report(net, train_set, tcfg.batch, tcfg.monitor_samples, report_path);
    std::printf("final train accuracy %.4f\n", result.train_acc);
    std::printf("final test accuracy %.4f\n", result.test_acc);
    std::printf("wrote %s, %s (%zu rows), %s (%d rows)\n", model_path.string().c_str(),
                history_path.string().c_str(), result.history.size(), report_path.string().c_str(),
                report_rows);
    if (assert_gate && result.test_acc < cfg.at("assert_accuracy").get<double>()) {
        std::fprintf(stderr, "accuracy gate not met: %.4f < %.4f\n", result.test_acc,
                     cfg.at("assert_accuracy").get<double>());
        return 1;
    }
    return 0;
}

int cmd_eval(const json& cfg, bool assert_gate) {
    const auto dir = ensure_out_dir(cfg);
    write_resolved(dir, "eval", cfg);
    const Network net = hdnn::load_network(cfg.at("model").get<std::string>());
    const Dataset ds =
        augment(raw_dataset(cfg, "dataset_file", 0), net.n, placement_from(cfg.at("placement")));
    const double acc = evaluate(net, ds);
    std::printf("accuracy %.4f on %d samples\n", acc, ds.size());
    if (assert_gate && acc < cfg.at("assert_accuracy").get<double>()) {
        std::fprintf(stderr, "accuracy gate not met: %.4f < %.4f\n", acc,
                     cfg.at("assert_accuracy").get<double>());
        return 1;
    }
    return 0;
}

int cmd_grad_report(const json& cfg) {
    const auto dir = ensure_out_dir(cfg);
    write_resolved(dir, "grad-report", cfg);
    const Network net = hdnn::load_network(cfg.at("model").get<std::string>());
    const Dataset ds =
        augment(raw_dataset(cfg, "dataset_file", 0), net.n, placement_from(cfg.at("placement")));
    const auto path = dir / cfg.at("file").get<std::string>();
    const int rows = write_grad_report(net, ds, cfg.at("batch").get<int>(),
                                       cfg.at("monitor_samples").get<int>(), path);
    std::printf("wrote %d rows to %s\n", rows, path.string().c_str());
    return 0;
}

int cmd_check_sparsity(const json& cfg) {
    const auto dir = ensure_out_dir(cfg);
    write_resolved(dir, "check-sparsity", cfg);
    const hdnn::SparsityPattern pat = hdnn::load_pattern(cfg.at("pattern").get<std::string>());
    bool all_ok = true;
    for (std::size_t j = 0; j < pat.R.size(); ++j) {
        const bool ok = admissible(pat.S, pat.T, pat.R[j]);
        std::printf("layer %zu: %s\n", j + 1, ok ? "pass" : "fail");
        all_ok = all_ok && ok;
    }
    std::printf("%s\n", all_ok ? "pattern admissible" : "pattern rejected");
    return all_ok ? 0 : 1;
}

// ----------------------------------------------------------------- ode lab

int cmd_ode_sensitivity(const json& cfg, bool assert_gate) {
    const auto dir = ensure_out_dir(cfg);
    write_resolved(dir, "ode-lab sensitivity", cfg);

    const std::string source = cfg.at("source").get<std::string>();
    double horizon = cfg.at("T").get<double>();
    hdnn::OdeConfig ocfg;
    if (source == "planar" || source == "zero") {
        ocfg = hdnn::planar_tanh_config(horizon > 0.0 ? horizon : 1.0,
                                        cfg.at("h_ref").get<double>());
        if (source == "zero") ocfg.K = [](double) { return Mat(2, 2); };
    } else if (source == "model") {
        auto net = std::make_shared<const Network>(
            hdnn::load_network(cfg.at("model").get<std::string>()));
        if (net->arch != hdnn::Arch::H1) {
            throw UsageError("source 'model' needs an h1 architecture model");
        }
        const int depth = net->depth();
        const double h = net->step_size();
        // per-layer weights held constant over intervals of length h
        const auto layer_at = [net, h, depth](double t) -> const hdnn::H1Layer& {
            int j = int(t / h);
            j = std::clamp(j, 0, depth - 1);
            return std::get<hdnn::H1Layer>(net->layers[std::size_t(j)]);
        };
        ocfg.act = net->act;
        ocfg.T = horizon > 0.0 ? horizon : depth * h;
        ocfg.h_ref = cfg.at("h_ref").get<double>();
        ocfg.K = [layer_at](double t) { return layer_at(t).K; };
        ocfg.J = [layer_at](double t) { return layer_at(t).J; };
        ocfg.b = [layer_at](double t) { return layer_at(t).b; };
    } else {
        throw UsageError("unknown source '" + source + "'; expected planar, zero, or model");
    }

    const Vec y0 = vec_from(cfg.at("y0"), "y0");
    const int n = ocfg.K(0.0).rows;
    if (int(y0.size()) != n) {
        throw UsageError("y0 must have " + std::to_string(n) + " entries");
    }

    Trajectory fwd, sens;
    try {
        fwd = integrate_forward(ocfg, y0);
        sens = integrate_sensitivity(ocfg, fwd);
    } catch (const std::runtime_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }

    std::string text = "t";
    for (int i = 0; i < n; ++i) text += ",y" + std::to_string(i);
    text += ",hamiltonian\n";
    for (std::size_t k = 0; k < fwd.t.size(); ++k) {
        text += fmt(fwd.t[k]);
        for (double x : fwd.y[k]) text += "," + fmt(x);
        text += "," + fmt(fwd.hamiltonian[k]) + "\n";
    }
    const auto fwd_path = dir / cfg.at("forward_file").get<std::string>();
    write_file(fwd_path, text);

    double min_norm = std::numeric_limits<double>::infinity();
    double max_norm = 0.0;
    double max_residual = 0.0;
    text = "t,bsm_norm_2,symplectic_residual\n";
    for (std::size_t k = 0; k < sens.t.size(); ++k) {
        const Mat& phi = sens.sensitivity[k];
        const Mat J = ocfg.J(ocfg.T - sens.t[k]);
        Mat r = matmul(matmul(transpose(phi), J), phi);
        mat_axpy(r, -1.0, J);
        const double residual = frobenius(r);
        const double norm = two_norm(phi);
        min_norm = std::min(min_norm, norm);
        max_norm = std::max(max_norm, norm);
        max_residual = std::max(max_residual, residual);
        text += fmt(sens.t[k]) + "," + fmt(norm) + "," + fmt(residual) + "\n";
    }
    const auto sens_path = dir / cfg.at("sensitivity_file").get<std::string>();
    write_file(sens_path, text);

    std::printf("sensitivity norms in [%.6g, %.6g], max symplectic residual %.3g\n", min_norm,
                max_norm, max_residual);
    std::printf("wrote %s and %s\n", fwd_path.string().c_str(), sens_path.string().c_str());
    if (assert_gate && (max_residual > 1e-6 || min_norm < 1.0 - 1e-6)) {
        std::fprintf(stderr, "symplecticity gate not met\n");
        return 1;
    }
    return 0;
}

int cmd_ode_explode(const json& cfg) {
    const auto dir = ensure_out_dir(cfg);
    write_resolved(dir, "ode-lab explode", cfg);
    const double gamma = cfg.at("gamma").get<double>();
    if (gamma <= 0.0) throw UsageError("gamma must be positive");
    double horizon = cfg.at("T").get<double>();
    if (horizon <= 0.0) horizon = 16.0 / gamma;  // long enough to see saturation

    const auto curve =
        hdnn::exploding_probe(vec_from(cfg.at("y0"), "y0"), vec_from(cfg.at("beta"), "beta"),
                              gamma, horizon, cfg.at("step").get<double>());
    std::string text = "t,ratio,gamma\n";
    double peak = 0.0;
    for (const auto& p : curve) {
        peak = std::max(peak, p.ratio);
        text += fmt(p.t) + "," + fmt(p.ratio) + "," + fmt(gamma) + "\n";
    }
    const auto path = dir / cfg.at("file").get<std::string>();
    write_file(path, text);
    std::printf("peak ratio %.6g over horizon %.6g, %zu rows in %s\n", peak, horizon, curve.size(),
                path.string().c_str());
    return 0;
}

int cmd_ode_period(const json& cfg, bool assert_gate) {
    const auto dir = ensure_out_dir(cfg);
    write_resolved(dir, "ode-lab period", cfg);
    const json& points = cfg.at("points");
    if (!points.is_array() || points.empty()) throw UsageError("points must be a nonempty array");

    const hdnn::OdeConfig level_cfg = hdnn::planar_tanh_config(1.0);
    std::vector<double> levels, periods;
    std::string text = "y0,y1,level,period\n";
    for (const auto& pj : points) {
        const Vec p = vec_from(pj, "points entry");
        if (p.size() != 2) throw UsageError("points entries must be planar [y0, y1] pairs");
        const double level = hamiltonian_level(level_cfg, 0.0, p);
        const double period = hdnn::period_estimate(p, cfg.at("step").get<double>(),
                                                    cfg.at("horizon").get<double>());
        levels.push_back(level);
        periods.push_back(period);
        text += fmt(p[0]) + "," + fmt(p[1]) + "," + fmt(level) + "," + fmt(period) + "\n";
        std::printf("period %.6f at level %.6f\n", period, level);
    }
    const auto path = dir / cfg.at("file").get<std::string>();
    write_file(path, text);
    std::printf("wrote %s\n", path.string().c_str());

    if (assert_gate) {
        std::vector<std::size_t> order(levels.size());
        std::iota(order.begin(), order.end(), std::size_t(0));
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return levels[a] < levels[b]; });
        for (std::size_t i = 1; i < order.size(); ++i) {
            if (periods[order[i]] <= periods[order[i - 1]]) {
                std::fprintf(stderr, "period gate not met: not increasing with the level\n");
                return 1;
            }
        }
    }
    return 0;
}

int cmd_ode_ode2ode(const json& cfg, bool assert_gate) {
    const auto dir = ensure_out_dir(cfg);
    write_resolved(dir, "ode-lab ode2ode", cfg);
    const Vec y0 = vec_from(cfg.at("y0"), "y0");
    const Vec delta = vec_from(cfg.at("delta"), "delta");
    const double horizon = cfg.at("T").get<double>();
    const double h_ref = cfg.at("h_ref").get<double>();
    const double omega = cfg.at("omega").get<double>();
    const int n = int(y0.size());

    const std::string which = cfg.at("path").get<std::string>();
    std::vector<std::pair<std::string, std::function<Mat(double)>>> paths;
    if (which == "identity" || which == "both") {
        paths.emplace_back("identity", [n](double) { return Mat::identity(n); });
    }
    if (which == "rotation" || which == "both") {
        if (n != 2) throw UsageError("the rotation path is planar; y0 must have 2 entries");
        paths.emplace_back("rotation", [omega](double t) {
            Mat R(2, 2);
            R(0, 0) = std::cos(omega * t);
            R(0, 1) = -std::sin(omega * t);
            R(1, 0) = std::sin(omega * t);
            R(1, 1) = std::cos(omega * t);
            return R;
        });
    }
    if (paths.empty()) {
        throw UsageError("unknown path '" + which + "'; expected identity, rotation, or both");
    }

    const double lo = std::exp(-1.0) - 1e-3;
    const double hi = std::exp(1.0) + 1e-3;
    bool all_within = true;
    std::string text = "path,min_ratio,max_ratio\n";
    for (const auto& [name, path_fn] : paths) {
        hdnn::Ode2OdeReport rep;
        try {
            rep = hdnn::ode2ode_check(path_fn, horizon, y0, delta, h_ref);
        } catch (const std::runtime_error& e) {
            std::fprintf(stderr, "error: %s\n", e.what());
            return 3;
        }
        const bool within = rep.min_ratio >= lo && rep.max_ratio <= hi;
        all_within = all_within && within;
        text += name + "," + fmt(rep.min_ratio) + "," + fmt(rep.max_ratio) + "\n";
        std::printf("path %s: ratio range [%.6g, %.6g], %s [1/e - 1e-3, e + 1e-3]\n", name.c_str(),
                    rep.min_ratio, rep.max_ratio, within ? "within" : "OUTSIDE");
    }
    const auto path = dir / cfg.at("file").get<std::string>();
    write_file(path, text);
    std::printf("wrote %s\n", path.string().c_str());
    if (assert_gate && !all_within) {
        std::fprintf(stderr, "ratio band gate not met\n");
        return 1;
    }
    return 0;
}

// ------------------------------------------------------------------ defaults

json generate_defaults() {
    return json{{"dataset", ""}, {"samples", 8000}, {"noise", 0.05},
                {"seed", 1},     {"out", "."},      {"file", ""}};
}

json train_defaults() {
    return json{{"arch", "h1"},
                {"layers", 4},
                {"width", 4},
                {"step", 0.5},
                {"activation", "tanh"},
                {"trainable_j", false},
                {"dataset", "double_moons"},
                {"samples", 8000},
                {"noise", 0.05},
                {"dataset_file", ""},
                {"test_file", ""},
                {"placement", json::array({json::array({0, 0}), json::array({1, 1})})},
                {"epochs", 50},
                {"batch", 125},
                {"lr", 2.5e-2},
                {"beta1", 0.9},
                {"beta2", 0.999},
                {"head_iters", 10},
                {"head_tol", 1e-6},
                {"alpha", 5e-4},
                {"alpha_ell", 0.0},
                {"alpha_n", 1e-4},
                {"monitor_samples", 8},
                {"divergence_limit", 1e6},
                {"seed", 1},
                {"out", "."},
                {"assert_accuracy", 0.0},
                {"model_file", "model.json"},
                {"history_file", "history.csv"},
                {"report_file", "grad_report.csv"}};
}

json eval_defaults() {
    return json{{"model", ""},
                {"dataset", "double_moons"},
                {"samples", 8000},
                {"noise", 0.05},
                {"dataset_file", ""},
                {"placement", json::array({json::array({0, 0}), json::array({1, 1})})},
                {"seed", 1},
                {"out", "."},
                {"assert_accuracy", 0.0}};
}

json grad_report_defaults() {
    return json{{"model", ""},
                {"dataset", "double_moons"},
                {"samples", 8000},
                {"noise", 0.05},
                {"dataset_file", ""},
                {"placement", json::array({json::array({0, 0}), json::array({1, 1})})},
                {"batch", 125},
                {"monitor_samples", 8},
                {"seed", 1},
                {"out", "."},
                {"file", "grad_report.csv"}};
}

json check_sparsity_defaults() {
    return json{{"pattern", ""}, {"seed", 1}, {"out", "."}};
}

json ode_sensitivity_defaults() {
    return json{{"source", "planar"},
                {"model", ""},
                {"T", 0.0},
                {"h_ref", 1e-3},
                {"y0", json::array({0.5, 0.0})},
                {"forward_file", "forward.csv"},
                {"sensitivity_file", "sensitivity.csv"},
                {"seed", 1},
                {"out", "."}};
}

json ode_explode_defaults() {
    return json{{"gamma", 5e-3},
                {"beta", json::array({1.0, 0.0})},
                {"y0", json::array({0.5, 0.0})},
                {"T", 0.0},
                {"step", 0.01},
                {"file", "probe.csv"},
                {"seed", 1},
                {"out", "."}};
}

json ode_period_defaults() {
    return json{{"points", json::array({json::array({0.6, 0.0}), json::array({0.9, 0.0})})},
                {"step", 1e-3},
                {"horizon", 100.0},
                {"file", "periods.csv"},
                {"seed", 1},
                {"out", "."}};
}

json ode_ode2ode_defaults() {
    return json{{"path", "both"},
                {"T", 5.0},
                {"omega", 0.7},
                {"y0", json::array({0.5, 0.3})},
                {"delta", json::array({0.7, -0.4})},
                {"h_ref", 1e-3},
                {"file", "ode2ode.csv"},
                {"seed", 1},
                {"out", "."}};
}

// standard flags shared by every command; flag values override config keys
struct Common {
    std::string config_path;
    std::string out;
    std::uint64_t seed = 0;
    bool assert_gate = false;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* out_opt = nullptr;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "JSON settings file");
        seed_opt = app->add_option("--seed", seed, "seed override");
        out_opt = app->add_option("--out", out, "output directory override");
        app->add_flag("--assert", assert_gate, "turn result thresholds into the exit code");
    }
    json settings(const json& defaults) const {
        json cfg = merge_config(defaults, config_path);
        if (seed_opt->count() > 0) cfg["seed"] = seed;
        if (out_opt->count() > 0) cfg["out"] = out;
        return cfg;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hamiltonian-inspired deep network toolkit"};
    app.require_subcommand(1);
    int rc = 0;

    Common c_gen;
    std::string gen_dataset;
    auto* gen = app.add_subcommand("generate", "write a synthetic dataset CSV");
    c_gen.attach(gen);
    auto* gen_ds_opt = gen->add_option("--dataset", gen_dataset,
                                       "swiss_roll, double_moons, or double_circles");
    gen->callback([&] {
        json cfg = c_gen.settings(generate_defaults());
        if (gen_ds_opt->count() > 0) cfg["dataset"] = gen_dataset;
        rc = cmd_generate(cfg);
    });

    Common c_train;
    auto* tr = app.add_subcommand("train", "train a network and write model + logs");
    c_train.attach(tr);
    tr->callback([&] { rc = cmd_train(c_train.settings(train_defaults()), c_train.assert_gate); });

    Common c_eval;
    auto* ev = app.add_subcommand("eval", "score a saved model on a dataset");
    c_eval.attach(ev);
    ev->callback([&] { rc = cmd_eval(c_eval.settings(eval_defaults()), c_eval.assert_gate); });

    Common c_report;
    auto* gr = app.add_subcommand("grad-report", "per-layer backward sensitivity norms");
    c_report.attach(gr);
    gr->callback([&] { rc = cmd_grad_report(c_report.settings(grad_report_defaults())); });

    Common c_sparse;
    std::string sparse_pattern;
    auto* cs = app.add_subcommand("check-sparsity", "validate a communication pattern file");
    c_sparse.attach(cs);
    auto* cs_pat_opt = cs->add_option("--pattern", sparse_pattern, "pattern JSON path");
    cs->callback([&] {
        json cfg = c_sparse.settings(check_sparsity_defaults());
        if (cs_pat_opt->count() > 0) cfg["pattern"] = sparse_pattern;
        rc = cmd_check_sparsity(cfg);
    });

    auto* lab = app.add_subcommand("ode-lab", "continuous-time experiments");
    lab->require_subcommand(1);

    Common c_sens;
    auto* sens = lab->add_subcommand("sensitivity", "forward flow + backward sensitivity CSVs");
    c_sens.attach(sens);
    sens->callback([&] {
        rc = cmd_ode_sensitivity(c_sens.settings(ode_sensitivity_defaults()), c_sens.assert_gate);
    });

    Common c_explode;
    auto* expl = lab->add_subcommand("explode", "finite-difference divergence probe CSV");
    c_explode.attach(expl);
    expl->callback([&] { rc = cmd_ode_explode(c_explode.settings(ode_explode_defaults())); });

    Common c_period;
    auto* per = lab->add_subcommand("period", "orbit periods at chosen start points");
    c_period.attach(per);
    per->callback(
        [&] { rc = cmd_ode_period(c_period.settings(ode_period_defaults()), c_period.assert_gate); });

    Common c_o2o;
    auto* o2o = lab->add_subcommand("ode2ode", "backward delta ratio range on orthogonal paths");
    c_o2o.attach(o2o);
    o2o->callback(
        [&] { rc = cmd_ode_ode2ode(c_o2o.settings(ode_ode2ode_defaults()), c_o2o.assert_gate); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const hdnn::DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return rc;
}
