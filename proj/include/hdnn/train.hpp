#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "adam.hpp"
#include "backprop.hpp"
#include "dataset.hpp"
#include "layers.hpp"
#include "loss.hpp"
#include "regularizer.hpp"
#include "rng.hpp"

// Coordinate-descent training loop: per minibatch, up to head_iters Adam
// steps on the output layer alone (hidden weights frozen, so the hidden
// forward passes are computed once and reused), then a single Adam step on
// the hidden weights using the freshly updated head.  Head and hidden
// optimizers keep separate Adam moment buffers.
//
// Everything is driven by one seeded RNG (batch shuffling only), so a
// (config, seed) pair reproduces training bit for bit.

namespace hdnn {

struct HistoryRow {
    int epoch = 0;        // 1-based
    long iteration = 0;   // global, 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;  // updated at epoch boundaries, carried in between
    double min_bsm = 0.0;   // over monitored samples and depths 1..N
    double max_bsm = 0.0;
};

struct TrainConfig {
    int epochs = 50;
    int batch = 125;
    double lr = 2.5e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int head_iters = 10;
    double head_tol = 1e-6;
    std::uint64_t seed = 1;
    RegConfig reg;
    int monitor_samples = 8;     // fixed prefix of the training set used for BSM logging
    double divergence_limit = 1e6;
    // optional projection applied to the hidden gradients before the Adam
    // step (used for block-sparsity masks); masked weights that start at
    // zero then stay exactly zero because their Adam moments never move
    std::function<void(GradientSet&)> grad_projector;
    // invoked after every completed epoch with the refreshed test accuracy
    // already patched into the last history row; a divergence mid-epoch
    // therefore leaves the previous epoch as the last observed state
    std::function<void(int, const Network&, const std::vector<HistoryRow>&)> on_epoch_end;
};

struct TrainResult {
    std::vector<HistoryRow> history;
    double train_acc = 0.0;  // last minibatch accuracy
    double test_acc = 0.0;   // final full test evaluation
};

class DivergenceError : public std::runtime_error {
  public:
    explicit DivergenceError(double loss)
        : std::runtime_error("training diverged, loss = " + std::to_string(loss)) {}
};

inline double evaluate(const Network& net, const Dataset& ds) {
    if (ds.size() == 0) return 0.0;
    int correct = 0;
    for (int i = 0; i < ds.size(); ++i) {
        const ForwardTrace tr = forward_states(net, ds.features[std::size_t(i)]);
        const Vec logits = head_logits(net, tr.states.back());
        if (predict_class(logits) == ds.labels[std::size_t(i)]) ++correct;
    }
    return double(correct) / double(ds.size());
}

namespace detail {

// min/max 2-norm over depths 1..N for the monitored samples
inline void monitor_bsm(const Network& net, const Dataset& ds, int count, double& min_out,
                        double& max_out) {
    min_out = 0.0;
    max_out = 0.0;
    bool first = true;
    const int m = std::min(count, ds.size());
    for (int i = 0; i < m; ++i) {
        const ForwardTrace tr = forward_states(net, ds.features[std::size_t(i)]);
        const BsmTrace bsm = bsm_trace(net, tr);
        for (std::size_t k = 1; k < bsm.norm2.size(); ++k) {
            if (first || bsm.norm2[k] < min_out) min_out = bsm.norm2[k];
            if (first || bsm.norm2[k] > max_out) max_out = bsm.norm2[k];
            first = false;
        }
    }
}

}  // namespace detail

// Runs the head sub-problem on one minibatch: up to cfg.head_iters Adam
// steps on (W, c), stopping early once the head gradient norm drops below
// cfg.head_tol.  y_last holds the per-sample hidden outputs, which stay
// valid because hidden weights are untouched here.  Returns the number of
// Adam steps taken.
inline int head_phase(Network& net, const std::vector<Vec>& y_last, const std::vector<int>& labels,
                      const TrainConfig& cfg, AdamState& state) {
    const AdamConfig acfg{cfg.lr, cfg.beta1, cfg.beta2, 1e-8};
    const double inv_b = 1.0 / double(y_last.size());
    int steps = 0;
    for (int it = 0; it < cfg.head_iters; ++it) {
        Mat gW(net.head.W.rows, net.head.W.cols);
        Vec gc(net.head.c.size(), 0.0);
        for (std::size_t i = 0; i < y_last.size(); ++i) {
            const Vec logits = head_logits(net, y_last[i]);
            const Vec dl = softmax_cross_entropy_grad(logits, labels[i]);
            mat_axpy(gW, inv_b, outer(dl, y_last[i]));
            vec_axpy(gc, inv_b, dl);
        }
        std::vector<double> flat;
        flat.reserve(gW.a.size() + gc.size());
        flat.insert(flat.end(), gW.a.begin(), gW.a.end());
        flat.insert(flat.end(), gc.begin(), gc.end());
        if (cfg.reg.alpha_n != 0.0) {
            vec_axpy(flat, cfg.reg.alpha_n, flatten_params(net, ParamSel::Head));
        }
        if (nrm2(flat) < cfg.head_tol) break;
        auto params = flatten_params(net, ParamSel::Head);
        adam_step(state, acfg, params, flat);
        unflatten_params(net, params, ParamSel::Head);
        ++steps;
    }
    return steps;
}

// One hidden-weight Adam step on the minibatch.  Returns the batch objective
// (mean cross entropy plus regularizers, evaluated before the step) and the
// batch accuracy through acc_out.
inline double hidden_phase(Network& net, const std::vector<ForwardTrace>& traces,
                           const std::vector<int>& labels, const TrainConfig& cfg,
                           AdamState& state, double& acc_out) {
    const AdamConfig acfg{cfg.lr, cfg.beta1, cfg.beta2, 1e-8};
    const double inv_b = 1.0 / double(traces.size());
    GradientSet g = make_zero_grads(net);
    double ce = 0.0;
    int correct = 0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const Vec& yN = traces[i].states.back();
        const Vec logits = head_logits(net, yN);
        ce += softmax_cross_entropy(logits, labels[i]);
        if (predict_class(logits) == labels[i]) ++correct;
        const Vec dl = softmax_cross_entropy_grad(logits, labels[i]);
        const Vec dN = head_backward(net, yN, dl, g);
        const auto deltas = backward_deltas(net, traces[i], dN);
        accumulate_param_grads(net, traces[i], deltas, g);
    }
    scale_grads(g, inv_b);
    reg_accumulate_hidden(net, cfg.reg, g);
    if (cfg.grad_projector) cfg.grad_projector(g);

    auto flat = flatten_grads(net, g, ParamSel::Hidden);
    if (cfg.reg.alpha_ell != 0.0) {
        vec_axpy(flat, cfg.reg.alpha_ell, flatten_params(net, ParamSel::Hidden));
    }

    const double loss = ce * inv_b + reg_value(net, cfg.reg);
    acc_out = double(correct) * inv_b;
    if (!std::isfinite(loss) || loss > cfg.divergence_limit) throw DivergenceError(loss);

    auto params = flatten_params(net, ParamSel::Hidden);
    adam_step(state, acfg, params, flat);
    unflatten_params(net, params, ParamSel::Hidden);
    return loss;
}

inline TrainResult train(Network& net, const Dataset& train_set, const Dataset& test_set,
                         const TrainConfig& cfg) {
    if (train_set.size() == 0) throw std::invalid_argument("train: empty training set");
    if (train_set.dim() != net.n) throw std::invalid_argument("train: feature width mismatch");
    Rng rng(cfg.seed);
    AdamState head_state, hidden_state;
    TrainResult result;
    result.history.reserve(std::size_t(cfg.epochs) *
                           std::size_t((train_set.size() + cfg.batch - 1) / cfg.batch));

    double test_acc = evaluate(net, test_set);
    long iteration = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto batches = epoch_batches(train_set.size(), cfg.batch, rng);
        for (const auto& batch : batches) {
            ++iteration;
            std::vector<ForwardTrace> traces;
            std::vector<Vec> y_last;
            std::vector<int> labels;
            traces.reserve(batch.size());
            y_last.reserve(batch.size());
            labels.reserve(batch.size());
            for (int idx : batch) {
                traces.push_back(forward_states(net, train_set.features[std::size_t(idx)]));
                y_last.push_back(traces.back().states.back());
                labels.push_back(train_set.labels[std::size_t(idx)]);
            }

            head_phase(net, y_last, labels, cfg, head_state);
            double batch_acc = 0.0;
            const double loss = hidden_phase(net, traces, labels, cfg, hidden_state, batch_acc);

            HistoryRow row;
            row.epoch = epoch;
            row.iteration = iteration;
            row.train_loss = loss;
            row.train_acc = batch_acc;
            row.test_acc = test_acc;
            detail::monitor_bsm(net, train_set, cfg.monitor_samples, row.min_bsm, row.max_bsm);
            result.history.push_back(row);
            result.train_acc = batch_acc;
        }
        test_acc = evaluate(net, test_set);
        if (!result.history.empty()) result.history.back().test_acc = test_acc;
        if (cfg.on_epoch_end) cfg.on_epoch_end(epoch, net, result.history);
    }
    result.test_acc = test_acc;
    return result;
}

}  // namespace hdnn
