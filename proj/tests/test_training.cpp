#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <hdnn/adam.hpp>
#include <hdnn/dataset.hpp>
#include <hdnn/fd.hpp>
#include <hdnn/loss.hpp>
#include <hdnn/regularizer.hpp>
#include <hdnn/train.hpp>

using namespace hdnn;
using Catch::Matchers::WithinAbs;

namespace {

Dataset moons4(int s, std::uint64_t seed) {
    return augment(gen_double_moons(s, 0.05, seed), 4);
}

// Objective that train()'s inner phases are descending on a fixed batch.
double batch_objective(const Network& net, const Dataset& ds, const RegConfig& reg) {
    double ce = 0.0;
    for (int i = 0; i < ds.size(); ++i) {
        const ForwardTrace tr = forward_states(net, ds.features[std::size_t(i)]);
        ce += softmax_cross_entropy(head_logits(net, tr.states.back()),
                                    ds.labels[std::size_t(i)]);
    }
    return ce / ds.size() + reg_value(net, reg);
}

}  // namespace

TEST_CASE("cross entropy hand values") {
    REQUIRE_THAT(softmax_cross_entropy({0.0, 0.0}, 0), WithinAbs(std::log(2.0), 1e-15));
    const Vec g = softmax_cross_entropy_grad({0.0, 0.0}, 0);
    REQUIRE_THAT(g[0], WithinAbs(-0.5, 1e-15));
    REQUIRE_THAT(g[1], WithinAbs(0.5, 1e-15));

    // wide margin: loss = log(1 + e^-20).  The shift-and-subtract evaluation
    // cancels near the unit roundoff of the max logit, hence the tolerance.
    const double want = std::log1p(std::exp(-20.0));
    REQUIRE_THAT(softmax_cross_entropy({10.0, -10.0}, 0), WithinAbs(want, 1e-14));
    const Vec g2 = softmax_cross_entropy_grad({10.0, -10.0}, 0);
    REQUIRE_THAT(g2[0], WithinAbs(-want, 1e-12));  // for small p, -p ~ -log1p(p)
    REQUIRE_THAT(g2[1], WithinAbs(want, 1e-12));
}

TEST_CASE("cross entropy stays finite on extreme logits") {
    REQUIRE(std::isfinite(softmax_cross_entropy({1000.0, 0.0}, 0)));
    REQUIRE_THAT(softmax_cross_entropy({1000.0, 0.0}, 0), WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(softmax_cross_entropy({-1000.0, 0.0}, 0), WithinAbs(1000.0, 1e-9));
    const Vec p = softmax_probs({500.0, 500.0, 500.0});
    REQUIRE_THAT(p[0] + p[1] + p[2], WithinAbs(1.0, 1e-12));
}

TEST_CASE("cross entropy gradient matches central differences") {
    Rng rng(501);
    for (int trial = 0; trial < 5; ++trial) {
        Vec logits(4, 0.0);
        for (double& x : logits) x = rng.normal(0.0, 2.0);
        const int label = int(rng.below(4));
        const Vec got = softmax_cross_entropy_grad(logits, label);
        const Vec want = fd_gradient(
            [&](const Vec& z) { return softmax_cross_entropy(z, label); }, logits);
        for (std::size_t i = 0; i < got.size(); ++i) {
            REQUIRE_THAT(got[i], WithinAbs(want[i], 1e-9 + 1e-7 * std::abs(want[i])));
        }
    }
}

TEST_CASE("cross entropy rejects bad input") {
    REQUIRE_THROWS_AS(softmax_cross_entropy({0.0, 0.0}, 2), std::invalid_argument);
    REQUIRE_THROWS_AS(softmax_cross_entropy({0.0, 0.0}, -1), std::invalid_argument);
    const double nan = std::nan("");
    REQUIRE_THROWS_AS(softmax_cross_entropy({nan, 0.0}, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(softmax_cross_entropy_grad({1.0 / 0.0, 0.0}, 0), std::invalid_argument);
}

TEST_CASE("smoothness penalty hand value and invariances") {
    Network net = make_network(Arch::H1, 2, 2, 0.5, Act::Tanh, 2, 1, false);
    std::get<H1Layer>(net.layers[0]).K = Mat(2, 2);  // zero
    std::get<H1Layer>(net.layers[1]).K = Mat::identity(2);
    std::get<H1Layer>(net.layers[0]).b = {0.0, 0.0};
    std::get<H1Layer>(net.layers[1]).b = {0.0, 0.0};
    REQUIRE_THAT(smoothness_value(net), WithinAbs(0.5, 1e-15));

    // identical layers: zero penalty
    std::get<H1Layer>(net.layers[1]).K = std::get<H1Layer>(net.layers[0]).K;
    REQUIRE_THAT(smoothness_value(net), WithinAbs(0.0, 0.0));

    // the mlp variant carries no step size, the penalty uses h = 1
    Network mlp = make_network(Arch::MLP, 2, 2, 0.5, Act::Tanh, 2, 1, false);
    std::get<MlpLayer>(mlp.layers[0]).K = Mat(2, 2);
    std::get<MlpLayer>(mlp.layers[1]).K = Mat::identity(2);
    std::get<MlpLayer>(mlp.layers[0]).b = {0.0, 0.0};
    std::get<MlpLayer>(mlp.layers[1]).b = {0.0, 0.0};
    REQUIRE_THAT(smoothness_value(mlp), WithinAbs(1.0, 1e-15));

    // shifting every layer's weights by the same matrix leaves it unchanged
    Network ms3 = make_network(Arch::MS3, 6, 4, 0.3, Act::Tanh, 2, 17, false);
    const double before = smoothness_value(ms3);
    for (Layer& l : ms3.layers) {
        auto& m = std::get<MS3Layer>(l);
        for (double& x : m.K1.a) x += 0.37;
        for (double& x : m.K2.a) x -= 0.21;
        for (double& x : m.b1) x += 1.5;
    }
    REQUIRE_THAT(smoothness_value(ms3), WithinAbs(before, 1e-12));
}

TEST_CASE("regularizer gradients match central differences") {
    RegConfig cfg;
    cfg.alpha = 0.3;
    cfg.alpha_ell = 0.2;
    cfg.alpha_n = 0.1;
    cfg.norm_reg = 0.05;

    for (Arch arch : {Arch::H1, Arch::H2, Arch::MS2, Arch::MLP}) {
        Network net = make_network(arch, 4, 3, 0.5, Act::Tanh, 2, 61, arch == Arch::H1);
        Rng rng(62);
        for (double& x : net.head.W.a) x = rng.normal(0.0, 0.5);

        // analytic: structural hidden part + flat L2 pieces, like the trainer
        GradientSet g = make_zero_grads(net);
        reg_accumulate_hidden(net, cfg, g);
        auto hidden = flatten_grads(net, g, ParamSel::Hidden);
        vec_axpy(hidden, cfg.alpha_ell, flatten_params(net, ParamSel::Hidden));
        auto head = flatten_params(net, ParamSel::Head);
        for (double& x : head) x *= cfg.alpha_n;
        std::vector<double> analytic = hidden;
        analytic.insert(analytic.end(), head.begin(), head.end());

        const auto numeric = fd_gradient(
            [&](const Vec& p) {
                Network copy = net;
                unflatten_params(copy, p, ParamSel::All);
                return reg_value(copy, cfg);
            },
            flatten_params(net, ParamSel::All));

        REQUIRE(analytic.size() == numeric.size());
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            INFO(arch_name(arch) << " entry " << i);
            REQUIRE_THAT(analytic[i], WithinAbs(numeric[i], 1e-8 + 1e-5 * std::abs(numeric[i])));
        }
    }
}

TEST_CASE("adam basics") {
    AdamConfig cfg;
    cfg.lr = 0.01;
    AdamState st;
    std::vector<double> p = {1.0, -2.0};

    SECTION("zero gradient leaves parameters in place") {
        adam_step(st, cfg, p, {0.0, 0.0});
        REQUIRE(p == std::vector<double>{1.0, -2.0});
        REQUIRE(st.t == 1);
    }

    SECTION("first step is close to a signed learning-rate move") {
        adam_step(st, cfg, p, {0.5, -0.3});
        REQUIRE_THAT(p[0], WithinAbs(1.0 - cfg.lr, 1e-6));
        REQUIRE_THAT(p[1], WithinAbs(-2.0 + cfg.lr, 1e-6));
    }

    SECTION("constant gradient keeps moving the same way") {
        adam_step(st, cfg, p, {0.5, -0.3});
        const std::vector<double> after_one = p;
        adam_step(st, cfg, p, {0.5, -0.3});
        REQUIRE(p[0] < after_one[0]);
        REQUIRE(p[1] > after_one[1]);
    }

    SECTION("bad input throws") {
        REQUIRE_THROWS_AS(adam_step(st, cfg, p, {1.0}), std::invalid_argument);
        REQUIRE_THROWS_AS(adam_step(st, cfg, p, {std::nan(""), 0.0}), std::runtime_error);
    }
}

TEST_CASE("training is deterministic under the seed") {
    const Dataset train_set = moons4(64, 5);
    const Dataset test_set = moons4(64, 6);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 16;
    cfg.monitor_samples = 4;
    cfg.seed = 9;

    Network a = make_network(Arch::H1, 4, 2, 0.5, Act::Tanh, 2, 70, false);
    Network b = make_network(Arch::H1, 4, 2, 0.5, Act::Tanh, 2, 70, false);
    const TrainResult ra = train(a, train_set, test_set, cfg);
    const TrainResult rb = train(b, train_set, test_set, cfg);

    REQUIRE(flatten_params(a) == flatten_params(b));
    REQUIRE(ra.history.size() == rb.history.size());
    for (std::size_t i = 0; i < ra.history.size(); ++i) {
        REQUIRE(ra.history[i].train_loss == rb.history[i].train_loss);
        REQUIRE(ra.history[i].min_bsm == rb.history[i].min_bsm);
        REQUIRE(ra.history[i].max_bsm == rb.history[i].max_bsm);
    }
}

TEST_CASE("zero learning rate trains to a no-op") {
    const Dataset train_set = moons4(32, 5);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch = 16;
    cfg.lr = 0.0;
    cfg.monitor_samples = 2;

    Network net = make_network(Arch::MS1, 4, 2, 0.5, Act::Tanh, 2, 71, false);
    const auto before = flatten_params(net);
    train(net, train_set, train_set, cfg);
    REQUIRE(flatten_params(net) == before);
}

TEST_CASE("zero epochs returns the initial network and an empty history") {
    const Dataset train_set = moons4(32, 5);
    TrainConfig cfg;
    cfg.epochs = 0;
    Network net = make_network(Arch::H2, 4, 2, 0.5, Act::Tanh, 2, 72, false);
    const auto before = flatten_params(net);
    const TrainResult r = train(net, train_set, train_set, cfg);
    REQUIRE(r.history.empty());
    REQUIRE(flatten_params(net) == before);
    REQUIRE(r.test_acc == evaluate(net, train_set));
}

TEST_CASE("history layout covers every minibatch") {
    const Dataset train_set = moons4(40, 5);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch = 16;  // 3 batches per epoch, last one short
    cfg.monitor_samples = 2;
    Network net = make_network(Arch::H2, 4, 2, 0.5, Act::Tanh, 2, 73, false);
    const TrainResult r = train(net, train_set, train_set, cfg);

    REQUIRE(r.history.size() == 9);
    for (std::size_t i = 0; i < r.history.size(); ++i) {
        const auto& row = r.history[i];
        REQUIRE(row.iteration == long(i) + 1);
        REQUIRE(row.epoch == int(i / 3) + 1);
        REQUIRE(row.min_bsm > 0.0);
        REQUIRE(row.min_bsm <= row.max_bsm);
        REQUIRE(std::isfinite(row.train_loss));
        REQUIRE(row.train_acc >= 0.0);
        REQUIRE(row.train_acc <= 1.0);
    }
}

TEST_CASE("head phase never touches hidden weights and vice versa") {
    const Dataset train_set = moons4(32, 5);
    Network net = make_network(Arch::MS3, 4, 3, 0.5, Act::Tanh, 2, 74, false);
    TrainConfig cfg;

    std::vector<Vec> y_last;
    std::vector<int> labels;
    for (int i = 0; i < train_set.size(); ++i) {
        y_last.push_back(forward_states(net, train_set.features[std::size_t(i)]).states.back());
        labels.push_back(train_set.labels[std::size_t(i)]);
    }

    const auto hidden_before = flatten_params(net, ParamSel::Hidden);
    const auto head_before = flatten_params(net, ParamSel::Head);
    AdamState head_state;
    const int steps = head_phase(net, y_last, labels, cfg, head_state);
    REQUIRE(steps > 0);
    REQUIRE(flatten_params(net, ParamSel::Hidden) == hidden_before);
    REQUIRE(flatten_params(net, ParamSel::Head) != head_before);

    const auto head_mid = flatten_params(net, ParamSel::Head);
    std::vector<ForwardTrace> traces;
    for (int i = 0; i < train_set.size(); ++i) {
        traces.push_back(forward_states(net, train_set.features[std::size_t(i)]));
    }
    AdamState hidden_state;
    double acc = 0.0;
    hidden_phase(net, traces, labels, cfg, hidden_state, acc);
    REQUIRE(flatten_params(net, ParamSel::Head) == head_mid);
    REQUIRE(flatten_params(net, ParamSel::Hidden) != hidden_before);
}

TEST_CASE("one coordinate-descent iteration decreases the objective at small enough rate") {
    const Dataset batch_set = moons4(16, 21);
    Network base = make_network(Arch::H2, 4, 3, 0.5, Act::Tanh, 2, 75, false);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch = batch_set.size();
    cfg.monitor_samples = 1;
    cfg.seed = 4;

    const double before = batch_objective(base, batch_set, cfg.reg);
    bool decreased = false;
    for (int halving = 0; halving < 20 && !decreased; ++halving) {
        Network net = base;
        train(net, batch_set, batch_set, cfg);
        decreased = batch_objective(net, batch_set, cfg.reg) < before;
        cfg.lr *= 0.5;
    }
    REQUIRE(decreased);
}

TEST_CASE("divergence guard aborts the loop") {
    const Dataset train_set = moons4(32, 5);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch = 16;
    cfg.divergence_limit = 1e-12;  // any real loss trips it
    Network net = make_network(Arch::H1, 4, 2, 0.5, Act::Tanh, 2, 76, false);
    REQUIRE_THROWS_AS(train(net, train_set, train_set, cfg), DivergenceError);
}

TEST_CASE("the epoch hook sees every completed epoch with patched accuracy") {
    const Dataset train_set = moons4(32, 6);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch = 16;
    cfg.monitor_samples = 2;
    std::vector<int> epochs_seen;
    std::vector<std::size_t> history_sizes;
    Vec last_hidden;
    cfg.on_epoch_end = [&](int epoch, const Network& snapshot,
                           const std::vector<HistoryRow>& history) {
        epochs_seen.push_back(epoch);
        history_sizes.push_back(history.size());
        REQUIRE(history.back().test_acc == evaluate(snapshot, train_set));
        last_hidden = flatten_params(snapshot, ParamSel::Hidden);
    };
    Network net = make_network(Arch::H1, 4, 2, 0.5, Act::Tanh, 2, 79, false);
    train(net, train_set, train_set, cfg);
    REQUIRE(epochs_seen == std::vector<int>{1, 2, 3});
    REQUIRE(history_sizes == std::vector<std::size_t>{2, 4, 6});
    REQUIRE(last_hidden == flatten_params(net, ParamSel::Hidden));
}

TEST_CASE("evaluate scores a constant predictor at exactly one half") {
    Network net = make_network(Arch::H1, 4, 1, 0.5, Act::Tanh, 2, 77, false);
    net.head.W = Mat(2, 4);
    net.head.c = {1.0, 0.0};
    const Dataset d = moons4(100, 9);
    REQUIRE(evaluate(net, d) == 0.5);
}

TEST_CASE("a short run separates the moons") {
    const Dataset train_set = moons4(200, 31);
    const Dataset test_set = moons4(200, 32);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch = 25;
    cfg.monitor_samples = 2;
    cfg.seed = 3;
    Network net = make_network(Arch::H1, 4, 2, 0.5, Act::Tanh, 2, 78, false);
    const TrainResult r = train(net, train_set, test_set, cfg);
    REQUIRE(r.test_acc >= 0.9);
}
