#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <vector>

#include <hdnn/backprop.hpp>
#include <hdnn/dataset.hpp>
#include <hdnn/sparsity.hpp>
#include <hdnn/train.hpp>

using namespace hdnn;

namespace {

// Independent take on the admissibility test: ordinary integer matrix
// arithmetic instead of the boolean semiring.
bool admissible_ints(const BinMat& S, const BinMat& T, const BinMat& R) {
    const int M = S.rows;
    std::vector<std::vector<int>> rtr(std::size_t(M), std::vector<int>(std::size_t(M), 0));
    for (int i = 0; i < M; ++i)
        for (int k = 0; k < M; ++k)
            for (int l = 0; l < M; ++l) rtr[std::size_t(i)][std::size_t(k)] += R(l, i) * R(l, k);
    for (int i = 0; i < M; ++i) {
        for (int k = 0; k < M; ++k) {
            int c = 0;
            for (int l = 0; l < M; ++l) {
                c += T(i, l) * rtr[std::size_t(l)][std::size_t(k)];
                c += rtr[std::size_t(i)][std::size_t(l)] * T(l, k);
            }
            if (c > 0 && !S(i, k)) return false;
        }
    }
    return true;
}

BinMat from_rows(const std::vector<std::vector<int>>& rows) {
    const int M = int(rows.size());
    BinMat B(M, M);
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < M; ++j) B(i, j) = std::uint8_t(rows[std::size_t(i)][std::size_t(j)]);
    return B;
}

BinMat random_unit_diag(int M, Rng& rng, bool symmetric) {
    BinMat B = BinMat::identity(M);
    for (int i = 0; i < M; ++i)
        for (int j = symmetric ? i + 1 : 0; j < M; ++j) {
            if (i == j) continue;
            if (rng.below(3) == 0) {
                B(i, j) = 1;
                if (symmetric) B(j, i) = 1;
            }
        }
    return B;
}

// Random weights that fill every allowed block, then masked.
Network masked_net(const SparsityPattern& pat, int layers, std::uint64_t seed) {
    const int n = 2 * pat.half_width();
    Network net = make_network(Arch::H2, n, layers, 0.5, Act::Tanh, 2, seed);
    Rng rng(seed + 1);
    for (Layer& l : net.layers) {
        auto& h2 = std::get<H2Layer>(l);
        for (double& x : h2.X.a) x = rng.normal(0.0, 0.6);
        for (double& x : h2.bp) x = rng.normal(0.0, 0.3);
        for (double& x : h2.bq) x = rng.normal(0.0, 0.3);
    }
    apply_masks(net, pat);
    return net;
}

Network one_layer(const Network& net, int j) {
    Network sub;
    sub.arch = net.arch;
    sub.act = net.act;
    sub.n = net.n;
    sub.layers = {net.layers[std::size_t(j)]};
    sub.head = net.head;
    return sub;
}

// Which nodes a single layer actually reads from, probed entry by entry.  A
// probe into one half only counts responses in the other half: within one
// layer each half is refreshed in its own exchange round, and watching the
// probed half itself would fold two rounds together.  Masked-out weights are
// exact zeros, so a non-dependency shows up as a bitwise-identical output.
BinMat observed_dependency(const Network& net, const std::vector<int>& blocks,
                           std::uint64_t seed) {
    if (net.depth() != 1) throw std::logic_error("probe expects a single layer");
    const auto off = block_offsets(blocks);
    const int M = int(blocks.size());
    const int half = net.n / 2;
    const auto node_of = [&](int idx) {
        int i = 0;
        while (off[std::size_t(i) + 1] <= idx) ++i;
        return i;
    };

    Rng rng(seed);
    Vec y0(std::size_t(net.n), 0.0);
    Vec d0(std::size_t(net.n), 0.0);
    for (double& x : y0) x = rng.normal(0.0, 0.8);
    for (double& x : d0) x = rng.normal(0.0, 0.8);
    const double eps = 1e-6;

    BinMat D(M, M);
    const ForwardTrace tr = forward_states(net, y0);
    const Vec& base_out = tr.states.back();
    const Vec base_d = backward_deltas(net, tr, d0)[0];
    for (int e = 0; e < half; ++e) {
        Vec y = y0;
        y[std::size_t(half + e)] += eps;
        const Vec out_q = forward_states(net, y).states.back();
        y = y0;
        y[std::size_t(e)] += eps;
        const Vec out_p = forward_states(net, y).states.back();

        Vec d = d0;
        d[std::size_t(half + e)] += eps;
        const Vec del_q = backward_deltas(net, tr, d)[0];
        d = d0;
        d[std::size_t(e)] += eps;
        const Vec del_p = backward_deltas(net, tr, d)[0];

        for (int r = 0; r < half; ++r) {
            if (out_q[std::size_t(r)] != base_out[std::size_t(r)] ||
                del_q[std::size_t(r)] != base_d[std::size_t(r)]) {
                D(node_of(r), node_of(e)) = 1;
            }
            if (out_p[std::size_t(half + r)] != base_out[std::size_t(half + r)] ||
                del_p[std::size_t(half + r)] != base_d[std::size_t(half + r)]) {
                D(node_of(r), node_of(e)) = 1;
            }
        }
    }
    return D;
}

}  // namespace

TEST_CASE("boolean admissibility test agrees with integer arithmetic") {
    Rng rng(901);
    for (int trial = 0; trial < 500; ++trial) {
        const int M = 1 + int(rng.below(5));
        const BinMat S = random_unit_diag(M, rng, true);
        const BinMat T = random_unit_diag(M, rng, true);
        const BinMat R = random_unit_diag(M, rng, false);
        REQUIRE(admissible(S, T, R) == admissible_ints(S, T, R));
    }
}

TEST_CASE("a four node graph with one missing link admits switching structures") {
    const BinMat S = from_rows({{1, 1, 1, 1}, {1, 1, 1, 0}, {1, 1, 1, 1}, {1, 0, 1, 1}});
    const BinMat I4 = BinMat::identity(4);
    const BinMat Rb = from_rows({{1, 1, 1, 0}, {1, 1, 0, 0}, {1, 0, 1, 1}, {0, 0, 1, 1}});
    const BinMat Tc = from_rows({{1, 0, 1, 0}, {0, 1, 1, 0}, {1, 1, 1, 1}, {0, 0, 1, 1}});
    const BinMat Rc = from_rows({{1, 0, 0, 1}, {1, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}});

    // three different weight structures, all compatible with the same graph
    REQUIRE(admissible(S, S, I4));
    REQUIRE(admissible(S, I4, Rb));
    REQUIRE(admissible(S, Tc, Rc));

    // nodes 2 and 4 never exchange data; a dense structure is rejected
    REQUIRE(S(1, 3) == 0);
    REQUIRE_FALSE(admissible(S, BinMat::ones(4, 4), BinMat::ones(4, 4)));
    REQUIRE_FALSE(admissible(S, S, Rb));
}

TEST_CASE("isolated nodes force diagonal weight structures") {
    for (int M : {3, 4}) {
        const BinMat I = BinMat::identity(M);
        const int off_sym = M * (M - 1) / 2;
        const int off_all = M * (M - 1);
        for (int tb = 0; tb < (1 << off_sym); ++tb) {
            BinMat T = BinMat::identity(M);
            int bit = 0;
            for (int i = 0; i < M; ++i)
                for (int j = i + 1; j < M; ++j, ++bit)
                    if (tb >> bit & 1) T(i, j) = T(j, i) = 1;
            for (int rb = 0; rb < (1 << off_all); ++rb) {
                BinMat R = BinMat::identity(M);
                bit = 0;
                for (int i = 0; i < M; ++i)
                    for (int j = 0; j < M; ++j) {
                        if (i == j) continue;
                        if (rb >> bit & 1) R(i, j) = 1;
                        ++bit;
                    }
                const bool ok = admissible(I, T, R);
                REQUIRE(ok == (bin_equal(T, I) && bin_equal(R, I)));
            }
        }
    }
}

TEST_CASE("canonical structure choices always fit") {
    Rng rng(902);
    for (int trial = 0; trial < 60; ++trial) {
        const int M = 1 + int(rng.below(6));
        const BinMat S = random_unit_diag(M, rng, true);
        const BinMat I = BinMat::identity(M);
        REQUIRE(admissible(S, S, I));  // couple through X only
        REQUIRE(admissible(S, I, I));  // fully local weights
    }
}

TEST_CASE("exhaustive three node scan: accepted patterns probe local") {
    const int M = 3;
    int accepted = 0;
    for (int sb = 0; sb < 8; ++sb) {
        BinMat S = BinMat::identity(M);
        if (sb & 1) S(0, 1) = S(1, 0) = 1;
        if (sb & 2) S(0, 2) = S(2, 0) = 1;
        if (sb & 4) S(1, 2) = S(2, 1) = 1;
        for (int tb = 0; tb < 8; ++tb) {
            BinMat T = BinMat::identity(M);
            if (tb & 1) T(0, 1) = T(1, 0) = 1;
            if (tb & 2) T(0, 2) = T(2, 0) = 1;
            if (tb & 4) T(1, 2) = T(2, 1) = 1;
            for (int rb = 0; rb < 64; ++rb) {
                BinMat R = BinMat::identity(M);
                int bit = 0;
                for (int i = 0; i < M; ++i)
                    for (int j = 0; j < M; ++j) {
                        if (i == j) continue;
                        if (rb >> bit & 1) R(i, j) = 1;
                        ++bit;
                    }
                REQUIRE(admissible(S, T, R) == admissible_ints(S, T, R));
                if (!admissible(S, T, R)) continue;
                ++accepted;
                SparsityPattern pat;
                pat.blocks = {1, 1, 1};
                pat.S = S;
                pat.T = T;
                pat.R = {R};
                const Network net = masked_net(pat, 1, 7000 + std::uint64_t(accepted));
                const BinMat D = observed_dependency(net, pat.blocks, 40 + std::uint64_t(rb));
                REQUIRE(bin_leq(D, S));
            }
        }
    }
    REQUIRE(accepted >= 64);  // at least the fully local choice under every graph
}

TEST_CASE("random admissible patterns with uneven blocks probe local") {
    Rng rng(903);
    for (int trial = 0; trial < 100; ++trial) {
        SparsityPattern pat;
        const int M = 2 + int(rng.below(4));
        for (int i = 0; i < M; ++i) pat.blocks.push_back(1 + int(rng.below(2)));
        pat.T = random_unit_diag(M, rng, true);
        const int layers = 1 + int(rng.below(3));
        BinMat S(M, M);
        for (int j = 0; j < layers; ++j) {
            pat.R.push_back(random_unit_diag(M, rng, false));
            const BinMat rtr = bin_mul(bin_transpose(pat.R.back()), pat.R.back());
            S = bin_add(S, bin_add(bin_mul(pat.T, rtr), bin_mul(rtr, pat.T)));
        }
        // widen the graph a little; admissibility must survive extra edges
        S = bin_add(S, random_unit_diag(M, rng, true));
        pat.S = S;
        validate_pattern(pat);
        REQUIRE(pattern_admissible(pat));

        const Network net = masked_net(pat, layers, 7700 + std::uint64_t(trial));
        for (int j = 0; j < layers; ++j) {
            const BinMat D = observed_dependency(one_layer(net, j), pat.blocks,
                                                 50 + std::uint64_t(trial) * 7 + std::uint64_t(j));
            REQUIRE(bin_leq(D, pat.S));
        }
    }
}

TEST_CASE("masking zeroes exactly the blocked entries") {
    SparsityPattern pat;
    pat.blocks = {1, 2};
    pat.S = BinMat::ones(2, 2);
    pat.T = BinMat::identity(2);
    pat.R = {from_rows({{1, 0}, {1, 1}}), BinMat::identity(2)};

    Network net = make_network(Arch::H2, 6, 2, 0.5, Act::Tanh, 2, 11);
    Rng rng(12);
    for (Layer& l : net.layers)
        for (double& x : std::get<H2Layer>(l).X.a) x = rng.normal(0.0, 0.5);
    const Network before = net;
    apply_masks(net, pat);

    const auto off = block_offsets(pat.blocks);
    for (int j = 0; j < 2; ++j) {
        const auto& got = std::get<H2Layer>(net.layers[std::size_t(j)]);
        const auto& was = std::get<H2Layer>(before.layers[std::size_t(j)]);
        for (int r = 0; r < 3; ++r) {
            const int br = r < off[1] ? 0 : 1;
            for (int c = 0; c < 3; ++c) {
                const int bc = c < off[1] ? 0 : 1;
                if (pat.R[std::size_t(j)](br, bc)) {
                    REQUIRE(got.Kp(r, c) == was.Kp(r, c));
                    REQUIRE(got.Kq(r, c) == was.Kq(r, c));
                } else {
                    REQUIRE(got.Kp(r, c) == 0.0);
                    REQUIRE(got.Kq(r, c) == 0.0);
                }
                if (pat.T(br, bc)) {
                    REQUIRE(got.X(r, c) == was.X(r, c));
                } else {
                    REQUIRE(got.X(r, c) == 0.0);
                }
            }
        }
        REQUIRE(got.bp == was.bp);
        REQUIRE(got.bq == was.bq);
    }

    SECTION("mismatched shapes are rejected") {
        Network h1 = make_network(Arch::H1, 6, 2, 0.5, Act::Tanh, 2, 13);
        REQUIRE_THROWS_AS(apply_masks(h1, pat), std::invalid_argument);
        SparsityPattern wrong = pat;
        wrong.R.pop_back();
        REQUIRE_THROWS_AS(apply_masks(net, wrong), std::invalid_argument);
        wrong = pat;
        wrong.blocks = {1, 1};
        wrong.R = {BinMat::identity(2), BinMat::identity(2)};
        REQUIRE_THROWS_AS(apply_masks(net, wrong), std::invalid_argument);
    }
}

TEST_CASE("gradient masking matches weight masking") {
    SparsityPattern pat;
    pat.blocks = {1, 1};
    pat.S = BinMat::ones(2, 2);
    pat.T = BinMat::identity(2);
    pat.R = {from_rows({{1, 1}, {0, 1}})};

    Network net = masked_net(pat, 1, 14);
    Rng rng(15);
    Vec x(4, 0.0), dout(2, 0.0);
    for (double& v : x) v = rng.normal(0.0, 1.0);
    for (double& v : dout) v = rng.normal(0.0, 1.0);

    GradientSet g = make_zero_grads(net);
    const ForwardTrace tr = forward_states(net, x);
    const Vec dy = head_backward(net, tr.states.back(), dout, g);
    accumulate_param_grads(net, tr, backward_deltas(net, tr, dy), g);

    const GradientSet before = g;
    mask_grads(net, pat, g);
    const auto& gl = std::get<H2Layer>(g.layers[0]);
    const auto& bl = std::get<H2Layer>(before.layers[0]);
    REQUIRE(gl.Kp(1, 0) == 0.0);
    REQUIRE(gl.Kq(1, 0) == 0.0);
    REQUIRE(gl.X(0, 1) == 0.0);
    REQUIRE(gl.X(1, 0) == 0.0);
    REQUIRE(gl.Kp(0, 1) == bl.Kp(0, 1));
    REQUIRE(gl.Kq(0, 0) == bl.Kq(0, 0));
    REQUIRE(gl.bp == bl.bp);
    REQUIRE(g.gW.a == before.gW.a);
}

TEST_CASE("masked weights stay exactly zero through training") {
    SparsityPattern pat;
    pat.blocks = {1, 1, 1, 1};
    pat.S = ring_adjacency(4, 2);
    pat.T = BinMat::identity(4);
    pat.R = {ring_adjacency(4, 1), ring_adjacency(4, 1)};
    REQUIRE(pattern_admissible(pat));

    Network net = make_network(Arch::H2, 8, 2, 0.5, Act::Tanh, 2, 16);
    apply_masks(net, pat);
    const Network init = net;

    const Dataset train_set = augment(gen_double_circles(32, 0.1, 3), 8, {{0, 0}, {1, 6}});
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 16;
    cfg.monitor_samples = 2;
    cfg.grad_projector = [&](GradientSet& g) { mask_grads(net, pat, g); };
    train(net, train_set, train_set, cfg);

    const auto off = block_offsets(pat.blocks);
    bool some_moved = false;
    for (int j = 0; j < 2; ++j) {
        const auto& l = std::get<H2Layer>(net.layers[std::size_t(j)]);
        const auto& l0 = std::get<H2Layer>(init.layers[std::size_t(j)]);
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) {
                if (!pat.R[std::size_t(j)](r, c)) {
                    REQUIRE(l.Kp(r, c) == 0.0);
                    REQUIRE(l.Kq(r, c) == 0.0);
                } else if (l.Kp(r, c) != l0.Kp(r, c)) {
                    some_moved = true;
                }
                if (!pat.T(r, c)) REQUIRE(l.X(r, c) == 0.0);
            }
        }
        (void)off;
    }
    REQUIRE(some_moved);
}

TEST_CASE("masked networks keep the no-vanishing norm floor") {
    SparsityPattern pat;
    pat.blocks = {1, 1, 1, 1};
    pat.S = ring_adjacency(4, 2);
    pat.T = BinMat::identity(4);
    for (int j = 0; j < 8; ++j) pat.R.push_back(ring_adjacency(4, 1));

    // X stays at the identity under a diagonal T mask, so the layer maps keep
    // the structure that makes every backward product norm at least one
    Network net = make_network(Arch::H2, 8, 8, 0.5, Act::Tanh, 2, 17);
    apply_masks(net, pat);
    Rng rng(18);
    Vec x(8, 0.0);
    for (double& v : x) v = rng.normal(0.0, 1.0);
    const BsmTrace bsm = bsm_trace(net, forward_states(net, x));
    for (double nn : bsm.norm2) REQUIRE(nn >= 1.0 - 1e-9);
}

TEST_CASE("pattern files round trip and reject malformed input") {
    SparsityPattern pat;
    pat.blocks = std::vector<int>(8, 1);
    pat.S = ring_adjacency(8, 2);
    pat.T = BinMat::identity(8);
    for (int j = 0; j < 3; ++j) pat.R.push_back(ring_adjacency(8, 1));

    const std::string path = "tmp_pattern.json";
    save_pattern(pat, path);
    const SparsityPattern back = load_pattern(path);
    REQUIRE(back.blocks == pat.blocks);
    REQUIRE(bin_equal(back.S, pat.S));
    REQUIRE(bin_equal(back.T, pat.T));
    REQUIRE(back.R.size() == 3);
    for (int j = 0; j < 3; ++j) REQUIRE(bin_equal(back.R[std::size_t(j)], pat.R[std::size_t(j)]));
    std::remove(path.c_str());

    nlohmann::json doc = pattern_to_json(pat);
    doc["S"][0][1] = 2;
    REQUIRE_THROWS_AS(pattern_from_json(doc), std::runtime_error);
    doc = pattern_to_json(pat);
    doc.erase("T");
    REQUIRE_THROWS_AS(pattern_from_json(doc), std::runtime_error);
    doc = pattern_to_json(pat);
    doc["extra"] = 1;
    REQUIRE_THROWS_AS(pattern_from_json(doc), std::runtime_error);
    doc = pattern_to_json(pat);
    doc["S"][0][1] = 0;  // asymmetric
    REQUIRE_THROWS_AS(pattern_from_json(doc), std::invalid_argument);
}

TEST_CASE("ring adjacency helper") {
    const BinMat r1 = ring_adjacency(8, 1);
    const BinMat r2 = ring_adjacency(8, 2);
    for (int i = 0; i < 8; ++i) {
        int s1 = 0, s2 = 0;
        for (int j = 0; j < 8; ++j) {
            s1 += r1(i, j);
            s2 += r2(i, j);
        }
        REQUIRE(s1 == 3);
        REQUIRE(s2 == 5);
    }
    REQUIRE(bin_symmetric(r1));
    REQUIRE(bin_unit_diagonal(r1));
    // two one-step hops reach exactly the two-step neighborhood
    REQUIRE(bin_equal(bin_mul(r1, r1), r2));
    REQUIRE(bin_equal(ring_adjacency(3, 1), BinMat::ones(3, 3)));
    REQUIRE(bin_equal(ring_adjacency(1, 0), BinMat::identity(1)));
    // first-order weights over the second-order graph: the standard recipe
    REQUIRE(admissible(r2, BinMat::identity(8), r1));
}
