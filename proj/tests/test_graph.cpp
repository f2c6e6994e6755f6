#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hiva/graph.hpp"

#include <cmath>

using namespace hiva;
using namespace hiva::ad;

namespace {

Mat randmat(Rng& rng, Eigen::Index r, Eigen::Index c) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
}

RunConfig cfg_nd(int n, int d) {
    RunConfig c;
    c.n_aus = n;
    c.d = d;
    c.k = std::min(3, n - 1);
    return c;
}

}  // namespace

TEST_CASE("pairwise similarity matches the worked example") {
    Mat u(3, 2);
    u << 1, 0, 2, 0, 0, 1;
    Mat s = pairwise_similarity(u);
    Mat expect(3, 3);
    expect << 1, 2, 0, 2, 4, 0, 0, 0, 1;
    CHECK((s - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pairwise similarity is symmetric and matches brute force") {
    Rng rng(1);
    Mat u = randmat(rng, 5, 4);
    Mat s = pairwise_similarity(u);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            double dot = 0;
            for (int k = 0; k < 4; ++k) dot += u(i, k) * u(j, k);
            CHECK(s(i, j) == doctest::Approx(dot).epsilon(1e-12));
            CHECK(s(i, j) == doctest::Approx(s(j, i)).epsilon(1e-12));
        }
}

TEST_CASE("orthogonal unit vectors give zero off-diagonals") {
    Mat s = pairwise_similarity(Mat::Identity(4, 4));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (i != j) CHECK(s(i, j) == 0.0);
}

TEST_CASE("top-k graph on the worked example breaks ties by lower index") {
    Mat u(3, 2);
    u << 1, 0, 2, 0, 0, 1;
    Adjacency adj = build_topk_graph(pairwise_similarity(u), 1);
    // edges 0->1, 1->0, 2->0 (row 2 ties 0 vs 0; lower index wins)
    CHECK(adj.a(0, 1) == 1);
    CHECK(adj.a(1, 0) == 1);
    CHECK(adj.a(2, 0) == 1);
    CHECK(adj.a.sum() == 3);
}

TEST_CASE("k = N-1 gives the complete digraph minus self loops") {
    Rng rng(2);
    Adjacency adj = build_topk_graph(pairwise_similarity(randmat(rng, 5, 3)), 4);
    for (int i = 0; i < 5; ++i) {
        CHECK(adj.a(i, i) == 0);
        CHECK(adj.a.row(i).sum() == 4);
    }
}

TEST_CASE("adjacency invariants hold over random draws and all k") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 2 + static_cast<int>(rng.below(7));
        Mat s = pairwise_similarity(randmat(rng, n, 3));
        for (int k = 1; k <= n - 1; ++k) {
            Adjacency adj = build_topk_graph(s, k);
            for (int i = 0; i < n; ++i) {
                CHECK(adj.a(i, i) == 0);
                CHECK(adj.a.row(i).sum() == k);
            }
        }
    }
}

TEST_CASE("k out of range rejected") {
    Mat s = pairwise_similarity(Mat::Identity(3, 3));
    CHECK_THROWS(build_topk_graph(s, 0));
    CHECK_THROWS(build_topk_graph(s, 3));
}

TEST_CASE("graph refine: zero weights keep a non-negative U fixed") {
    RunConfig cfg = cfg_nd(3, 4);
    ParamStore store;
    store.add("gcn.wr", Mat::Zero(4, 4));
    store.add("gcn.wg", Mat::Zero(4, 4));
    store.add("gcn.wm", Mat::Zero(4, 4));
    Rng rng(4);
    Mat u0 = randmat(rng, 3, 4).cwiseAbs();
    Adjacency adj;
    adj.k = 1;
    adj.a = Eigen::MatrixXi::Zero(3, 3);
    adj.a(0, 1) = adj.a(1, 0) = adj.a(2, 0) = 1;
    Tape t;
    VarMap vars = bind_params(t, store, false);
    Mat out = graph_refine(vars, t.constant(u0), adj)->val;
    CHECK((out - u0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("graph refine with empty adjacency depends only on the own row") {
    RunConfig cfg = cfg_nd(3, 4);
    ParamStore store;
    Rng rng(5);
    init_graph_params(store, rng, cfg);
    Adjacency adj;
    adj.k = 1;
    adj.a = Eigen::MatrixXi::Zero(3, 3);
    Mat u0 = randmat(rng, 3, 4);
    Mat u1 = u0;
    u1.row(2) = randmat(rng, 1, 4);  // change another AU's row
    Tape t;
    VarMap vars = bind_params(t, store, false);
    Mat a = graph_refine(vars, t.constant(u0), adj)->val;
    Mat b = graph_refine(vars, t.constant(u1), adj)->val;
    CHECK((a.topRows(2) - b.topRows(2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("graph refine matches a loop-based reference") {
    RunConfig cfg = cfg_nd(4, 5);
    ParamStore store;
    Rng rng(6);
    init_graph_params(store, rng, cfg);
    Mat u = randmat(rng, 4, 5);
    Adjacency adj = build_topk_graph(pairwise_similarity(u), 2);

    Tape t;
    VarMap vars = bind_params(t, store, false);
    Mat got = graph_refine(vars, t.constant(u), adj)->val;

    const Mat& wr = store.at("gcn.wr");
    const Mat& wg = store.at("gcn.wg");
    const Mat& wm = store.at("gcn.wm");
    for (int i = 0; i < 4; ++i) {
        Eigen::RowVectorXd m = Eigen::RowVectorXd::Zero(5);
        for (int j = 0; j < 4; ++j)
            if (adj.a(i, j)) m += u.row(j) * wr;
        Eigen::RowVectorXd gate(5);
        for (int c = 0; c < 5; ++c) gate(c) = u(i, c) / (1.0 + std::exp(-m(c)));
        Eigen::RowVectorXd upd = gate * wg + m * wm;
        for (int c = 0; c < 5; ++c) {
            double expect = std::max(0.0, u(i, c) + upd(c));
            CHECK(got(i, c) == doctest::Approx(expect).epsilon(1e-8));
        }
    }
}

TEST_CASE("stage-1 head oracle values") {
    RunConfig cfg = cfg_nd(3, 4);
    ParamStore store;
    store.add("head1.w", Mat::Zero(3, 4));
    store.add("head1.b", Mat::Zero(3, 1));
    Rng rng(7);
    Tape t;
    VarMap vars = bind_params(t, store, false);
    Mat u = randmat(rng, 3, 4);
    Mat logits = stage1_logits(vars, cfg, t.constant(u))->val;
    for (int i = 0; i < 3; ++i) CHECK(logits(i, 0) == 0.0);
    Eigen::VectorXd p = sigmoid_vec(logits.col(0));
    for (int i = 0; i < 3; ++i) CHECK(p(i) == doctest::Approx(0.5));

    // saturation
    Eigen::VectorXd big(1);
    big << 30.0;
    CHECK(sigmoid_vec(big)(0) == doctest::Approx(1.0).epsilon(1e-9));

    // dot-product oracle with random head
    store.at("head1.w") = randmat(rng, 3, 4);
    store.at("head1.b") = randmat(rng, 3, 1);
    Tape t2;
    VarMap vars2 = bind_params(t2, store, false);
    Mat l2 = stage1_logits(vars2, cfg, t2.constant(u))->val;
    for (int i = 0; i < 3; ++i) {
        double dot = store.at("head1.b")(i, 0);
        for (int c = 0; c < 4; ++c) dot += store.at("head1.w")(i, c) * u(i, c);
        CHECK(l2(i, 0) == doctest::Approx(dot).epsilon(1e-12));
    }
}

TEST_CASE("au_loss analytic oracles") {
    Eigen::VectorXd y1(1), w1(1), p1(1);
    y1 << 1;
    w1 << 1;
    p1 << 0.5;
    CHECK(au_loss_from_probs(p1, y1, w1) == doctest::Approx(std::log(2.0)).epsilon(1e-10));

    Eigen::VectorXd y2(2), w2(2), p2(2);
    y2 << 1, 0;
    w2 << 2, 1;
    p2 << 0.5, 0.5;
    CHECK(au_loss_from_probs(p2, y2, w2) == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-10));

    // near-perfect prediction is near-zero loss
    Eigen::VectorXd p3(2);
    p3 << 1.0 - 1e-7, 1e-7;
    Eigen::VectorXd w3(2);
    w3 << 1, 1;
    CHECK(au_loss_from_probs(p3, y2, w3) < 1e-6);

    // logits-domain op agrees with the probability-domain oracle
    Tape t;
    Mat logits(2, 1);
    logits << 0.3, -1.2;
    Eigen::VectorXd p = sigmoid_vec(logits.col(0));
    double expect = au_loss_from_probs(p, y2, w2, 0.0);
    CHECK(au_loss(t.constant(logits), y2, w2)->val(0, 0) ==
          doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("branch features: identity branch pools the global map") {
    RunConfig cfg = cfg_nd(2, 4);
    ParamStore store;
    store.add("branch.0.w", Mat::Identity(4, 4));
    store.add("branch.0.b", Mat::Zero(1, 4));
    Rng rng(8);
    store.add("branch.1.w", randmat(rng, 4, 4));
    store.add("branch.1.b", randmat(rng, 1, 4));
    Mat xg = randmat(rng, 6, 4);
    Tape t;
    VarMap vars = bind_params(t, store, false);
    BranchForward out = branch_features(vars, cfg, t.constant(xg));
    for (int c = 0; c < 4; ++c)
        CHECK(out.u->val(0, c) == doctest::Approx(xg.col(c).mean()).epsilon(1e-12));
    // brute-force per-channel averaging for the random branch
    Mat f1 = xg * store.at("branch.1.w") + store.at("branch.1.b").replicate(6, 1);
    for (int c = 0; c < 4; ++c)
        CHECK(out.u->val(1, c) == doctest::Approx(f1.col(c).mean()).epsilon(1e-10));
}

TEST_CASE("branch-graph-predict chain is permutation equivariant") {
    const int n = 4, d = 5, k = 2;
    RunConfig cfg = cfg_nd(n, d);
    cfg.k = k;
    ParamStore store;
    Rng rng(9);
    init_branch_params(store, rng, cfg);
    init_graph_params(store, rng, cfg);
    init_stage1_head(store, rng, cfg);
    Mat xg = randmat(rng, 8, d);

    auto run = [&](const ParamStore& s) {
        Tape t;
        VarMap vars = bind_params(t, s, false);
        BranchForward bf = branch_features(vars, cfg, t.constant(xg));
        Adjacency adj = build_topk_graph(pairwise_similarity(bf.u->val), k);
        Var ref = graph_refine(vars, bf.u, adj);
        return stage1_logits(vars, cfg, ref)->val;
    };
    Mat base = run(store);

    std::vector<int> perm = {2, 0, 3, 1};
    ParamStore permuted;
    for (int i = 0; i < n; ++i) {
        permuted.add("branch." + std::to_string(i) + ".w",
                     store.at("branch." + std::to_string(perm[i]) + ".w"));
        permuted.add("branch." + std::to_string(i) + ".b",
                     store.at("branch." + std::to_string(perm[i]) + ".b"));
    }
    permuted.add("gcn.wr", store.at("gcn.wr"));
    permuted.add("gcn.wg", store.at("gcn.wg"));
    permuted.add("gcn.wm", store.at("gcn.wm"));
    Mat hw(n, d), hb(n, 1);
    for (int i = 0; i < n; ++i) {
        hw.row(i) = store.at("head1.w").row(perm[i]);
        hb(i, 0) = store.at("head1.b")(perm[i], 0);
    }
    permuted.add("head1.w", hw);
    permuted.add("head1.b", hb);

    Mat permuted_logits = run(permuted);
    for (int i = 0; i < n; ++i)
        CHECK(permuted_logits(i, 0) == doctest::Approx(base(perm[i], 0)).epsilon(1e-9));
}
