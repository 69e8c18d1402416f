#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "ibnet/embeddings.hpp"
#include "ibnet/errors.hpp"
#include "ibnet/rng.hpp"

using namespace ibnet;

namespace {

BipartiteInterbrainGraph make_graph(int n1, int n2,
                                    const std::vector<WeightedEdge>& edges,
                                    const std::string& dyad = "dyad_c0_000") {
    BipartiteInterbrainGraph g;
    g.n1 = n1;
    g.n2 = n2;
    g.edges = edges;
    std::sort(g.edges.begin(), g.edges.end(),
              [](const WeightedEdge& a, const WeightedEdge& b) {
                  return a.u != b.u ? a.u < b.u : a.v < b.v;
              });
    g.meta.dyad_id = dyad;
    g.meta.condition_id = "cond_00";
    g.meta.chromophore = "HBO";
    return g;
}

BipartiteInterbrainGraph random_graph(Rng& rng, int n1, int n2, double keep) {
    std::vector<WeightedEdge> edges;
    for (int u = 0; u < n1; ++u)
        for (int v = 0; v < n2; ++v)
            if (rng.uniform() < keep) edges.push_back({u, v, 0.05 + 0.9 * rng.uniform()});
    if (edges.empty()) edges.push_back({0, 0, 0.5});
    return make_graph(n1, n2, edges);
}

/// Consistent node relabeling: V1 by p1, V2 by p2, applied to every graph.
BipartiteInterbrainGraph relabel(const BipartiteInterbrainGraph& g,
                                 const std::vector<int>& p1, const std::vector<int>& p2) {
    std::vector<WeightedEdge> edges;
    for (const auto& e : g.edges)
        edges.push_back({p1[static_cast<std::size_t>(e.u)],
                         p2[static_cast<std::size_t>(e.v)], e.w});
    auto out = make_graph(g.n1, g.n2, edges, g.meta.dyad_id);
    out.meta = g.meta;
    return out;
}

double cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    return a.dot(b) / std::max(a.norm() * b.norm(), 1e-300);
}

const std::vector<EncoderKind> kAllKinds = {
    EncoderKind::FC,     EncoderKind::NMF_IBNE,   EncoderKind::LDP,
    EncoderKind::GRAPH2VEC, EncoderKind::GL2VEC,  EncoderKind::DWC,
    EncoderKind::SCATTERING, EncoderKind::FEATHER};

}  // namespace

TEST_SUITE_BEGIN("embeddings");

TEST_CASE("fc flattening matches the hand case") {
    const auto g = make_graph(2, 2, {{0, 0, 0.9}, {0, 1, 0.1}, {1, 0, 0.2}, {1, 1, 0.8}});
    const auto m = encode_fc({g});
    REQUIRE(m.delta == 4);
    CHECK(m.rows(0, 0) == 0.9);
    CHECK(m.rows(0, 1) == 0.1);
    CHECK(m.rows(0, 2) == 0.2);
    CHECK(m.rows(0, 3) == 0.8);

    BipartiteInterbrainGraph empty;
    empty.n1 = 3;
    empty.n2 = 3;
    const auto zero = encode_fc({empty});
    CHECK(zero.rows.row(0).cwiseAbs().maxCoeff() == 0.0);

    Rng rng(1);
    const auto g8 = random_graph(rng, 8, 8, 0.5);
    CHECK(encode_fc({g8}).delta == 64);
}

TEST_CASE("nmf recovers an exact rank-1 density matrix") {
    // All graphs share one weight template scaled per graph, so the nodal
    // density matrix is an exact nonnegative outer product.
    Rng rng(42);
    const auto base = random_graph(rng, 4, 4, 0.7);
    std::vector<BipartiteInterbrainGraph> graphs;
    for (int i = 0; i < 6; ++i) {
        auto g = base;
        const double c = 0.3 + 0.25 * i;
        for (auto& e : g.edges) e.w *= c;
        graphs.push_back(g);
    }
    EncoderParams params;
    params.delta = 1;
    const auto state = fit_encoder(EncoderKind::NMF_IBNE, graphs, params, 3);

    Eigen::MatrixXd d(6, 8);
    for (int i = 0; i < 6; ++i) d.row(i) = nodal_density(graphs[i]).transpose();
    const double rel = (d - state.nmf_train_rows * state.nmf_basis).norm() / d.norm();
    CHECK(rel < 1e-4);
}

TEST_CASE("nmf objective trace is monotone non-increasing over 20 seeds") {
    Rng rng(7);
    std::vector<BipartiteInterbrainGraph> graphs;
    for (int i = 0; i < 12; ++i) graphs.push_back(random_graph(rng, 5, 5, 0.6));
    EncoderParams params;
    params.delta = 3;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto state = fit_encoder(EncoderKind::NMF_IBNE, graphs, params, seed);
        REQUIRE(state.nmf_trace.size() >= 2);
        for (std::size_t i = 1; i < state.nmf_trace.size(); ++i)
            CHECK(state.nmf_trace[i] <= state.nmf_trace[i - 1] * (1.0 + 1e-12) + 1e-15);
    }
}

TEST_CASE("nmf basis is nonnegative with the documented shape") {
    Rng rng(11);
    std::vector<BipartiteInterbrainGraph> graphs;
    for (int i = 0; i < 20; ++i) graphs.push_back(random_graph(rng, 4, 5, 0.6));
    EncoderParams params;
    params.delta = 4;
    const auto state = fit_encoder(EncoderKind::NMF_IBNE, graphs, params, 1);
    CHECK(state.nmf_basis.rows() == 4);
    CHECK(state.nmf_basis.cols() == 9);
    CHECK(state.nmf_basis.minCoeff() >= 0.0);
    CHECK(transform(state, graphs).rows.minCoeff() >= 0.0);
}

TEST_CASE("nmf transform of a training graph reproduces its fitted row") {
    Rng rng(42);
    const auto base = random_graph(rng, 4, 4, 0.7);
    std::vector<BipartiteInterbrainGraph> graphs;
    for (int i = 0; i < 6; ++i) {
        auto g = base;
        for (auto& e : g.edges) e.w *= 0.3 + 0.25 * i;
        graphs.push_back(g);
    }
    EncoderParams params;
    params.delta = 1;
    const auto state = fit_encoder(EncoderKind::NMF_IBNE, graphs, params, 3);
    const auto m = transform(state, graphs);
    for (int i = 0; i < 6; ++i) {
        const double scale = std::max(1.0, state.nmf_train_rows.row(i).norm());
        CHECK((m.rows.row(i) - state.nmf_train_rows.row(i)).norm() <= 1e-3 * scale);
    }
}

TEST_CASE("nmf rejects an oversized basis") {
    Rng rng(13);
    std::vector<BipartiteInterbrainGraph> graphs;
    for (int i = 0; i < 3; ++i) graphs.push_back(random_graph(rng, 3, 3, 0.8));
    EncoderParams params;
    params.delta = 4;  // > min(3 graphs, 6 nodes)
    CHECK_THROWS_AS(fit_encoder(EncoderKind::NMF_IBNE, graphs, params, 0), validation_error);
}

TEST_CASE("ldp histograms match the star hand case") {
    // Hub in V1 with three V2 leaves. Leaf feature tuple is (1, 3, 3, 3, 0);
    // the hub's is (3, 1, 1, 1, 0). Ranges from fitting on this graph are
    // [1,3] for the first four features and [0,0] for the std feature.
    const auto star = make_graph(1, 3, {{0, 0, 0.5}, {0, 1, 0.6}, {0, 2, 0.7}});
    const auto state = fit_encoder(EncoderKind::LDP, {star, star}, {}, 0);
    const auto m = transform(state, {star});
    const int b = 32;
    REQUIRE(m.delta == 5 * b);
    // degree: hub 3 -> top bin (1/4 of nodes), leaves 1 -> bin 0 (3/4)
    CHECK(m.rows(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(m.rows(0, b - 1) == doctest::Approx(0.25).epsilon(1e-12));
    // min/max/mean of neighbor degrees: leaves see the hub (3) -> top bin,
    // hub sees leaves (1) -> bin 0
    for (int f = 1; f <= 3; ++f) {
        CHECK(m.rows(0, f * b) == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(m.rows(0, f * b + b - 1) == doctest::Approx(0.75).epsilon(1e-12));
    }
    // std of neighbor degrees is 0 for every node; degenerate range -> bin 0
    CHECK(m.rows(0, 4 * b) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ldp std-feature mass sits in the zero bin for a regular graph") {
    const auto k22 = make_graph(2, 2, {{0, 0, 1.0}, {0, 1, 1.0}, {1, 0, 1.0}, {1, 1, 1.0}});
    Rng rng(5);
    const auto other = random_graph(rng, 2, 2, 0.5);
    const auto state = fit_encoder(EncoderKind::LDP, {k22, other}, {}, 0);
    const auto m = transform(state, {k22});
    const int b = 32;
    CHECK(m.rows(0, 4 * b) == doctest::Approx(1.0).epsilon(1e-12));
    for (int f = 0; f < 5; ++f) {
        const double sum = m.rows.row(0).segment(f * b, b).sum();
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("graph2vec gives identical rows to isomorphic graphs") {
    Rng rng(3);
    std::vector<BipartiteInterbrainGraph> corpus;
    for (int i = 0; i < 8; ++i) corpus.push_back(random_graph(rng, 4, 4, 0.45));
    EncoderParams params;
    params.delta = 16;
    const auto state = fit_encoder(EncoderKind::GRAPH2VEC, corpus, params, 9);

    const std::vector<int> p1 = {2, 0, 3, 1}, p2 = {1, 3, 0, 2};
    const auto m1 = transform(state, {corpus[0]});
    const auto m2 = transform(state, {relabel(corpus[0], p1, p2)});
    CHECK(m1.rows == m2.rows);
    CHECK(m1.rows.cols() == 16);
}

TEST_CASE("graph2vec and gl2vec separate graph families on 5 of 5 seeds") {
    for (auto kind : {EncoderKind::GRAPH2VEC, EncoderKind::GL2VEC}) {
        int passes = 0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            Rng rng(100 + seed);
            std::vector<BipartiteInterbrainGraph> corpus;
            for (int i = 0; i < 20; ++i) {  // dense family: complete 8x8
                std::vector<WeightedEdge> edges;
                for (int u = 0; u < 8; ++u)
                    for (int v = 0; v < 8; ++v) edges.push_back({u, v, 0.4 + 0.5 * rng.uniform()});
                corpus.push_back(make_graph(8, 8, edges));
            }
            for (int i = 0; i < 20; ++i) {  // sparse family: two random edges
                std::vector<WeightedEdge> edges;
                while (edges.size() < 2) {
                    const int u = static_cast<int>(rng.uniform_int(8));
                    const int v = static_cast<int>(rng.uniform_int(8));
                    if (edges.size() == 1 && edges[0].u == u && edges[0].v == v) continue;
                    edges.push_back({u, v, 0.4 + 0.5 * rng.uniform()});
                }
                corpus.push_back(make_graph(8, 8, edges));
            }
            const auto state = fit_encoder(kind, corpus, {}, seed);
            const auto m = transform(state, corpus);

            double within = 0.0, between = 0.0;
            int nw = 0, nb = 0;
            for (int i = 0; i < 40; ++i)
                for (int j = i + 1; j < 40; ++j) {
                    const double c = cosine(m.rows.row(i), m.rows.row(j));
                    if ((i < 20) == (j < 20)) {
                        within += c;
                        ++nw;
                    } else {
                        between += c;
                        ++nb;
                    }
                }
            if (within / nw > between / nb) ++passes;
        }
        CHECK(passes == 5);
    }
}

TEST_CASE("gl2vec handles single-edge and empty-edge graphs") {
    Rng rng(21);
    std::vector<BipartiteInterbrainGraph> corpus;
    for (int i = 0; i < 6; ++i) corpus.push_back(random_graph(rng, 3, 3, 0.6));
    corpus.push_back(make_graph(3, 3, {{1, 2, 0.8}}));  // line graph K1
    const auto state = fit_encoder(EncoderKind::GL2VEC, corpus, {}, 2);

    const auto single = transform(state, {corpus.back()});
    CHECK(single.degenerate_rows.empty());
    CHECK(single.rows.row(0).norm() > 0.0);

    BipartiteInterbrainGraph empty;
    empty.n1 = 3;
    empty.n2 = 3;
    const auto m = transform(state, {empty});
    REQUIRE(m.degenerate_rows.size() == 1);
    CHECK(m.degenerate_rows[0] == 0);
    CHECK(m.rows.row(0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dwc matches the two-node closed form and the identity limit") {
    const auto pair = make_graph(1, 1, {{0, 0, 1.0}});
    Rng rng(31);
    const auto other = random_graph(rng, 1, 1, 1.0);

    EncoderParams params;
    params.dwc_scales = {1.0};
    auto state = fit_encoder(EncoderKind::DWC, {pair, other}, params, 0);
    auto m = transform(state, {pair});
    const double lo = (1.0 + std::exp(-2.0)) / 2.0;
    const double hi = (1.0 - std::exp(-2.0)) / 2.0;
    const double energy = lo * lo + hi * hi;
    CHECK(std::abs(m.rows(0, 0) - energy) <= 1e-9);  // mean of two equal energies
    CHECK(std::abs(m.rows(0, 1)) <= 1e-9);           // std
    CHECK(std::abs(m.rows(0, 2)) <= 1e-9);           // third central moment

    params.dwc_scales = {1e-6};
    state = fit_encoder(EncoderKind::DWC, {pair, other}, params, 0);
    m = transform(state, {pair});
    CHECK(std::abs(m.rows(0, 0) - 1.0) <= 1e-3);
    CHECK(std::abs(m.rows(0, 1)) <= 1e-3);
}

TEST_CASE("scattering vanishes beyond order zero on a regular graph") {
    const double w = 0.7;
    const auto k22 = make_graph(2, 2, {{0, 0, w}, {0, 1, w}, {1, 0, w}, {1, 1, w}});
    Rng rng(17);
    const auto other = random_graph(rng, 2, 2, 0.7);
    const auto state = fit_encoder(EncoderKind::SCATTERING, {k22, other}, {}, 0);
    const auto m = transform(state, {k22});
    REQUIRE(m.delta == 56);
    // degree signal is the constant 2: zeroth moments (2, 4, 8, 16)
    for (int q = 1; q <= 4; ++q)
        CHECK(std::abs(m.rows(0, q - 1) - std::pow(2.0, q)) <= 1e-12);
    for (int k = 4; k < 28; ++k) CHECK(std::abs(m.rows(0, k)) <= 1e-12);
    // incident-weight-sum signal is the constant 2w
    for (int q = 1; q <= 4; ++q)
        CHECK(std::abs(m.rows(0, 28 + q - 1) - std::pow(2.0 * w, q)) <= 1e-12);
    for (int k = 32; k < 56; ++k) CHECK(std::abs(m.rows(0, k)) <= 1e-12);
}

TEST_CASE("scattering matches the two-node closed form") {
    // Lazy walk of the single-edge pair is the rank-1 averaging operator,
    // which is idempotent, so every wavelet difference is exactly zero.
    const double w = 0.7;
    const auto pair = make_graph(1, 1, {{0, 0, w}});
    Rng rng(19);
    const auto other = random_graph(rng, 1, 1, 1.0);
    const auto state = fit_encoder(EncoderKind::SCATTERING, {pair, other}, {}, 0);
    const auto m = transform(state, {pair});
    for (int q = 1; q <= 4; ++q) {
        CHECK(std::abs(m.rows(0, q - 1) - 1.0) <= 1e-12);                     // degree = 1
        CHECK(std::abs(m.rows(0, 28 + q - 1) - std::pow(w, q)) <= 1e-12);     // sum = w
    }
    for (int k = 4; k < 28; ++k) CHECK(std::abs(m.rows(0, k)) <= 1e-12);
    for (int k = 32; k < 56; ++k) CHECK(std::abs(m.rows(0, k)) <= 1e-12);
}

TEST_CASE("feather characteristic matches the hand case and the theta limit") {
    Eigen::MatrixXd adj(2, 2);
    adj << 0.0, 1.0, 1.0, 0.0;
    Eigen::VectorXd x(2);
    x << 1.0, 2.0;
    const auto [re, im] = feather_characteristic(adj, x, 1, 1.0);
    CHECK(std::abs(re - (std::cos(2.0) + std::cos(1.0)) / 2.0) <= 1e-9);
    CHECK(std::abs(im - (std::sin(2.0) + std::sin(1.0)) / 2.0) <= 1e-9);

    const auto [re0, im0] = feather_characteristic(adj, x, 2, 1e-8);
    CHECK(std::abs(re0 - 1.0) <= 1e-6);
    CHECK(std::abs(im0) <= 1e-6);
}

TEST_CASE("feather encoder has the documented width and respects the hand case") {
    const auto pair = make_graph(1, 1, {{0, 0, 1.0}});
    Rng rng(23);
    const auto other = random_graph(rng, 1, 1, 1.0);
    const auto state = fit_encoder(EncoderKind::FEATHER, {pair, other}, {}, 0);
    const auto m = transform(state, {pair});
    REQUIRE(m.delta == 200);
    // Degree signal block, rho = 1, theta = 0.2: A_hat swaps the two nodes,
    // both carrying x = 1, so the pooled value is (cos 0.2, sin 0.2).
    CHECK(std::abs(m.rows(0, 0) - std::cos(0.2)) <= 1e-12);
    CHECK(std::abs(m.rows(0, 1) - std::sin(0.2)) <= 1e-12);
}

TEST_CASE("every encoder except fc is invariant to consistent relabeling") {
    Rng rng(1234);
    std::vector<BipartiteInterbrainGraph> graphs;
    for (int i = 0; i < 10; ++i) graphs.push_back(random_graph(rng, 6, 6, 0.55));

    std::vector<int> p1 = {0, 1, 2, 3, 4, 5}, p2 = p1;
    Rng perm_rng(77);
    perm_rng.shuffle(p1);
    perm_rng.shuffle(p2);
    std::vector<BipartiteInterbrainGraph> permuted;
    for (const auto& g : graphs) permuted.push_back(relabel(g, p1, p2));

    for (auto kind : kAllKinds) {
        if (kind == EncoderKind::FC) continue;
        EncoderParams params;
        if (kind == EncoderKind::NMF_IBNE) params.delta = 4;
        if (kind == EncoderKind::GRAPH2VEC || kind == EncoderKind::GL2VEC) params.delta = 16;
        const auto sa = fit_encoder(kind, graphs, params, 5);
        const auto sb = fit_encoder(kind, permuted, params, 5);
        const auto ma = transform(sa, graphs);
        const auto mb = transform(sb, permuted);
        REQUIRE(ma.rows.rows() == mb.rows.rows());
        const double diff = (ma.rows - mb.rows).cwiseAbs().maxCoeff();
        INFO("encoder ", encoder_name(kind));
        CHECK(diff <= 1e-9);
    }
}

TEST_CASE("fitting and transforming are deterministic for every encoder") {
    Rng rng(555);
    std::vector<BipartiteInterbrainGraph> graphs;
    for (int i = 0; i < 8; ++i) graphs.push_back(random_graph(rng, 4, 4, 0.6));
    for (auto kind : kAllKinds) {
        EncoderParams params;
        if (kind == EncoderKind::NMF_IBNE) params.delta = 3;
        if (kind == EncoderKind::GRAPH2VEC || kind == EncoderKind::GL2VEC) params.delta = 8;
        const auto sa = fit_encoder(kind, graphs, params, 99);
        const auto sb = fit_encoder(kind, graphs, params, 99);
        CHECK(encoder_to_json(sa) == encoder_to_json(sb));
        CHECK(transform(sa, graphs).rows == transform(sb, graphs).rows);
    }
}

TEST_CASE("permuting the input graph list permutes rows identically") {
    Rng rng(31);
    std::vector<BipartiteInterbrainGraph> graphs;
    for (int i = 0; i < 6; ++i) graphs.push_back(random_graph(rng, 4, 4, 0.6));
    const auto state = fit_encoder(EncoderKind::LDP, graphs, {}, 0);
    const auto fwd = transform(state, graphs);
    std::vector<BipartiteInterbrainGraph> rev(graphs.rbegin(), graphs.rend());
    const auto bwd = transform(state, rev);
    for (int i = 0; i < 6; ++i) CHECK(fwd.rows.row(i) == bwd.rows.row(5 - i));
}

TEST_CASE("encoder state json round trip preserves transforms") {
    Rng rng(61);
    std::vector<BipartiteInterbrainGraph> graphs;
    for (int i = 0; i < 8; ++i) graphs.push_back(random_graph(rng, 4, 4, 0.6));
    for (auto kind : {EncoderKind::NMF_IBNE, EncoderKind::LDP, EncoderKind::GRAPH2VEC,
                      EncoderKind::FEATHER}) {
        EncoderParams params;
        if (kind == EncoderKind::NMF_IBNE) params.delta = 3;
        if (kind == EncoderKind::GRAPH2VEC) params.delta = 8;
        const auto state = fit_encoder(kind, graphs, params, 7);
        const auto back = encoder_from_json(encoder_to_json(state));
        CHECK(transform(back, graphs).rows == transform(state, graphs).rows);
    }
}

TEST_CASE("embedding csv round trip is exact") {
    Rng rng(71);
    std::vector<BipartiteInterbrainGraph> graphs;
    for (int i = 0; i < 5; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "dyad_c0_%03d", i);
        graphs.push_back(random_graph(rng, 3, 3, 0.7));
        graphs.back().meta.dyad_id = name;
    }
    const auto m = encode_fc(graphs);
    const std::string path = "embeddings_roundtrip_test.csv";
    write_embedding_csv(m, path);
    const auto back = read_embedding_csv(path);
    std::remove(path.c_str());
    CHECK(back.delta == m.delta);
    CHECK(back.rows == m.rows);
    REQUIRE(back.row_keys.size() == m.row_keys.size());
    for (std::size_t i = 0; i < m.row_keys.size(); ++i) {
        CHECK(back.row_keys[i].dyad_id == m.row_keys[i].dyad_id);
        CHECK(back.row_keys[i].condition_id == m.row_keys[i].condition_id);
        CHECK(back.row_keys[i].chromophore == m.row_keys[i].chromophore);
    }
}

TEST_CASE("encoder input contracts are enforced") {
    Rng rng(81);
    const auto g = random_graph(rng, 3, 3, 0.7);
    const auto h = random_graph(rng, 4, 3, 0.7);
    CHECK_THROWS_AS(fit_encoder(EncoderKind::LDP, {g}, {}, 0), validation_error);
    CHECK_THROWS_AS(fit_encoder(EncoderKind::LDP, {g, h}, {}, 0), validation_error);

    EncoderState unfitted;
    CHECK_THROWS_AS(transform(unfitted, {g}), validation_error);

    const auto state = fit_encoder(EncoderKind::LDP, {g, g}, {}, 0);
    CHECK_THROWS_AS(transform(state, {h}), validation_error);
}

TEST_CASE("encoder names round trip") {
    for (auto kind : kAllKinds) CHECK(encoder_from_name(encoder_name(kind)) == kind);
    CHECK_THROWS_AS(encoder_from_name("gnn"), validation_error);
}

TEST_SUITE_END();
