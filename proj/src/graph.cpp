#include "ibnet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ibnet/errors.hpp"
#include "ibnet/rng.hpp"

namespace ibnet {

BipartiteInterbrainGraph build_interbrain_graph(const ConnectivityMatrix& cm,
                                                const Reduction& reduction) {
    const int n1 = static_cast<int>(cm.values.rows());
    const int n2 = static_cast<int>(cm.values.cols());
    if (n1 <= 0 || n2 <= 0)
        throw validation_error("build_interbrain_graph: empty connectivity matrix");
    for (int u = 0; u < n1; ++u)
        for (int v = 0; v < n2; ++v) {
            const double w = cm.values(u, v);
            if (!std::isfinite(w))
                throw validation_error("build_interbrain_graph: non-finite connectivity value");
            if (w < 0.0)
                throw validation_error("build_interbrain_graph: negative connectivity value");
        }

    BipartiteInterbrainGraph g;
    g.n1 = n1;
    g.n2 = n2;
    g.meta = cm.meta;

    std::vector<WeightedEdge> all;
    all.reserve(static_cast<std::size_t>(n1) * static_cast<std::size_t>(n2));
    for (int u = 0; u < n1; ++u)
        for (int v = 0; v < n2; ++v) all.push_back({u, v, cm.values(u, v)});

    if (reduction.kind == Reduction::Kind::TOP_PERCENT) {
        if (!(reduction.p > 0.0) || reduction.p > 1.0)
            throw validation_error("build_interbrain_graph: TOP_PERCENT p must lie in (0,1]");
        const auto keep = static_cast<std::size_t>(
            std::ceil(reduction.p * static_cast<double>(n1) * static_cast<double>(n2)));
        std::stable_sort(all.begin(), all.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
            if (a.w != b.w) return a.w > b.w;
            if (a.u != b.u) return a.u < b.u;
            return a.v < b.v;
        });
        all.resize(std::min(keep, all.size()));
    }

    for (const auto& e : all)
        if (e.w > 0.0) g.edges.push_back(e);
    std::sort(g.edges.begin(), g.edges.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
        return a.u != b.u ? a.u < b.u : a.v < b.v;
    });
    return g;
}

namespace {

// Quartile bucket 1..4 by empirical CDF; equal weights share a bucket.
std::vector<std::uint64_t> quartile_buckets(const std::vector<WeightedEdge>& edges) {
    std::vector<double> sorted;
    sorted.reserve(edges.size());
    for (const auto& e : edges) sorted.push_back(e.w);
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::uint64_t> buckets;
    buckets.reserve(edges.size());
    const double m = static_cast<double>(sorted.size());
    for (const auto& e : edges) {
        const auto le = static_cast<double>(
            std::upper_bound(sorted.begin(), sorted.end(), e.w) - sorted.begin());
        auto b = static_cast<std::uint64_t>(std::ceil(4.0 * le / m));
        if (b < 1) b = 1;
        if (b > 4) b = 4;
        buckets.push_back(b);
    }
    return buckets;
}

} // namespace

GenericGraph line_graph(const BipartiteInterbrainGraph& g) {
    if (g.edges.empty())
        throw validation_error("line_graph: graph has no edges");

    GenericGraph lg;
    lg.n = static_cast<int>(g.edges.size());
    lg.node_labels = quartile_buckets(g.edges);

    // Two distinct bipartite edges share at most one endpoint, so collecting
    // pairs per original node cannot produce duplicates.
    std::vector<std::vector<int>> incident_v1(static_cast<std::size_t>(g.n1));
    std::vector<std::vector<int>> incident_v2(static_cast<std::size_t>(g.n2));
    for (int i = 0; i < lg.n; ++i) {
        incident_v1[static_cast<std::size_t>(g.edges[static_cast<std::size_t>(i)].u)].push_back(i);
        incident_v2[static_cast<std::size_t>(g.edges[static_cast<std::size_t>(i)].v)].push_back(i);
    }
    auto add_pairs = [&lg](const std::vector<int>& ids) {
        for (std::size_t a = 0; a < ids.size(); ++a)
            for (std::size_t b = a + 1; b < ids.size(); ++b)
                lg.edges.push_back({ids[a], ids[b], 1.0});
    };
    for (const auto& ids : incident_v1) add_pairs(ids);
    for (const auto& ids : incident_v2) add_pairs(ids);
    std::sort(lg.edges.begin(), lg.edges.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
        return a.u != b.u ? a.u < b.u : a.v < b.v;
    });
    return lg;
}

GenericGraph to_generic(const BipartiteInterbrainGraph& g) {
    GenericGraph out;
    out.n = g.n1 + g.n2;
    out.edges.reserve(g.edges.size());
    for (const auto& e : g.edges) out.edges.push_back({e.u, g.n1 + e.v, e.w});
    return out;
}

namespace {

std::uint64_t hash_label_list(std::uint64_t own, const std::vector<std::uint64_t>& neighbors) {
    std::uint64_t h = fnv1a64_u64(own, 0xcbf29ce484222325ULL);
    for (std::uint64_t t : neighbors) h = fnv1a64_u64(t, h);
    return h;
}

} // namespace

std::vector<std::vector<std::uint64_t>> wl_relabel(const GenericGraph& g, int depth, WLInit init) {
    if (depth < 0) throw validation_error("wl_relabel: depth must be >= 0");
    const auto n = static_cast<std::size_t>(g.n);

    std::vector<std::vector<int>> adj(n);
    for (const auto& e : g.edges) {
        if (e.u == e.v || e.u < 0 || e.v < 0 || e.u >= g.n || e.v >= g.n)
            throw validation_error("wl_relabel: malformed edge");
        adj[static_cast<std::size_t>(e.u)].push_back(e.v);
        adj[static_cast<std::size_t>(e.v)].push_back(e.u);
    }

    std::vector<std::uint64_t> current(n);
    if (init == WLInit::PROVIDED) {
        if (g.node_labels.size() != n)
            throw validation_error("wl_relabel: PROVIDED init requires node labels");
        // Tagged so provided-label tokens never collide with degree tokens.
        for (std::size_t v = 0; v < n; ++v)
            current[v] = fnv1a64_u64(g.node_labels[v], 0x9e3779b97f4a7c15ULL);
    } else {
        for (std::size_t v = 0; v < n; ++v)
            current[v] = fnv1a64_u64(static_cast<std::uint64_t>(adj[v].size()),
                                     0xcbf29ce484222325ULL);
    }

    std::vector<std::vector<std::uint64_t>> tokens;
    tokens.push_back(current);
    for (int d = 1; d <= depth; ++d) {
        std::vector<std::uint64_t> next(n);
        for (std::size_t v = 0; v < n; ++v) {
            std::vector<std::uint64_t> neigh;
            neigh.reserve(adj[v].size());
            for (int u : adj[v]) neigh.push_back(current[static_cast<std::size_t>(u)]);
            std::sort(neigh.begin(), neigh.end());
            next[v] = hash_label_list(current[v], neigh);
        }
        current = std::move(next);
        tokens.push_back(current);
    }
    return tokens;
}

Eigen::VectorXd nodal_density(const BipartiteInterbrainGraph& g) {
    // Incident weights are summed in sorted order so the result is a function
    // of the incident weight multiset alone, bit-stable under node relabeling.
    std::vector<std::vector<double>> incident(static_cast<std::size_t>(g.n1 + g.n2));
    for (const auto& e : g.edges) {
        incident[static_cast<std::size_t>(e.u)].push_back(e.w);
        incident[static_cast<std::size_t>(g.n1 + e.v)].push_back(e.w);
    }
    Eigen::VectorXd d = Eigen::VectorXd::Zero(g.n1 + g.n2);
    for (int v = 0; v < g.n1 + g.n2; ++v) {
        auto& w = incident[static_cast<std::size_t>(v)];
        std::sort(w.begin(), w.end());
        double acc = 0.0;
        for (double x : w) acc += x;
        d(v) = acc;
    }
    if (g.n2 > 0) d.head(g.n1) /= static_cast<double>(g.n2);
    if (g.n1 > 0) d.tail(g.n2) /= static_cast<double>(g.n1);
    return d;
}

DiffusionOperators diffusion_operators(const GenericGraph& g) {
    const int n = g.n;
    DiffusionOperators ops;
    ops.adjacency = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : g.edges) {
        ops.adjacency(e.u, e.v) = e.w;
        ops.adjacency(e.v, e.u) = e.w;
    }
    Eigen::VectorXd deg = ops.adjacency.rowwise().sum();
    ops.degree = deg.asDiagonal();
    ops.laplacian = ops.degree - ops.adjacency;

    // Isolated nodes use the convention 0^-1 := 0.
    Eigen::VectorXd dinv_sqrt(n), dinv(n);
    for (int i = 0; i < n; ++i) {
        dinv(i) = deg(i) > 0.0 ? 1.0 / deg(i) : 0.0;
        dinv_sqrt(i) = deg(i) > 0.0 ? 1.0 / std::sqrt(deg(i)) : 0.0;
    }
    ops.normalized_laplacian =
        Eigen::MatrixXd::Identity(n, n) -
        dinv_sqrt.asDiagonal() * ops.adjacency * dinv_sqrt.asDiagonal();
    ops.lazy_walk =
        0.5 * (Eigen::MatrixXd::Identity(n, n) + dinv.asDiagonal() * ops.adjacency);
    return ops;
}

DiffusionOperators diffusion_operators(const BipartiteInterbrainGraph& g) {
    return diffusion_operators(to_generic(g));
}

nlohmann::json graph_to_json(const BipartiteInterbrainGraph& g) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : g.edges) edges.push_back({e.u, e.v, e.w});
    return {{"n1", g.n1},
            {"n2", g.n2},
            {"edges", edges},
            {"metadata",
             {{"dyad_id", g.meta.dyad_id},
              {"condition_id", g.meta.condition_id},
              {"chromophore", g.meta.chromophore},
              {"label", g.meta.label}}}};
}

BipartiteInterbrainGraph graph_from_json(const nlohmann::json& j) {
    BipartiteInterbrainGraph g;
    try {
        g.n1 = j.at("n1").get<int>();
        g.n2 = j.at("n2").get<int>();
        for (const auto& e : j.at("edges")) {
            WeightedEdge we{e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<double>()};
            if (we.u < 0 || we.u >= g.n1 || we.v < 0 || we.v >= g.n2)
                throw validation_error("graph_from_json: edge endpoint out of range");
            if (!std::isfinite(we.w) || we.w < 0.0)
                throw validation_error("graph_from_json: invalid edge weight");
            g.edges.push_back(we);
        }
        const auto& m = j.at("metadata");
        g.meta.dyad_id = m.at("dyad_id").get<std::string>();
        g.meta.condition_id = m.at("condition_id").get<std::string>();
        g.meta.chromophore = m.at("chromophore").get<std::string>();
        g.meta.label = m.at("label").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("graph_from_json: malformed document: ") + e.what());
    }
    std::sort(g.edges.begin(), g.edges.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
        return a.u != b.u ? a.u < b.u : a.v < b.v;
    });
    return g;
}

nlohmann::json generic_graph_to_json(const GenericGraph& g) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : g.edges) edges.push_back({e.u, e.v, e.w});
    nlohmann::json j{{"n", g.n}, {"edges", edges}};
    if (!g.node_labels.empty()) j["node_labels"] = g.node_labels;
    return j;
}

GenericGraph generic_graph_from_json(const nlohmann::json& j) {
    GenericGraph g;
    try {
        g.n = j.at("n").get<int>();
        for (const auto& e : j.at("edges"))
            g.edges.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<double>()});
        if (j.contains("node_labels"))
            g.node_labels = j.at("node_labels").get<std::vector<std::uint64_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("generic_graph_from_json: malformed document: ") + e.what());
    }
    return g;
}

} // namespace ibnet
