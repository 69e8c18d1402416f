#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ibnet/connectivity.hpp"
#include "ibnet/types.hpp"

#include <nlohmann/json.hpp>

namespace ibnet {

struct WeightedEdge {
    int u = 0;
    int v = 0;
    double w = 0.0;
};

/// Bipartite interbrain graph: V1 = participant-1 channels, V2 = participant-2
/// channels, edges only across the two sets. Edges are kept sorted by (u, v).
struct BipartiteInterbrainGraph {
    int n1 = 0;
    int n2 = 0;
    std::vector<WeightedEdge> edges; // u in [0,n1), v in [0,n2)
    RecordMeta meta;
};

/// Undirected simple graph carrier for derived structures (line graphs).
struct GenericGraph {
    int n = 0;
    std::vector<WeightedEdge> edges;           // u < v, sorted, no duplicates
    std::vector<std::uint64_t> node_labels;    // empty = unlabeled
};

struct Reduction {
    enum class Kind { NONE, TOP_PERCENT };
    Kind kind = Kind::NONE;
    double p = 1.0;

    static Reduction none() { return {}; }
    static Reduction top_percent(double p) { return {Kind::TOP_PERCENT, p}; }
};

/// One node per channel per participant; weight 0 means no edge. TOP_PERCENT
/// keeps the ceil(p*n1*n2) largest weights, ties broken by (u,v) order.
BipartiteInterbrainGraph build_interbrain_graph(const ConnectivityMatrix& cm,
                                                const Reduction& reduction = Reduction::none());

/// Line graph; node i represents edge i of g, nodes adjacent iff the original
/// edges share an endpoint. Node labels are quartile buckets (1..4) of the
/// original edge weights. Throws validation_error on an empty edge set.
GenericGraph line_graph(const BipartiteInterbrainGraph& g);

/// Bipartite graph as a generic graph; V2 node v maps to index n1 + v.
GenericGraph to_generic(const BipartiteInterbrainGraph& g);

enum class WLInit { DEGREE_BUCKET, PROVIDED };

/// Weisfeiler-Lehman subtree tokens. tokens[d][v] is node v's token after d
/// refinement rounds; depth 0 is the initial labeling (exact unweighted degree
/// or the provided labels).
std::vector<std::vector<std::uint64_t>> wl_relabel(const GenericGraph& g, int depth, WLInit init);

/// Incident weight sum divided by the size of the opposite node set; V1 nodes
/// first, then V2.
Eigen::VectorXd nodal_density(const BipartiteInterbrainGraph& g);

struct DiffusionOperators {
    Eigen::MatrixXd adjacency;            // weighted, symmetric
    Eigen::MatrixXd degree;               // diagonal weighted degree
    Eigen::MatrixXd laplacian;            // D - A
    Eigen::MatrixXd normalized_laplacian; // I - D^(-1/2) A D^(-1/2), 0^-1 := 0
    Eigen::MatrixXd lazy_walk;            // (I + D^(-1) A)/2, row-stochastic
};

DiffusionOperators diffusion_operators(const GenericGraph& g);
DiffusionOperators diffusion_operators(const BipartiteInterbrainGraph& g);

nlohmann::json graph_to_json(const BipartiteInterbrainGraph& g);
BipartiteInterbrainGraph graph_from_json(const nlohmann::json& j);
nlohmann::json generic_graph_to_json(const GenericGraph& g);
GenericGraph generic_graph_from_json(const nlohmann::json& j);

} // namespace ibnet
