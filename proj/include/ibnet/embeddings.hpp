#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ibnet/graph.hpp"
#include "ibnet/types.hpp"

#include <nlohmann/json.hpp>

namespace ibnet {

enum class EncoderKind { FC, NMF_IBNE, LDP, GRAPH2VEC, GL2VEC, DWC, SCATTERING, FEATHER };

std::string encoder_name(EncoderKind kind);
EncoderKind encoder_from_name(const std::string& name);

/// Encoder hyperparameters; fields not used by a kind are ignored. delta = 0
/// selects the kind default (NMF_IBNE 8, GRAPH2VEC/GL2VEC 64); the remaining
/// kinds have structurally determined output widths.
struct EncoderParams {
    int delta = 0;
    int wl_depth = 2;                                 // GRAPH2VEC / GL2VEC
    int ldp_bins = 32;                                // LDP
    std::vector<double> dwc_scales = {0.5, 1.0, 2.0, 4.0};
    int scattering_levels = 3;                        // J
    int scattering_moments = 4;                       // q = 1..moments
    int feather_order = 2;                            // r
    int feather_points = 25;                          // theta = 0.2k, k = 1..points
};

/// Graph embeddings, one row per input graph, keyed by the recording identity.
struct EmbeddingMatrix {
    Eigen::MatrixXd rows;
    std::vector<RecordMeta> row_keys;
    int delta = 0;
    /// Rows that degenerated to the zero vector (all-out-of-vocabulary
    /// documents or empty-edge line graphs).
    std::vector<std::size_t> degenerate_rows;
};

/// Frozen result of fitting an encoder on training graphs. transform is
/// deterministic given the state; fitted parameters never change afterwards.
struct EncoderState {
    EncoderKind kind = EncoderKind::FC;
    EncoderParams params;
    int n1 = 0;
    int n2 = 0;
    std::uint64_t seed = 0;
    bool fitted = false;

    Eigen::MatrixXd nmf_basis;               // delta x (n1+n2), nonnegative
    Eigen::MatrixXd nmf_train_rows;          // n x delta coefficients at fit time
    std::vector<double> nmf_trace;           // fit objective per MU iteration
    Eigen::MatrixXd ldp_ranges;              // 5 x 2 feature ranges from training
    std::vector<std::uint64_t> vocab;        // sorted WL tokens
    std::vector<std::uint64_t> vocab_counts; // training occurrence counts
    Eigen::MatrixXd token_vectors;           // |vocab| x delta
};

/// Learns all data-dependent parameters from the training graphs only.
EncoderState fit_encoder(EncoderKind kind, const std::vector<BipartiteInterbrainGraph>& graphs,
                         const EncoderParams& params = {}, std::uint64_t seed = 0);

/// One embedding row per graph, in input order; applicable to unseen graphs.
EmbeddingMatrix transform(const EncoderState& state,
                          const std::vector<BipartiteInterbrainGraph>& graphs);

/// Row-major flattening of the dense n1 x n2 weight matrix (absent edges 0).
EmbeddingMatrix encode_fc(const std::vector<BipartiteInterbrainGraph>& graphs);

/// Pooled complex characteristic (mean real, mean imaginary) of
/// row-normalized-adjacency^rho acting on e^(i theta x); the Feather building
/// block, exposed for closed-form verification.
std::pair<double, double> feather_characteristic(const Eigen::MatrixXd& adj_norm,
                                                 const Eigen::VectorXd& x, int rho,
                                                 double theta);

nlohmann::json encoder_to_json(const EncoderState& state);
EncoderState encoder_from_json(const nlohmann::json& j);

/// CSV with header dyad_id,condition_id,chromophore,z1..zdelta.
void write_embedding_csv(const EmbeddingMatrix& m, const std::string& path);
EmbeddingMatrix read_embedding_csv(const std::string& path);

}  // namespace ibnet
