#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ibnet/classify.hpp"
#include "ibnet/connectivity.hpp"
#include "ibnet/embeddings.hpp"
#include "ibnet/graph.hpp"
#include "ibnet/signals.hpp"

#include <nlohmann/json.hpp>

namespace ibnet {

struct DyadKey {
    std::string id;
    int label = 0;
};

/// Nested stratified group cross-validation plan. Dyads are atomic: every
/// recording of a dyad shares its outer fold and, within outer-train, its
/// inner fold. Class proportions per fold stay within one dyad of global.
struct FoldPlan {
    int k_out = 5;
    int k_inner = 3;
    std::uint64_t seed = 0;
    std::vector<DyadKey> dyads;                 // canonical order: sorted by id
    std::vector<int> outer_assign;              // per dyad, in [0, k_out)
    std::vector<std::vector<int>> inner_assign; // [fold][dyad]; -1 = in outer test
};

/// Stratified assignment: shuffle within class, then one continuing
/// round-robin counter over folds (class 0 first). Deterministic in seed;
/// independent of the input order of `dyads`.
FoldPlan plan_nested_cv(const std::vector<DyadKey>& dyads, int k_out, int k_inner,
                        std::uint64_t seed);

nlohmann::json plan_to_json(const FoldPlan& plan);
FoldPlan plan_from_json(const nlohmann::json& j);

/// FNV-1a hex digest of the canonical plan serialization; two results are
/// comparable iff their plan hashes agree.
std::string plan_hash(const FoldPlan& plan);

struct HyperDim {
    enum class Kind { CONTINUOUS, CONTINUOUS_LOG, INTEGER_SET };
    std::string name;
    Kind kind = Kind::CONTINUOUS;
    double lo = 0.0;          // continuous bounds (log kind: lo > 0)
    double hi = 1.0;
    std::vector<int> values;  // INTEGER_SET members, ordinal order
};

struct HyperSpace {
    std::vector<HyperDim> dims;
};

/// Hyperparameter assignment by dimension name; integer dims carry the chosen
/// member as a double.
using Theta = std::map<std::string, double>;

/// Unit-cube coordinates of a theta (log dims log-transformed, integer dims
/// index/(m-1)) and the inverse mapping.
Eigen::VectorXd normalize_theta(const HyperSpace& space, const Theta& theta);
Theta denormalize_theta(const HyperSpace& space, const Eigen::VectorXd& u);

/// Zero-mean GP posterior with a Matern-5/2 kernel, length scale 0.3 per unit
/// cube dimension, signal variance 1, noise variance 1e-4. One (mean,
/// variance) pair per query row.
void gp_regress(const Eigen::MatrixXd& x_obs, const Eigen::VectorXd& y_obs,
                const Eigen::MatrixXd& x_query, Eigen::VectorXd& mean,
                Eigen::VectorXd& var);

/// Maximizes the objective over the space: n_init scrambled-Halton starts,
/// then expected-improvement acquisition over 1000 uniform candidates per
/// round until `budget` evaluations are spent. NaN objective values are
/// skipped; exact score ties prefer smaller lambda, then smaller delta.
Theta optimize_hyperparameters(const std::function<double(const Theta&)>& objective,
                               const HyperSpace& space, int budget, int n_init,
                               std::uint64_t seed);

/// Interbrain graphs ready for embedding; one per selected recording, labels
/// carried in each graph's meta.
struct GraphDataset {
    std::vector<BipartiteInterbrainGraph> graphs;
};

/// Connectivity + graph construction for every recording of the requested
/// chromophore ("" = all). Connectivity is the dominant cost, so datasets are
/// built once and shared across pipeline runs.
GraphDataset build_graph_dataset(const std::vector<DyadRecording>& recordings,
                                 Estimator estimator, Band band,
                                 const ConnectivityOpts& opts = {},
                                 const std::string& chromophore = "HBO",
                                 const Reduction& reduction = Reduction::none());

/// Unique (dyad_id, label) pairs of a dataset, sorted by id.
std::vector<DyadKey> dataset_dyads(const GraphDataset& data);

struct PipelineConfig {
    EncoderKind encoder = EncoderKind::FC;
    ClassifierKind classifier = ClassifierKind::RIDGE_LOGREG;
    EncoderParams base_params;
    double base_lambda = 1e-2;
    HyperSpace space;            // empty = no hyperparameter optimization
    int budget = 25;
    int n_init = 5;
    std::uint64_t opt_seed = 0;
    std::uint64_t encoder_seed = 0;
    /// Worker threads across outer folds. Not part of the config hash: results
    /// are bit-identical at any thread count.
    int n_threads = 1;
};

/// Search space defaults: lambda log-uniform [1e-4, 1e2] for every encoder;
/// NMF adds delta in {2,4,8,16}; Graph2Vec/GL2Vec add wl_depth in {1,2,3}.
HyperSpace default_hyper_space(EncoderKind kind);

nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg);
std::string config_hash(const PipelineConfig& cfg);

/// Instrumentation points. Callbacks may fire concurrently when n_threads > 1
/// and must be thread-safe.
struct PipelineHooks {
    /// Keys of every graph passed to an encoder fit (inner and outer).
    std::function<void(const std::vector<RecordMeta>&)> on_encoder_fit;
};

struct FoldResult {
    int fold = 0;
    Theta best_theta;
    double test_auc = 0.0;
};

struct CVResult {
    std::string plan_hash;
    std::string config_hash;
    std::vector<FoldResult> folds;
    double mean_auc = 0.0;
    double sd_auc = 0.0;  // sample standard deviation across folds
};

nlohmann::json cv_result_to_json(const CVResult& r);
CVResult cv_result_from_json(const nlohmann::json& j);

/// Full nested regime: per outer fold, GP-optimize theta on the inner folds
/// (encoder fit on inner-train only), refit on outer-train with the best
/// theta, and score the outer test at the graph level. Deterministic in
/// (data, plan, config); outer folds may run in parallel.
CVResult run_nested_pipeline(const GraphDataset& data, const FoldPlan& plan,
                             const PipelineConfig& cfg,
                             const PipelineHooks& hooks = {});

}  // namespace ibnet
