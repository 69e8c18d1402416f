#pragma once

#include <cstdint>
#include <vector>

#include "ibnet/model_selection.hpp"
#include "ibnet/stats.hpp"

namespace ibnet {

/// Cross-chromophore transfer: fit encoder and classifier once on every HBO
/// graph (with theta applied on top of the config), then score every HBR
/// graph. Returns the single HBR ROC-AUC. The dataset must contain both
/// chromophores with no duplicate (dyad, condition, chromophore) keys; no fit
/// ever sees an HBR graph (observable through hooks.on_encoder_fit).
double cross_chromophore_test(const GraphDataset& data, const PipelineConfig& cfg,
                              const Theta& theta = {}, const PipelineHooks& hooks = {});

struct RandomizedLabelResult {
    CVResult true_result;
    std::vector<CVResult> permuted;   // one per permutation
    PosteriorSummary posterior;       // true minus permuted, folds pooled
};

/// Robustness against label structure: rerun the full nested pipeline on
/// dyad-atomically shuffled labels (class counts preserved), n_permutations
/// times, then compare true vs permuted per-fold AUCs pooled across
/// permutations with the correlated t posterior (rho = mean test fraction).
/// Each permutation gets a fresh stratified plan so fold class balance holds
/// under the shuffled labels.
RandomizedLabelResult randomized_label_test(const GraphDataset& data, const FoldPlan& plan,
                                            const PipelineConfig& cfg, int n_permutations = 10,
                                            std::uint64_t seed = 0,
                                            const PipelineHooks& hooks = {});

/// Fold-wise AUC differences (a minus b) under the correlated t posterior with
/// rho = 1/k_out. Both results must come from the identical fold plan.
PosteriorSummary compare_pipelines(const CVResult& a, const CVResult& b);

}  // namespace ibnet
