#include "ibnet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <tuple>

#include "ibnet/errors.hpp"
#include "ibnet/rng.hpp"

namespace ibnet {

double cross_chromophore_test(const GraphDataset& data, const PipelineConfig& cfg,
                              const Theta& theta, const PipelineHooks& hooks) {
    std::vector<BipartiteInterbrainGraph> hbo;
    std::vector<BipartiteInterbrainGraph> hbr;
    std::set<std::tuple<std::string, std::string, std::string>> keys;
    for (const auto& g : data.graphs) {
        if (!keys.insert({g.meta.dyad_id, g.meta.condition_id, g.meta.chromophore}).second)
            throw validation_error("cross_chromophore_test: duplicate key (" + g.meta.dyad_id +
                                   ", " + g.meta.condition_id + ", " + g.meta.chromophore + ")");
        if (g.meta.chromophore == "HBO")
            hbo.push_back(g);
        else if (g.meta.chromophore == "HBR")
            hbr.push_back(g);
        else
            throw validation_error("cross_chromophore_test: unknown chromophore '" +
                                   g.meta.chromophore + "'");
    }
    if (hbo.empty() || hbr.empty())
        throw validation_error("cross_chromophore_test: needs both HBO and HBR graphs");

    EncoderParams params = cfg.base_params;
    double lambda = cfg.base_lambda;
    for (const auto& [name, value] : theta) {
        if (name == "lambda")
            lambda = value;
        else if (name == "delta")
            params.delta = static_cast<int>(std::llround(value));
        else if (name == "wl_depth")
            params.wl_depth = static_cast<int>(std::llround(value));
        else if (name == "ldp_bins")
            params.ldp_bins = static_cast<int>(std::llround(value));
        else
            throw validation_error("unknown hyperparameter '" + name + "'");
    }

    if (hooks.on_encoder_fit) {
        std::vector<RecordMeta> fit_keys;
        fit_keys.reserve(hbo.size());
        for (const auto& g : hbo) fit_keys.push_back(g.meta);
        hooks.on_encoder_fit(fit_keys);
    }
    const EncoderState state = fit_encoder(cfg.encoder, hbo, params, cfg.encoder_seed);
    const EmbeddingMatrix z_hbo = transform(state, hbo);
    const EmbeddingMatrix z_hbr = transform(state, hbr);

    std::vector<int> y_hbo;
    std::vector<int> y_hbr;
    for (const auto& g : hbo) y_hbo.push_back(g.meta.label);
    for (const auto& g : hbr) y_hbr.push_back(g.meta.label);

    const ClassifierState clf = fit_classifier(cfg.classifier, z_hbo.rows, y_hbo, lambda);
    return roc_auc(decision_scores(clf, z_hbr.rows), y_hbr);
}

RandomizedLabelResult randomized_label_test(const GraphDataset& data, const FoldPlan& plan,
                                            const PipelineConfig& cfg, int n_permutations,
                                            std::uint64_t seed, const PipelineHooks& hooks) {
    if (n_permutations < 1)
        throw validation_error("randomized_label_test: needs at least one permutation");

    RandomizedLabelResult result;
    result.true_result = run_nested_pipeline(data, plan, cfg, hooks);

    for (int p = 0; p < n_permutations; ++p) {
        std::vector<int> labels;
        labels.reserve(plan.dyads.size());
        for (const auto& d : plan.dyads) labels.push_back(d.label);
        Rng rng(mix_seed(seed, 51, static_cast<std::uint64_t>(p)));
        rng.shuffle(labels);

        std::map<std::string, int> relabel;
        std::vector<DyadKey> perm_dyads = plan.dyads;
        for (std::size_t i = 0; i < perm_dyads.size(); ++i) {
            perm_dyads[i].label = labels[i];
            relabel[perm_dyads[i].id] = labels[i];
        }

        GraphDataset perm_data;
        perm_data.graphs = data.graphs;
        for (auto& g : perm_data.graphs) g.meta.label = relabel.at(g.meta.dyad_id);

        // A fresh plan keeps folds stratified with respect to the permuted
        // labels; the original folds have no such guarantee after a shuffle.
        const FoldPlan perm_plan = plan_nested_cv(
            perm_dyads, plan.k_out, plan.k_inner,
            mix_seed(plan.seed, 52, static_cast<std::uint64_t>(p)));
        result.permuted.push_back(run_nested_pipeline(perm_data, perm_plan, cfg, hooks));
    }

    std::vector<double> diffs;
    diffs.reserve(result.permuted.size() * static_cast<std::size_t>(plan.k_out));
    for (const auto& perm : result.permuted)
        for (std::size_t f = 0; f < perm.folds.size(); ++f)
            diffs.push_back(result.true_result.folds[f].test_auc - perm.folds[f].test_auc);

    // Mean held-out fraction of the true plan, at the graph level.
    std::vector<int> fold_counts(static_cast<std::size_t>(plan.k_out), 0);
    std::map<std::string, int> dyad_index;
    for (std::size_t i = 0; i < plan.dyads.size(); ++i)
        dyad_index[plan.dyads[i].id] = plan.outer_assign[i];
    for (const auto& g : data.graphs)
        ++fold_counts[static_cast<std::size_t>(dyad_index.at(g.meta.dyad_id))];
    double rho = 0.0;
    for (const int c : fold_counts) rho += static_cast<double>(c) / data.graphs.size();
    rho /= plan.k_out;

    result.posterior = correlated_bayes_ttest(diffs, rho);
    return result;
}

PosteriorSummary compare_pipelines(const CVResult& a, const CVResult& b) {
    if (a.plan_hash != b.plan_hash)
        throw validation_error("compare_pipelines: results come from different fold plans");
    if (a.folds.size() != b.folds.size() || a.folds.empty())
        throw validation_error("compare_pipelines: fold counts differ");
    std::vector<double> diffs;
    diffs.reserve(a.folds.size());
    for (std::size_t f = 0; f < a.folds.size(); ++f) {
        if (a.folds[f].fold != b.folds[f].fold)
            throw validation_error("compare_pipelines: fold indices differ");
        diffs.push_back(a.folds[f].test_auc - b.folds[f].test_auc);
    }
    return correlated_bayes_ttest(diffs, 1.0 / static_cast<double>(a.folds.size()));
}

}  // namespace ibnet
