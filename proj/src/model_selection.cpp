#include "ibnet/model_selection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <set>
#include <thread>
#include <utility>

#include "ibnet/errors.hpp"
#include "ibnet/rng.hpp"

namespace ibnet {

namespace {

constexpr double kGpLengthScale = 0.3;
constexpr double kGpNoise = 1e-4;
constexpr int kAcqCandidates = 1000;

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string hash_of_json(const nlohmann::json& j) {
    const std::string s = j.dump();
    return hash_hex(fnv1a64(s.data(), s.size()));
}

/// Shuffle each class separately, then deal dyads to folds with one counter
/// that keeps running across classes, so per-fold class counts stay within one
/// dyad of the stratified ideal.
void stratified_round_robin(const std::vector<std::size_t>& class0,
                            const std::vector<std::size_t>& class1, int k, Rng& rng,
                            std::vector<int>& assign) {
    std::vector<std::size_t> order0 = class0;
    std::vector<std::size_t> order1 = class1;
    rng.shuffle(order0);
    rng.shuffle(order1);
    int counter = 0;
    for (const std::size_t i : order0) assign[i] = counter++ % k;
    for (const std::size_t i : order1) assign[i] = counter++ % k;
}

void validate_dim(const HyperDim& dim) {
    if (dim.name.empty()) throw validation_error("hyperparameter dimension needs a name");
    switch (dim.kind) {
        case HyperDim::Kind::CONTINUOUS:
            if (!(dim.lo < dim.hi))
                throw validation_error("dimension '" + dim.name + "': lo must be < hi");
            break;
        case HyperDim::Kind::CONTINUOUS_LOG:
            if (!(dim.lo > 0.0 && dim.lo < dim.hi))
                throw validation_error("dimension '" + dim.name + "': log scale needs 0 < lo < hi");
            break;
        case HyperDim::Kind::INTEGER_SET:
            if (dim.values.empty())
                throw validation_error("dimension '" + dim.name + "': empty value set");
            break;
    }
}

void validate_space(const HyperSpace& space) {
    std::set<std::string> names;
    for (const auto& dim : space.dims) {
        validate_dim(dim);
        if (!names.insert(dim.name).second)
            throw validation_error("duplicate hyperparameter dimension '" + dim.name + "'");
    }
}

double matern52(double r) {
    const double a = std::sqrt(5.0) * r;
    return (1.0 + a + a * a / 3.0) * std::exp(-a);
}

double halton(std::uint64_t index, int base) {
    double f = 1.0;
    double r = 0.0;
    for (std::uint64_t i = index; i > 0; i /= static_cast<std::uint64_t>(base)) {
        f /= base;
        r += f * static_cast<double>(i % static_cast<std::uint64_t>(base));
    }
    return r;
}

constexpr int kHaltonBases[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

/// Deterministic preference between equally scoring thetas: smaller lambda,
/// then smaller delta, then lexicographic.
bool theta_less(const Theta& a, const Theta& b) {
    for (const char* key : {"lambda", "delta"}) {
        const auto ia = a.find(key);
        const auto ib = b.find(key);
        if (ia != a.end() && ib != b.end() && ia->second != ib->second)
            return ia->second < ib->second;
    }
    return a < b;
}

nlohmann::json space_to_json(const HyperSpace& space) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& dim : space.dims) {
        nlohmann::json d;
        d["name"] = dim.name;
        switch (dim.kind) {
            case HyperDim::Kind::CONTINUOUS: d["kind"] = "continuous"; break;
            case HyperDim::Kind::CONTINUOUS_LOG: d["kind"] = "continuous_log"; break;
            case HyperDim::Kind::INTEGER_SET: d["kind"] = "integer_set"; break;
        }
        d["lo"] = dim.lo;
        d["hi"] = dim.hi;
        d["values"] = dim.values;
        arr.push_back(std::move(d));
    }
    return arr;
}

nlohmann::json theta_to_json(const Theta& theta) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, value] : theta) j[name] = value;
    return j;
}

Theta theta_from_json(const nlohmann::json& j) {
    Theta theta;
    for (auto it = j.begin(); it != j.end(); ++it) theta[it.key()] = it.value().get<double>();
    return theta;
}

}  // namespace

FoldPlan plan_nested_cv(const std::vector<DyadKey>& dyads, int k_out, int k_inner,
                        std::uint64_t seed) {
    if (k_out < 2) throw validation_error("plan_nested_cv: k_out must be >= 2");
    if (k_inner < 2) throw validation_error("plan_nested_cv: k_inner must be >= 2");

    FoldPlan plan;
    plan.k_out = k_out;
    plan.k_inner = k_inner;
    plan.seed = seed;
    plan.dyads = dyads;
    std::sort(plan.dyads.begin(), plan.dyads.end(),
              [](const DyadKey& a, const DyadKey& b) { return a.id < b.id; });

    const std::size_t n = plan.dyads.size();
    std::vector<std::size_t> class0;
    std::vector<std::size_t> class1;
    for (std::size_t i = 0; i < n; ++i) {
        const DyadKey& d = plan.dyads[i];
        if (d.id.empty()) throw validation_error("plan_nested_cv: empty dyad id");
        if (i + 1 < n && plan.dyads[i + 1].id == d.id)
            throw validation_error("plan_nested_cv: duplicate dyad id '" + d.id + "'");
        if (d.label == 0)
            class0.push_back(i);
        else if (d.label == 1)
            class1.push_back(i);
        else
            throw validation_error("plan_nested_cv: label must be 0 or 1");
    }
    if (static_cast<int>(class0.size()) < k_out || static_cast<int>(class1.size()) < k_out)
        throw validation_error("plan_nested_cv: need at least k_out dyads per class");

    plan.outer_assign.assign(n, -1);
    Rng outer_rng(mix_seed(seed, 21));
    stratified_round_robin(class0, class1, k_out, outer_rng, plan.outer_assign);

    plan.inner_assign.assign(static_cast<std::size_t>(k_out), std::vector<int>(n, -1));
    for (int f = 0; f < k_out; ++f) {
        std::vector<std::size_t> train0;
        std::vector<std::size_t> train1;
        for (std::size_t i = 0; i < n; ++i) {
            if (plan.outer_assign[i] == f) continue;
            (plan.dyads[i].label == 0 ? train0 : train1).push_back(i);
        }
        if (static_cast<int>(train0.size()) < k_inner || static_cast<int>(train1.size()) < k_inner)
            throw validation_error("plan_nested_cv: outer-train too small for k_inner on fold " +
                                   std::to_string(f));
        Rng inner_rng(mix_seed(seed, 23, static_cast<std::uint64_t>(f)));
        stratified_round_robin(train0, train1, k_inner, inner_rng,
                               plan.inner_assign[static_cast<std::size_t>(f)]);
    }
    return plan;
}

nlohmann::json plan_to_json(const FoldPlan& plan) {
    nlohmann::json j;
    j["k_out"] = plan.k_out;
    j["k_inner"] = plan.k_inner;
    j["seed"] = plan.seed;
    nlohmann::json dyads = nlohmann::json::array();
    for (const auto& d : plan.dyads) dyads.push_back({{"id", d.id}, {"label", d.label}});
    j["dyads"] = std::move(dyads);
    j["outer_assign"] = plan.outer_assign;
    j["inner_assign"] = plan.inner_assign;
    return j;
}

FoldPlan plan_from_json(const nlohmann::json& j) {
    FoldPlan plan;
    try {
        plan.k_out = j.at("k_out").get<int>();
        plan.k_inner = j.at("k_inner").get<int>();
        plan.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& d : j.at("dyads")) {
            DyadKey key;
            key.id = d.at("id").get<std::string>();
            key.label = d.at("label").get<int>();
            plan.dyads.push_back(std::move(key));
        }
        plan.outer_assign = j.at("outer_assign").get<std::vector<int>>();
        plan.inner_assign = j.at("inner_assign").get<std::vector<std::vector<int>>>();
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("fold plan JSON: ") + e.what());
    }
    const std::size_t n = plan.dyads.size();
    if (plan.k_out < 2 || plan.k_inner < 2 || plan.outer_assign.size() != n ||
        plan.inner_assign.size() != static_cast<std::size_t>(plan.k_out))
        throw validation_error("fold plan JSON: inconsistent shape");
    for (const auto& row : plan.inner_assign)
        if (row.size() != n) throw validation_error("fold plan JSON: inconsistent shape");
    return plan;
}

std::string plan_hash(const FoldPlan& plan) { return hash_of_json(plan_to_json(plan)); }

Eigen::VectorXd normalize_theta(const HyperSpace& space, const Theta& theta) {
    validate_space(space);
    if (theta.size() != space.dims.size())
        throw validation_error("normalize_theta: theta and space dimension counts differ");
    Eigen::VectorXd u(static_cast<Eigen::Index>(space.dims.size()));
    for (std::size_t d = 0; d < space.dims.size(); ++d) {
        const HyperDim& dim = space.dims[d];
        const auto it = theta.find(dim.name);
        if (it == theta.end())
            throw validation_error("normalize_theta: missing dimension '" + dim.name + "'");
        const double v = it->second;
        switch (dim.kind) {
            case HyperDim::Kind::CONTINUOUS:
                if (v < dim.lo || v > dim.hi)
                    throw validation_error("normalize_theta: '" + dim.name + "' out of range");
                u[static_cast<Eigen::Index>(d)] = (v - dim.lo) / (dim.hi - dim.lo);
                break;
            case HyperDim::Kind::CONTINUOUS_LOG:
                if (v < dim.lo || v > dim.hi)
                    throw validation_error("normalize_theta: '" + dim.name + "' out of range");
                u[static_cast<Eigen::Index>(d)] =
                    (std::log(v) - std::log(dim.lo)) / (std::log(dim.hi) - std::log(dim.lo));
                break;
            case HyperDim::Kind::INTEGER_SET: {
                const int target = static_cast<int>(std::llround(v));
                const auto pos = std::find(dim.values.begin(), dim.values.end(), target);
                if (pos == dim.values.end())
                    throw validation_error("normalize_theta: '" + dim.name +
                                           "' value not in the integer set");
                const auto idx = static_cast<double>(pos - dim.values.begin());
                const auto m = static_cast<double>(dim.values.size());
                u[static_cast<Eigen::Index>(d)] = m > 1.0 ? idx / (m - 1.0) : 0.0;
                break;
            }
        }
    }
    return u;
}

Theta denormalize_theta(const HyperSpace& space, const Eigen::VectorXd& u) {
    validate_space(space);
    if (u.size() != static_cast<Eigen::Index>(space.dims.size()))
        throw validation_error("denormalize_theta: coordinate count mismatch");
    Theta theta;
    for (std::size_t d = 0; d < space.dims.size(); ++d) {
        const HyperDim& dim = space.dims[d];
        const double t = std::clamp(u[static_cast<Eigen::Index>(d)], 0.0, 1.0);
        switch (dim.kind) {
            case HyperDim::Kind::CONTINUOUS:
                theta[dim.name] = dim.lo + t * (dim.hi - dim.lo);
                break;
            case HyperDim::Kind::CONTINUOUS_LOG:
                theta[dim.name] =
                    std::exp(std::log(dim.lo) + t * (std::log(dim.hi) - std::log(dim.lo)));
                break;
            case HyperDim::Kind::INTEGER_SET: {
                const auto m = static_cast<double>(dim.values.size());
                const auto idx = static_cast<std::size_t>(std::llround(t * (m - 1.0)));
                theta[dim.name] = static_cast<double>(dim.values[idx]);
                break;
            }
        }
    }
    return theta;
}

void gp_regress(const Eigen::MatrixXd& x_obs, const Eigen::VectorXd& y_obs,
                const Eigen::MatrixXd& x_query, Eigen::VectorXd& mean, Eigen::VectorXd& var) {
    const Eigen::Index n = x_obs.rows();
    if (n == 0) throw validation_error("gp_regress: needs at least one observation");
    if (y_obs.size() != n) throw validation_error("gp_regress: x/y row counts differ");
    if (x_query.cols() != x_obs.cols())
        throw validation_error("gp_regress: query dimension mismatch");

    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = 1.0 + kGpNoise;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double r = (x_obs.row(i) - x_obs.row(j)).norm() / kGpLengthScale;
            k(i, j) = k(j, i) = matern52(r);
        }
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success)
        throw validation_error("gp_regress: kernel matrix not positive definite");
    const Eigen::VectorXd alpha = llt.solve(y_obs);

    const Eigen::Index q = x_query.rows();
    mean.resize(q);
    var.resize(q);
    Eigen::VectorXd kstar(n);
    for (Eigen::Index g = 0; g < q; ++g) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double r = (x_obs.row(i) - x_query.row(g)).norm() / kGpLengthScale;
            kstar[i] = matern52(r);
        }
        mean[g] = kstar.dot(alpha);
        var[g] = std::max(0.0, 1.0 - kstar.dot(llt.solve(kstar)));
    }
}

Theta optimize_hyperparameters(const std::function<double(const Theta&)>& objective,
                               const HyperSpace& space, int budget, int n_init,
                               std::uint64_t seed) {
    validate_space(space);
    if (space.dims.empty()) throw validation_error("optimize_hyperparameters: empty space");
    if (n_init < 1) throw validation_error("optimize_hyperparameters: n_init must be >= 1");
    if (budget <= n_init)
        throw validation_error("optimize_hyperparameters: budget must exceed n_init");
    const auto d = static_cast<Eigen::Index>(space.dims.size());
    if (d > static_cast<Eigen::Index>(std::size(kHaltonBases)))
        throw validation_error("optimize_hyperparameters: too many dimensions");

    // Cranley-Patterson rotation turns the fixed Halton points into a
    // seed-dependent low-discrepancy set.
    Rng shift_rng(mix_seed(seed, 31));
    Eigen::VectorXd shift(d);
    for (Eigen::Index j = 0; j < d; ++j) shift[j] = shift_rng.uniform();

    struct Observation {
        Eigen::VectorXd u;
        double score;
        Theta theta;
    };
    std::vector<Observation> obs;
    int evals = 0;

    const auto evaluate_at = [&](const Eigen::VectorXd& u) {
        Theta theta = denormalize_theta(space, u);
        const double score = objective(theta);
        ++evals;
        if (std::isfinite(score)) obs.push_back({u, score, std::move(theta)});
    };

    for (int i = 1; i <= n_init && evals < budget; ++i) {
        Eigen::VectorXd u(d);
        for (Eigen::Index j = 0; j < d; ++j) {
            const double h = halton(static_cast<std::uint64_t>(i), kHaltonBases[j]) + shift[j];
            u[j] = h - std::floor(h);
        }
        evaluate_at(u);
    }

    for (int iter = 0; evals < budget; ++iter) {
        Rng cand_rng(mix_seed(seed, 32, static_cast<std::uint64_t>(iter)));
        Eigen::MatrixXd cand(kAcqCandidates, d);
        for (int c = 0; c < kAcqCandidates; ++c)
            for (Eigen::Index j = 0; j < d; ++j) cand(c, j) = cand_rng.uniform();

        Eigen::Index pick = 0;
        if (!obs.empty()) {
            Eigen::MatrixXd x(static_cast<Eigen::Index>(obs.size()), d);
            Eigen::VectorXd y(static_cast<Eigen::Index>(obs.size()));
            for (std::size_t i = 0; i < obs.size(); ++i) {
                x.row(static_cast<Eigen::Index>(i)) = obs[i].u.transpose();
                y[static_cast<Eigen::Index>(i)] = obs[i].score;
            }
            const double best = y.maxCoeff();
            Eigen::VectorXd mu;
            Eigen::VectorXd sigma2;
            gp_regress(x, y, cand, mu, sigma2);
            double best_ei = -1.0;
            for (Eigen::Index c = 0; c < cand.rows(); ++c) {
                const double sd = std::sqrt(sigma2[c]);
                const double gain = mu[c] - best;
                const double ei = sd > 1e-12
                                      ? gain * normal_cdf(gain / sd) + sd * normal_pdf(gain / sd)
                                      : std::max(0.0, gain);
                if (ei > best_ei) {
                    best_ei = ei;
                    pick = c;
                }
            }
        }
        evaluate_at(cand.row(pick).transpose());
    }

    if (obs.empty())
        throw validation_error("optimize_hyperparameters: every evaluation returned NaN");
    const Observation* incumbent = &obs.front();
    for (const auto& o : obs) {
        if (o.score > incumbent->score ||
            (o.score == incumbent->score && theta_less(o.theta, incumbent->theta)))
            incumbent = &o;
    }
    return incumbent->theta;
}

GraphDataset build_graph_dataset(const std::vector<DyadRecording>& recordings,
                                 Estimator estimator, Band band, const ConnectivityOpts& opts,
                                 const std::string& chromophore, const Reduction& reduction) {
    GraphDataset data;
    for (const auto& rec : recordings) {
        if (!chromophore.empty() && rec.meta.chromophore != chromophore) continue;
        const ConnectivityMatrix cm = connectivity_matrix(rec, estimator, band, opts);
        data.graphs.push_back(build_interbrain_graph(cm, reduction));
    }
    if (data.graphs.empty())
        throw validation_error("build_graph_dataset: no recordings selected" +
                               (chromophore.empty() ? std::string()
                                                    : " for chromophore '" + chromophore + "'"));
    return data;
}

std::vector<DyadKey> dataset_dyads(const GraphDataset& data) {
    std::map<std::string, int> labels;
    for (const auto& g : data.graphs) {
        const auto [it, inserted] = labels.emplace(g.meta.dyad_id, g.meta.label);
        if (!inserted && it->second != g.meta.label)
            throw validation_error("dataset_dyads: dyad '" + g.meta.dyad_id +
                                   "' carries conflicting labels");
    }
    std::vector<DyadKey> dyads;
    dyads.reserve(labels.size());
    for (const auto& [id, label] : labels) dyads.push_back({id, label});
    return dyads;
}

HyperSpace default_hyper_space(EncoderKind kind) {
    HyperSpace space;
    space.dims.push_back({"lambda", HyperDim::Kind::CONTINUOUS_LOG, 1e-4, 1e2, {}});
    if (kind == EncoderKind::NMF_IBNE)
        space.dims.push_back({"delta", HyperDim::Kind::INTEGER_SET, 0.0, 0.0, {2, 4, 8, 16}});
    if (kind == EncoderKind::GRAPH2VEC || kind == EncoderKind::GL2VEC)
        space.dims.push_back({"wl_depth", HyperDim::Kind::INTEGER_SET, 0.0, 0.0, {1, 2, 3}});
    return space;
}

nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg) {
    nlohmann::json j;
    j["encoder"] = encoder_name(cfg.encoder);
    j["classifier"] = classifier_name(cfg.classifier);
    nlohmann::json p;
    p["delta"] = cfg.base_params.delta;
    p["wl_depth"] = cfg.base_params.wl_depth;
    p["ldp_bins"] = cfg.base_params.ldp_bins;
    p["dwc_scales"] = cfg.base_params.dwc_scales;
    p["scattering_levels"] = cfg.base_params.scattering_levels;
    p["scattering_moments"] = cfg.base_params.scattering_moments;
    p["feather_order"] = cfg.base_params.feather_order;
    p["feather_points"] = cfg.base_params.feather_points;
    j["base_params"] = std::move(p);
    j["base_lambda"] = cfg.base_lambda;
    j["space"] = space_to_json(cfg.space);
    j["budget"] = cfg.budget;
    j["n_init"] = cfg.n_init;
    j["opt_seed"] = cfg.opt_seed;
    j["encoder_seed"] = cfg.encoder_seed;
    // n_threads is intentionally absent: thread count never changes results.
    return j;
}

std::string config_hash(const PipelineConfig& cfg) {
    return hash_of_json(pipeline_config_to_json(cfg));
}

nlohmann::json cv_result_to_json(const CVResult& r) {
    nlohmann::json j;
    j["plan_hash"] = r.plan_hash;
    j["config_hash"] = r.config_hash;
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : r.folds)
        folds.push_back({{"fold", f.fold},
                         {"best_theta", theta_to_json(f.best_theta)},
                         {"test_auc", f.test_auc}});
    j["folds"] = std::move(folds);
    j["mean_auc"] = r.mean_auc;
    j["sd_auc"] = r.sd_auc;
    return j;
}

CVResult cv_result_from_json(const nlohmann::json& j) {
    CVResult r;
    try {
        r.plan_hash = j.at("plan_hash").get<std::string>();
        r.config_hash = j.at("config_hash").get<std::string>();
        for (const auto& f : j.at("folds")) {
            FoldResult fr;
            fr.fold = f.at("fold").get<int>();
            fr.best_theta = theta_from_json(f.at("best_theta"));
            fr.test_auc = f.at("test_auc").get<double>();
            r.folds.push_back(std::move(fr));
        }
        r.mean_auc = j.at("mean_auc").get<double>();
        r.sd_auc = j.at("sd_auc").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("cv result JSON: ") + e.what());
    }
    return r;
}

namespace {

struct FoldContext {
    const GraphDataset& data;
    const FoldPlan& plan;
    const PipelineConfig& cfg;
    const PipelineHooks& hooks;
    std::vector<int> graph_dyad;  // dyad index per graph
};

std::pair<EncoderParams, double> apply_theta(const PipelineConfig& cfg, const Theta& theta) {
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
    return {params, lambda};
}

/// Fit encoder and classifier on the train graphs, score the validation
/// graphs, return the graph-level ROC-AUC. Infeasible splits (single-class
/// validation set, rank-deficient encoder setups) surface as validation
/// errors; allow_nan converts those to NaN so the optimizer can skip them.
double evaluate_split(const FoldContext& ctx, const std::vector<std::size_t>& train_idx,
                      const std::vector<std::size_t>& val_idx, const Theta& theta,
                      bool allow_nan) {
    const auto [params, lambda] = apply_theta(ctx.cfg, theta);
    try {
        std::vector<BipartiteInterbrainGraph> train;
        std::vector<BipartiteInterbrainGraph> val;
        std::vector<int> train_y;
        std::vector<int> val_y;
        train.reserve(train_idx.size());
        val.reserve(val_idx.size());
        for (const std::size_t i : train_idx) {
            train.push_back(ctx.data.graphs[i]);
            train_y.push_back(ctx.data.graphs[i].meta.label);
        }
        for (const std::size_t i : val_idx) {
            val.push_back(ctx.data.graphs[i]);
            val_y.push_back(ctx.data.graphs[i].meta.label);
        }
        if (ctx.hooks.on_encoder_fit) {
            std::vector<RecordMeta> keys;
            keys.reserve(train.size());
            for (const auto& g : train) keys.push_back(g.meta);
            ctx.hooks.on_encoder_fit(keys);
        }
        const EncoderState state = fit_encoder(ctx.cfg.encoder, train, params,
                                               ctx.cfg.encoder_seed);
        const EmbeddingMatrix zt = transform(state, train);
        const EmbeddingMatrix zv = transform(state, val);
        const ClassifierState clf = fit_classifier(ctx.cfg.classifier, zt.rows, train_y, lambda);
        return roc_auc(decision_scores(clf, zv.rows), val_y);
    } catch (const validation_error&) {
        if (allow_nan) return std::numeric_limits<double>::quiet_NaN();
        throw;
    }
}

FoldResult run_fold(const FoldContext& ctx, int fold) {
    const auto f = static_cast<std::size_t>(fold);
    std::vector<std::size_t> outer_train;
    std::vector<std::size_t> outer_test;
    for (std::size_t g = 0; g < ctx.data.graphs.size(); ++g) {
        const int dyad = ctx.graph_dyad[g];
        (ctx.plan.outer_assign[static_cast<std::size_t>(dyad)] == fold ? outer_test : outer_train)
            .push_back(g);
    }

    Theta best;
    if (!ctx.cfg.space.dims.empty()) {
        const auto objective = [&](const Theta& theta) {
            double sum = 0.0;
            for (int j = 0; j < ctx.plan.k_inner; ++j) {
                std::vector<std::size_t> train;
                std::vector<std::size_t> val;
                for (const std::size_t g : outer_train) {
                    const int slot =
                        ctx.plan.inner_assign[f][static_cast<std::size_t>(ctx.graph_dyad[g])];
                    (slot == j ? val : train).push_back(g);
                }
                const double auc = evaluate_split(ctx, train, val, theta, true);
                if (std::isnan(auc)) return std::numeric_limits<double>::quiet_NaN();
                sum += auc;
            }
            return sum / ctx.plan.k_inner;
        };
        best = optimize_hyperparameters(
            objective, ctx.cfg.space, ctx.cfg.budget, ctx.cfg.n_init,
            mix_seed(ctx.cfg.opt_seed, 41, static_cast<std::uint64_t>(fold)));
    }

    FoldResult result;
    result.fold = fold;
    result.best_theta = best;
    result.test_auc = evaluate_split(ctx, outer_train, outer_test, best, false);
    return result;
}

}  // namespace

CVResult run_nested_pipeline(const GraphDataset& data, const FoldPlan& plan,
                             const PipelineConfig& cfg, const PipelineHooks& hooks) {
    const std::size_t n = plan.dyads.size();
    if (plan.outer_assign.size() != n ||
        plan.inner_assign.size() != static_cast<std::size_t>(plan.k_out))
        throw validation_error("run_nested_pipeline: malformed fold plan");
    if (data.graphs.empty()) throw validation_error("run_nested_pipeline: empty dataset");

    std::map<std::string, int> dyad_index;
    for (std::size_t i = 0; i < n; ++i) dyad_index[plan.dyads[i].id] = static_cast<int>(i);

    FoldContext ctx{data, plan, cfg, hooks, {}};
    ctx.graph_dyad.reserve(data.graphs.size());
    std::vector<int> coverage(n, 0);
    for (const auto& g : data.graphs) {
        const auto it = dyad_index.find(g.meta.dyad_id);
        if (it == dyad_index.end())
            throw validation_error("run_nested_pipeline: graph dyad '" + g.meta.dyad_id +
                                   "' is not in the fold plan");
        if (plan.dyads[static_cast<std::size_t>(it->second)].label != g.meta.label)
            throw validation_error("run_nested_pipeline: label mismatch for dyad '" +
                                   g.meta.dyad_id + "'");
        ctx.graph_dyad.push_back(it->second);
        ++coverage[static_cast<std::size_t>(it->second)];
    }
    for (std::size_t i = 0; i < n; ++i)
        if (coverage[i] == 0)
            throw validation_error("run_nested_pipeline: dyad '" + plan.dyads[i].id +
                                   "' has no graphs");

    const int k = plan.k_out;
    std::vector<FoldResult> folds(static_cast<std::size_t>(k));
    const int n_threads = std::clamp(cfg.n_threads, 1, k);
    if (n_threads == 1) {
        for (int fold = 0; fold < k; ++fold)
            folds[static_cast<std::size_t>(fold)] = run_fold(ctx, fold);
    } else {
        // Folds write disjoint slots and read only immutable shared state, so
        // any interleaving produces the sequential result bit for bit.
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(k));
        std::vector<std::thread> workers;
        workers.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) {
            workers.emplace_back([&, t]() {
                for (int fold = t; fold < k; fold += n_threads) {
                    try {
                        folds[static_cast<std::size_t>(fold)] = run_fold(ctx, fold);
                    } catch (...) {
                        errors[static_cast<std::size_t>(fold)] = std::current_exception();
                    }
                }
            });
        }
        for (auto& w : workers) w.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    CVResult result;
    result.plan_hash = plan_hash(plan);
    result.config_hash = config_hash(cfg);
    result.folds = std::move(folds);
    double sum = 0.0;
    for (const auto& fr : result.folds) sum += fr.test_auc;
    result.mean_auc = sum / k;
    double ss = 0.0;
    for (const auto& fr : result.folds) {
        const double d = fr.test_auc - result.mean_auc;
        ss += d * d;
    }
    result.sd_auc = std::sqrt(ss / (k - 1));
    return result;
}

}  // namespace ibnet
