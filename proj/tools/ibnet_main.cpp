#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ibnet/classify.hpp"
#include "ibnet/connectivity.hpp"
#include "ibnet/embeddings.hpp"
#include "ibnet/errors.hpp"
#include "ibnet/evaluation.hpp"
#include "ibnet/graph.hpp"
#include "ibnet/model_selection.hpp"
#include "ibnet/rng.hpp"
#include "ibnet/signals.hpp"
#include "ibnet/stats.hpp"
#include "ibnet/tracking.hpp"

namespace fs = std::filesystem;
using namespace ibnet;

namespace {

// Seed streams derived from the master seed; explicit so reruns of any
// subcommand agree with full-pipeline runs.
constexpr std::uint64_t kSeedCohort = 1;
constexpr std::uint64_t kSeedPlan = 2;
constexpr std::uint64_t kSeedOpt = 3;
constexpr std::uint64_t kSeedEncoder = 4;
constexpr std::uint64_t kSeedPerm = 5;

const char* const kEncoderOrder[] = {"fc",  "nmf_ibne", "ldp", "graph2vec",
                                     "gl2vec", "dwc",      "scattering", "feather"};
const char* const kEstimatorOrder[] = {"wco", "plv", "entropy"};
const char* const kClassifierOrder[] = {"ridge_logreg", "linear_svm"};

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in.is_open()) throw io_error("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_text_file(const std::string& path, const std::string& content) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        fs::create_directories(parent, ec);
        if (ec) throw io_error("cannot create directory '" + parent.string() + "'");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out.is_open()) throw io_error("cannot open '" + path + "' for writing");
    out << content;
    if (!out.good()) throw io_error("write to '" + path + "' failed");
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
}

template <typename T>
T resolved(const CLI::Option* opt, const T& flag_value, const nlohmann::json& config,
           const char* key, const T& fallback) {
    if (opt != nullptr && opt->count() > 0) return flag_value;
    if (config.contains(key)) {
        try {
            return config.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw validation_error(std::string("config key '") + key + "': " + e.what());
        }
    }
    return fallback;
}

std::uint64_t resolve_master_seed(const CLI::Option* opt, std::uint64_t flag_value,
                                  const nlohmann::json& config) {
    if (opt != nullptr && opt->count() > 0) return flag_value;
    if (config.contains("seed")) {
        try {
            return config.at("seed").get<std::uint64_t>();
        } catch (const nlohmann::json::exception& e) {
            throw validation_error(std::string("config key 'seed': ") + e.what());
        }
    }
    if (const char* env = std::getenv("IBNET_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0')
            throw validation_error("IBNET_SEED must be an unsigned integer");
        return static_cast<std::uint64_t>(v);
    }
    return 0;
}

std::string sanitize(const std::string& s) {
    std::string out = s;
    for (char& c : out)
        if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
    return out;
}

std::string record_name(const RecordMeta& meta) {
    return sanitize(meta.dyad_id) + "_" + sanitize(meta.condition_id) + "_" +
           sanitize(meta.chromophore);
}

std::vector<std::string> sorted_json_files(const std::string& dir) {
    if (!fs::is_directory(dir)) throw io_error("'" + dir + "' is not a directory");
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw validation_error("no .json files in '" + dir + "'");
    return files;
}

CouplingProfile profile_from_config(const nlohmann::json& config, const char* key,
                                    const CouplingProfile& fallback) {
    if (!config.contains(key)) return fallback;
    const nlohmann::json& p = config.at(key);
    CouplingProfile out = fallback;
    try {
        if (p.contains("concurrent_strength"))
            out.concurrent_strength = p.at("concurrent_strength").get<double>();
        if (p.contains("lagged_strength")) out.lagged_strength = p.at("lagged_strength").get<double>();
        if (p.contains("lag_s")) out.lag_s = p.at("lag_s").get<double>();
        if (p.contains("nonlinearity")) out.nonlinearity = p.at("nonlinearity").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("config key '") + key + "': " + e.what());
    }
    return out;
}

/// Demo cohort: a class difference only in lagged nonlinear coupling. Class 1
/// couples at a lag the default estimator grid contains; class 0 couples
/// far off-grid, so phase-entropy separates the classes while time-averaged
/// coherence stays close.
CouplingProfile default_profile_class0() { return {0.0, 0.85, 25.0, 1.0}; }
CouplingProfile default_profile_class1() { return {0.0, 0.58, 3.0, 1.0}; }

struct CommonFlags {
    std::string config_path;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* config_opt = nullptr;

    nlohmann::json config = nlohmann::json::object();

    void load_config() {
        if (config_opt != nullptr && config_opt->count() > 0) {
            config = load_json_file(config_path);
            if (!config.is_object()) throw validation_error("config file must hold a JSON object");
        }
    }
    std::uint64_t master_seed() const { return resolve_master_seed(seed_opt, seed, config); }
};

void add_common(CLI::App* sub, CommonFlags& c) {
    c.config_opt = sub->add_option("--config", c.config_path, "JSON config file; flags win");
    c.seed_opt = sub->add_option("--seed", c.seed, "master seed (beats config and IBNET_SEED)");
}

struct CohortFlags {
    int dyads_per_class = 18;
    int channels = 8;
    int conditions = 8;
    double duration_s = 120.0;
    double fs = 4.0;
    double noise_sd = 0.3;
    double trait_spread = 0.25;
    CLI::Option* o_dyads = nullptr;
    CLI::Option* o_channels = nullptr;
    CLI::Option* o_conditions = nullptr;
    CLI::Option* o_duration = nullptr;
    CLI::Option* o_fs = nullptr;
    CLI::Option* o_noise = nullptr;
    CLI::Option* o_trait = nullptr;

    CohortConfig resolve(const CommonFlags& common) const {
        const nlohmann::json& cfg = common.config;
        CohortConfig c;
        c.n_dyads_per_class = resolved(o_dyads, dyads_per_class, cfg, "dyads_per_class", 18);
        c.n_channels = resolved(o_channels, channels, cfg, "channels", 8);
        c.conditions_per_dyad = resolved(o_conditions, conditions, cfg, "conditions", 8);
        c.duration_s = resolved(o_duration, duration_s, cfg, "duration_s", 120.0);
        c.fs = resolved(o_fs, fs, cfg, "fs", 4.0);
        c.noise_sd = resolved(o_noise, noise_sd, cfg, "noise_sd", 0.3);
        c.dyad_trait_spread = resolved(o_trait, trait_spread, cfg, "trait_spread", 0.25);
        c.profile_class0 = profile_from_config(cfg, "profile_class0", default_profile_class0());
        c.profile_class1 = profile_from_config(cfg, "profile_class1", default_profile_class1());
        c.seed = common.master_seed();
        return c;
    }
};

void add_cohort(CLI::App* sub, CohortFlags& c) {
    c.o_dyads = sub->add_option("--dyads-per-class", c.dyads_per_class, "dyads per class");
    c.o_channels = sub->add_option("--channels", c.channels, "channels per participant");
    c.o_conditions = sub->add_option("--conditions", c.conditions, "recordings per dyad");
    c.o_duration = sub->add_option("--duration", c.duration_s, "recording length, seconds");
    c.o_fs = sub->add_option("--fs", c.fs, "sampling rate, Hz");
    c.o_noise = sub->add_option("--noise-sd", c.noise_sd, "observation noise sd");
    c.o_trait = sub->add_option("--trait-spread", c.trait_spread, "dyad coupling spread");
}

struct ConnectivityFlags {
    std::string estimator = "wco";
    double band_lo = 5.0;
    double band_hi = 20.0;
    double max_lag = 4.0;
    int n_lags = 9;
    int bins = 0;
    double top_percent = 1.0;
    CLI::Option* o_estimator = nullptr;
    CLI::Option* o_band_lo = nullptr;
    CLI::Option* o_band_hi = nullptr;
    CLI::Option* o_max_lag = nullptr;
    CLI::Option* o_n_lags = nullptr;
    CLI::Option* o_bins = nullptr;
    CLI::Option* o_top = nullptr;

    Estimator resolve_estimator(const nlohmann::json& cfg) const {
        return estimator_from_name(
            resolved(o_estimator, estimator, cfg, "estimator", std::string("wco")));
    }
    Band resolve_band(const nlohmann::json& cfg) const {
        return {resolved(o_band_lo, band_lo, cfg, "band_lo_s", 5.0),
                resolved(o_band_hi, band_hi, cfg, "band_hi_s", 20.0)};
    }
    ConnectivityOpts resolve_opts(const nlohmann::json& cfg) const {
        ConnectivityOpts opts;
        opts.entropy.max_lag_s = resolved(o_max_lag, max_lag, cfg, "entropy_max_lag_s", 4.0);
        opts.entropy.n_lags = resolved(o_n_lags, n_lags, cfg, "entropy_n_lags", 9);
        opts.entropy.n_bins = resolved(o_bins, bins, cfg, "entropy_bins", 0);
        if (cfg.contains("entropy_max_over_lags"))
            opts.entropy.max_over_lags = cfg.at("entropy_max_over_lags").get<bool>();
        if (cfg.contains("wavelet_omega0"))
            opts.wavelet.omega0 = cfg.at("wavelet_omega0").get<double>();
        if (cfg.contains("wavelet_voices"))
            opts.wavelet.voices_per_octave = cfg.at("wavelet_voices").get<int>();
        return opts;
    }
    Reduction resolve_reduction(const nlohmann::json& cfg) const {
        const double p = resolved(o_top, top_percent, cfg, "top_percent", 1.0);
        return p >= 1.0 ? Reduction::none() : Reduction::top_percent(p);
    }
};

void add_connectivity(CLI::App* sub, ConnectivityFlags& c, bool with_reduction) {
    c.o_estimator =
        sub->add_option("--estimator", c.estimator, "synchrony estimator: wco, plv, entropy");
    c.o_band_lo = sub->add_option("--band-lo", c.band_lo, "shortest period in the band, s");
    c.o_band_hi = sub->add_option("--band-hi", c.band_hi, "longest period in the band, s");
    c.o_max_lag = sub->add_option("--max-lag", c.max_lag, "entropy lag grid half-width, s");
    c.o_n_lags = sub->add_option("--n-lags", c.n_lags, "entropy lag grid size (odd)");
    c.o_bins = sub->add_option("--bins", c.bins, "entropy histogram bins (0 = auto)");
    if (with_reduction)
        c.o_top = sub->add_option("--top-percent", c.top_percent,
                                  "keep only this fraction of strongest edges (0,1]");
}

struct PipelineFlags {
    std::string encoder = "fc";
    std::string classifier = "ridge_logreg";
    std::string chromophore = "HBO";
    double lambda = 1e-2;
    int delta = 0;
    int wl_depth = 2;
    int ldp_bins = 32;
    int k_out = 5;
    int k_inner = 3;
    int budget = 25;
    int n_init = 5;
    int threads = 1;
    bool no_opt = false;
    CLI::Option* o_encoder = nullptr;
    CLI::Option* o_classifier = nullptr;
    CLI::Option* o_chromophore = nullptr;
    CLI::Option* o_lambda = nullptr;
    CLI::Option* o_delta = nullptr;
    CLI::Option* o_wl_depth = nullptr;
    CLI::Option* o_ldp_bins = nullptr;
    CLI::Option* o_k_out = nullptr;
    CLI::Option* o_k_inner = nullptr;
    CLI::Option* o_budget = nullptr;
    CLI::Option* o_n_init = nullptr;
    CLI::Option* o_threads = nullptr;

    EncoderParams resolve_params(const nlohmann::json& cfg) const {
        EncoderParams p;
        p.delta = resolved(o_delta, delta, cfg, "delta", 0);
        p.wl_depth = resolved(o_wl_depth, wl_depth, cfg, "wl_depth", 2);
        p.ldp_bins = resolved(o_ldp_bins, ldp_bins, cfg, "ldp_bins", 32);
        if (cfg.contains("dwc_scales"))
            p.dwc_scales = cfg.at("dwc_scales").get<std::vector<double>>();
        if (cfg.contains("scattering_levels"))
            p.scattering_levels = cfg.at("scattering_levels").get<int>();
        if (cfg.contains("scattering_moments"))
            p.scattering_moments = cfg.at("scattering_moments").get<int>();
        if (cfg.contains("feather_order")) p.feather_order = cfg.at("feather_order").get<int>();
        if (cfg.contains("feather_points")) p.feather_points = cfg.at("feather_points").get<int>();
        return p;
    }

    PipelineConfig resolve_config(const CommonFlags& common) const {
        const nlohmann::json& cfg = common.config;
        PipelineConfig pc;
        pc.encoder = encoder_from_name(
            resolved(o_encoder, encoder, cfg, "encoder", std::string("fc")));
        pc.classifier = classifier_from_name(
            resolved(o_classifier, classifier, cfg, "classifier", std::string("ridge_logreg")));
        pc.base_params = resolve_params(cfg);
        pc.base_lambda = resolved(o_lambda, lambda, cfg, "lambda", 1e-2);
        const bool optimize = !resolved(static_cast<const CLI::Option*>(nullptr), false, cfg,
                                        "no_opt", false) &&
                              !no_opt;
        if (optimize) pc.space = default_hyper_space(pc.encoder);
        pc.budget = resolved(o_budget, budget, cfg, "budget", 25);
        pc.n_init = resolved(o_n_init, n_init, cfg, "n_init", 5);
        const std::uint64_t master = common.master_seed();
        pc.opt_seed = mix_seed(master, kSeedOpt);
        pc.encoder_seed = mix_seed(master, kSeedEncoder);
        pc.n_threads = resolved(o_threads, threads, cfg, "threads", 1);
        return pc;
    }
};

void add_pipeline(CLI::App* sub, PipelineFlags& p, bool with_plan) {
    p.o_encoder = sub->add_option("--encoder", p.encoder,
                                  "fc, nmf_ibne, ldp, graph2vec, gl2vec, dwc, scattering, feather");
    p.o_classifier =
        sub->add_option("--classifier", p.classifier, "ridge_logreg or linear_svm");
    p.o_chromophore = sub->add_option("--chromophore", p.chromophore, "HBO or HBR");
    p.o_lambda = sub->add_option("--lambda", p.lambda, "regularization strength");
    p.o_delta = sub->add_option("--delta", p.delta, "embedding width (0 = encoder default)");
    p.o_wl_depth = sub->add_option("--wl-depth", p.wl_depth, "subtree token depth");
    p.o_ldp_bins = sub->add_option("--ldp-bins", p.ldp_bins, "degree profile histogram bins");
    sub->add_flag("--no-opt", p.no_opt, "skip hyperparameter optimization");
    p.o_budget = sub->add_option("--budget", p.budget, "hyperparameter evaluations");
    p.o_n_init = sub->add_option("--n-init", p.n_init, "quasi-random starts");
    if (with_plan) {
        p.o_k_out = sub->add_option("--k-out", p.k_out, "outer folds");
        p.o_k_inner = sub->add_option("--k-inner", p.k_inner, "inner folds");
        p.o_threads = sub->add_option("--threads", p.threads, "worker threads over outer folds");
    }
}

struct SourceFlags {
    std::string manifest;
    bool simulate = false;

    std::vector<DyadRecording> load(const CommonFlags& common, const CohortFlags& cohort) const {
        if (simulate) return generate_dyad_cohort(cohort.resolve(common));
        if (!manifest.empty()) return load_recordings(manifest);
        throw validation_error("provide --manifest FILE or --simulate");
    }
    std::string describe() const { return simulate ? std::string("simulated") : manifest; }
};

void add_source(CLI::App* sub, SourceFlags& s) {
    CLI::Option* m = sub->add_option("--manifest", s.manifest, "cohort manifest JSON");
    CLI::Option* sim = sub->add_flag("--simulate", s.simulate, "generate the cohort in memory");
    m->excludes(sim);
    sim->excludes(m);
}

nlohmann::json theta_json(const Theta& theta) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : theta) j[k] = v;
    return j;
}

/// Shared ledger write for analysis commands.
void append_run(const std::string& ledger, const std::string& command,
                const nlohmann::json& params, const nlohmann::json& metrics,
                const std::vector<std::string>& artifacts) {
    const std::string hash = content_hash(params);
    RunRecord record;
    record.timestamp = utc_timestamp();
    record.config_hash = hash;
    record.params = params;
    record.params["command"] = command;
    record.metrics = metrics;
    record.artifact_paths = artifacts;
    const std::size_t position = read_ledger(ledger).size();
    record.run_id = command + "-" + hash + "-" + std::to_string(position);
    record_run(ledger, record);
}

nlohmann::json base_run_params(const CommonFlags& common, const ConnectivityFlags& conn,
                               const PipelineFlags& pipe, const SourceFlags& source,
                               const PipelineConfig& pc, Band band) {
    nlohmann::json params;
    params["source"] = source.describe();
    params["estimator"] = estimator_name(conn.resolve_estimator(common.config));
    params["band_lo_s"] = band.lo_s;
    params["band_hi_s"] = band.hi_s;
    params["encoder"] = encoder_name(pc.encoder);
    params["classifier"] = classifier_name(pc.classifier);
    params["lambda"] = pc.base_lambda;
    params["delta"] = pc.base_params.delta;
    params["wl_depth"] = pc.base_params.wl_depth;
    params["ldp_bins"] = pc.base_params.ldp_bins;
    params["optimize"] = !pc.space.dims.empty();
    params["budget"] = pc.budget;
    params["n_init"] = pc.n_init;
    params["seed"] = common.master_seed();
    params["chromophore"] = resolved(pipe.o_chromophore, pipe.chromophore, common.config,
                                     "chromophore", std::string("HBO"));
    return params;
}

// ---------------------------------------------------------------------------
// subcommand handlers

int run_simulate(const CommonFlags& common, const CohortFlags& cohort,
                 const std::string& out_dir) {
    const CohortConfig config = cohort.resolve(common);
    const std::vector<DyadRecording> recordings = generate_dyad_cohort(config);
    const std::string manifest = write_cohort(recordings, out_dir);
    std::cout << "wrote " << recordings.size() << " recordings, manifest " << manifest << "\n";
    return 0;
}

int run_connect(const CommonFlags& common, const ConnectivityFlags& conn,
                const std::string& manifest, const std::string& out_dir) {
    const std::vector<DyadRecording> recordings = load_recordings(manifest);
    const Estimator est = conn.resolve_estimator(common.config);
    const Band band = conn.resolve_band(common.config);
    const ConnectivityOpts opts = conn.resolve_opts(common.config);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw io_error("cannot create directory '" + out_dir + "'");
    for (const auto& rec : recordings) {
        const ConnectivityMatrix cm = connectivity_matrix(rec, est, band, opts);
        const std::string path =
            (fs::path(out_dir) / ("conn_" + record_name(rec.meta) + ".json")).string();
        write_text_file(path, connectivity_to_json(cm).dump() + "\n");
    }
    std::cout << "wrote " << recordings.size() << " connectivity matrices to " << out_dir
              << "\n";
    return 0;
}

int run_graph(const CommonFlags& common, const ConnectivityFlags& conn, const std::string& in_dir,
              const std::string& out_dir) {
    const Reduction reduction = conn.resolve_reduction(common.config);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw io_error("cannot create directory '" + out_dir + "'");
    int count = 0;
    for (const std::string& file : sorted_json_files(in_dir)) {
        const ConnectivityMatrix cm = connectivity_from_json(load_json_file(file));
        const BipartiteInterbrainGraph g = build_interbrain_graph(cm, reduction);
        const std::string path =
            (fs::path(out_dir) / ("graph_" + record_name(g.meta) + ".json")).string();
        write_text_file(path, graph_to_json(g).dump() + "\n");
        ++count;
    }
    std::cout << "wrote " << count << " graphs to " << out_dir << "\n";
    return 0;
}

int run_embed(const CommonFlags& common, const PipelineFlags& pipe, const std::string& graphs_dir,
              const std::string& out_prefix, const std::string& ledger) {
    std::vector<BipartiteInterbrainGraph> graphs;
    for (const std::string& file : sorted_json_files(graphs_dir))
        graphs.push_back(graph_from_json(load_json_file(file)));

    const EncoderKind kind = encoder_from_name(
        resolved(pipe.o_encoder, pipe.encoder, common.config, "encoder", std::string("fc")));
    const EncoderParams params = pipe.resolve_params(common.config);
    const std::uint64_t seed = mix_seed(common.master_seed(), kSeedEncoder);

    const EncoderState state = fit_encoder(kind, graphs, params, seed);
    const EmbeddingMatrix emb = transform(state, graphs);

    const std::string csv_path = out_prefix + "_embedding.csv";
    const std::string state_path = out_prefix + "_encoder.json";
    const fs::path parent = fs::path(csv_path).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        fs::create_directories(parent, ec);
        if (ec) throw io_error("cannot create directory '" + parent.string() + "'");
    }
    write_embedding_csv(emb, csv_path);
    write_text_file(state_path, encoder_to_json(state).dump() + "\n");

    nlohmann::json params_json;
    params_json["encoder"] = encoder_name(kind);
    params_json["delta"] = params.delta;
    params_json["wl_depth"] = params.wl_depth;
    params_json["ldp_bins"] = params.ldp_bins;
    params_json["seed"] = common.master_seed();
    params_json["source"] = graphs_dir;
    nlohmann::json metrics;
    metrics["n_graphs"] = graphs.size();
    metrics["delta"] = emb.delta;
    append_run(ledger, "embed", params_json, metrics, {csv_path, state_path});

    std::cout << "embedded " << graphs.size() << " graphs into width " << emb.delta << ", wrote "
              << csv_path << " and " << state_path << "\n";
    return 0;
}

int run_cv(const CommonFlags& common, const CohortFlags& cohort, const ConnectivityFlags& conn,
           const PipelineFlags& pipe, const SourceFlags& source, const std::string& out_path,
           const std::string& ledger) {
    const std::vector<DyadRecording> recordings = source.load(common, cohort);
    const Estimator est = conn.resolve_estimator(common.config);
    const Band band = conn.resolve_band(common.config);
    const std::string chromophore = resolved(pipe.o_chromophore, pipe.chromophore, common.config,
                                             "chromophore", std::string("HBO"));
    const GraphDataset data =
        build_graph_dataset(recordings, est, band, conn.resolve_opts(common.config), chromophore,
                            conn.resolve_reduction(common.config));

    const std::uint64_t master = common.master_seed();
    const int k_out = resolved(pipe.o_k_out, pipe.k_out, common.config, "k_out", 5);
    const int k_inner = resolved(pipe.o_k_inner, pipe.k_inner, common.config, "k_inner", 3);
    const FoldPlan plan =
        plan_nested_cv(dataset_dyads(data), k_out, k_inner, mix_seed(master, kSeedPlan));
    const PipelineConfig pc = pipe.resolve_config(common);

    const CVResult result = run_nested_pipeline(data, plan, pc);

    const std::string out_json = cv_result_to_json(result).dump() + "\n";
    std::vector<std::string> artifacts;
    if (!out_path.empty()) {
        write_text_file(out_path, out_json);
        artifacts.push_back(out_path);
    }

    nlohmann::json params = base_run_params(common, conn, pipe, source, pc, band);
    params["k_out"] = k_out;
    params["k_inner"] = k_inner;
    nlohmann::json metrics;
    metrics["mean_auc"] = result.mean_auc;
    metrics["sd_auc"] = result.sd_auc;
    nlohmann::json fold_aucs = nlohmann::json::array();
    for (const auto& f : result.folds) fold_aucs.push_back(f.test_auc);
    metrics["fold_aucs"] = std::move(fold_aucs);
    append_run(ledger, "cv", params, metrics, artifacts);

    char line[128];
    std::snprintf(line, sizeof(line), "mean_auc %.4f sd %.4f over %d folds\n", result.mean_auc,
                  result.sd_auc, static_cast<int>(result.folds.size()));
    std::cout << line;
    for (const auto& f : result.folds) {
        std::snprintf(line, sizeof(line), "  fold %d: test_auc %.4f theta %s\n", f.fold,
                      f.test_auc, theta_json(f.best_theta).dump().c_str());
        std::cout << line;
    }
    return 0;
}

int run_cct(const CommonFlags& common, const CohortFlags& cohort, const ConnectivityFlags& conn,
            const PipelineFlags& pipe, const SourceFlags& source, const std::string& out_path,
            const std::string& ledger) {
    const std::vector<DyadRecording> recordings = source.load(common, cohort);
    const Estimator est = conn.resolve_estimator(common.config);
    const Band band = conn.resolve_band(common.config);
    const GraphDataset data =
        build_graph_dataset(recordings, est, band, conn.resolve_opts(common.config), "",
                            conn.resolve_reduction(common.config));
    const PipelineConfig pc = pipe.resolve_config(common);

    const double auc = cross_chromophore_test(data, pc);

    nlohmann::json out;
    out["cct_auc"] = auc;
    std::vector<std::string> artifacts;
    if (!out_path.empty()) {
        write_text_file(out_path, out.dump() + "\n");
        artifacts.push_back(out_path);
    }
    nlohmann::json params = base_run_params(common, conn, pipe, source, pc, band);
    params.erase("chromophore");  // trains on HBO, scores HBR by definition
    nlohmann::json metrics;
    metrics["cct_auc"] = auc;
    append_run(ledger, "cct", params, metrics, artifacts);

    char line[64];
    std::snprintf(line, sizeof(line), "cct_auc %.4f\n", auc);
    std::cout << line;
    return 0;
}

int run_permtest(const CommonFlags& common, const CohortFlags& cohort,
                 const ConnectivityFlags& conn, const PipelineFlags& pipe,
                 const SourceFlags& source, int n_permutations, const std::string& out_path,
                 const std::string& ledger) {
    const std::vector<DyadRecording> recordings = source.load(common, cohort);
    const Estimator est = conn.resolve_estimator(common.config);
    const Band band = conn.resolve_band(common.config);
    const std::string chromophore = resolved(pipe.o_chromophore, pipe.chromophore, common.config,
                                             "chromophore", std::string("HBO"));
    const GraphDataset data =
        build_graph_dataset(recordings, est, band, conn.resolve_opts(common.config), chromophore,
                            conn.resolve_reduction(common.config));

    const std::uint64_t master = common.master_seed();
    const int k_out = resolved(pipe.o_k_out, pipe.k_out, common.config, "k_out", 5);
    const int k_inner = resolved(pipe.o_k_inner, pipe.k_inner, common.config, "k_inner", 3);
    const FoldPlan plan =
        plan_nested_cv(dataset_dyads(data), k_out, k_inner, mix_seed(master, kSeedPlan));
    const PipelineConfig pc = pipe.resolve_config(common);

    const RandomizedLabelResult r =
        randomized_label_test(data, plan, pc, n_permutations, mix_seed(master, kSeedPerm));

    nlohmann::json out;
    out["true"] = cv_result_to_json(r.true_result);
    nlohmann::json permuted = nlohmann::json::array();
    for (const auto& p : r.permuted) permuted.push_back(cv_result_to_json(p));
    out["permuted"] = std::move(permuted);
    out["posterior"] = posterior_to_json(r.posterior);

    std::vector<std::string> artifacts;
    if (!out_path.empty()) {
        write_text_file(out_path, out.dump() + "\n");
        artifacts.push_back(out_path);
    }
    nlohmann::json params = base_run_params(common, conn, pipe, source, pc, band);
    params["k_out"] = k_out;
    params["k_inner"] = k_inner;
    params["n_permutations"] = n_permutations;
    nlohmann::json metrics;
    metrics["true_mean_auc"] = r.true_result.mean_auc;
    metrics["p_greater_zero"] = r.posterior.p_greater_zero;
    metrics["hdi_lo"] = r.posterior.hdi_lo;
    metrics["hdi_hi"] = r.posterior.hdi_hi;
    append_run(ledger, "permtest", params, metrics, artifacts);

    char line[160];
    std::snprintf(line, sizeof(line),
                  "true mean_auc %.4f; posterior p(diff>0) %.4f, hdi95 [%.4f, %.4f]\n",
                  r.true_result.mean_auc, r.posterior.p_greater_zero, r.posterior.hdi_lo,
                  r.posterior.hdi_hi);
    std::cout << line;
    return 0;
}

int run_compare(const std::string& a_path, const std::string& b_path,
                const std::string& out_path) {
    const CVResult a = cv_result_from_json(load_json_file(a_path));
    const CVResult b = cv_result_from_json(load_json_file(b_path));
    const PosteriorSummary p = compare_pipelines(a, b);
    const nlohmann::json j = posterior_to_json(p);
    if (!out_path.empty()) write_text_file(out_path, j.dump() + "\n");
    std::cout << j.dump() << "\n";
    return 0;
}

int run_report(const std::string& ledger, const std::string& format,
               const std::string& out_path) {
    if (format != "text" && format != "csv")
        throw validation_error("--format must be text or csv");
    const std::vector<RunRecord> records = read_ledger(ledger);

    struct Cell {
        bool has = false;
        double mean = 0.0;
        double sd = 0.0;
    };
    const auto lowered = [](std::string s) {
        for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return s;
    };
    std::map<std::string, Cell> cells;  // key: encoder|estimator|classifier, lowercase
    const RunRecord* latest_nmf_artifact = nullptr;
    for (const auto& r : records) {
        const std::string command = r.params.value("command", "");
        if (command == "cv") {
            const std::string key = lowered(r.params.value("encoder", "")) + "|" +
                                    lowered(r.params.value("estimator", "")) + "|" +
                                    lowered(r.params.value("classifier", ""));
            Cell& cell = cells[key];
            cell.has = true;
            cell.mean = r.metrics.value("mean_auc", 0.0);
            cell.sd = r.metrics.value("sd_auc", 0.0);
        }
        if (command == "embed" && r.params.value("encoder", "") == "nmf_ibne" &&
            !r.artifact_paths.empty())
            latest_nmf_artifact = &r;  // later records overwrite earlier ones
    }

    std::string out;
    char buf[160];
    if (format == "csv") {
        out += "encoder";
        for (const char* est : kEstimatorOrder)
            for (const char* clf : kClassifierOrder) {
                out += ",";
                out += est;
                out += "_";
                out += clf;
            }
        out += "\n";
    } else {
        std::snprintf(buf, sizeof(buf), "%-12s", "encoder");
        out += buf;
        for (const char* est : kEstimatorOrder)
            for (const char* clf : kClassifierOrder) {
                const char* clf_short = std::string(clf) == "ridge_logreg" ? "ridge" : "svm";
                std::snprintf(buf, sizeof(buf), " %*s", 13,
                              (std::string(est) + "/" + clf_short).c_str());
                out += buf;
            }
        out += "\n";
    }
    for (const char* enc : kEncoderOrder) {
        if (format == "csv") {
            out += enc;
        } else {
            std::snprintf(buf, sizeof(buf), "%-12s", enc);
            out += buf;
        }
        for (const char* est : kEstimatorOrder) {
            for (const char* clf : kClassifierOrder) {
                const auto it = cells.find(std::string(enc) + "|" + est + "|" + clf);
                std::string value = "--";
                if (it != cells.end() && it->second.has) {
                    std::snprintf(buf, sizeof(buf), "%.2f\xc2\xb1%.2f", it->second.mean,
                                  it->second.sd);
                    value = buf;
                }
                if (format == "csv") {
                    out += "," + value;
                } else {
                    // The plus-minus sign is two bytes; pad by display width.
                    const std::size_t display =
                        value.size() - (value.find("\xc2\xb1") != std::string::npos ? 1 : 0);
                    out += " " + std::string(display < 13 ? 13 - display : 1, ' ') + value;
                }
            }
        }
        out += "\n";
    }

    if (format == "text") {
        out += "\nNMF basis region contributions\n";
        if (latest_nmf_artifact == nullptr) {
            out += "  (no nmf_ibne embed runs in the ledger)\n";
        } else {
            std::string state_path;
            for (const auto& p : latest_nmf_artifact->artifact_paths)
                if (p.size() >= 13 && p.substr(p.size() - 13) == "_encoder.json") state_path = p;
            if (state_path.empty()) {
                out += "  (nmf_ibne run has no encoder artifact)\n";
            } else {
                const EncoderState state = encoder_from_json(load_json_file(state_path));
                const Eigen::MatrixXd& w = state.nmf_basis;
                const double total = w.sum();
                for (Eigen::Index k = 0; k < w.rows(); ++k) {
                    const double share = total > 0.0 ? w.row(k).sum() / total : 0.0;
                    Eigen::Index top = 0;
                    w.row(k).maxCoeff(&top);
                    const bool first = top < state.n1;
                    std::snprintf(buf, sizeof(buf),
                                  "  component %d: mass share %.1f%%, strongest node p%d ch%d\n",
                                  static_cast<int>(k), 100.0 * share, first ? 1 : 2,
                                  static_cast<int>(first ? top : top - state.n1));
                    out += buf;
                }
            }
        }
    }

    if (!out_path.empty())
        write_text_file(out_path, out);
    else
        std::cout << out;
    if (!out_path.empty()) std::cout << "wrote report to " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"interbrain synchrony network pipeline"};
    app.require_subcommand(1);

    // simulate
    CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic dyad cohort");
    CommonFlags sim_common;
    CohortFlags sim_cohort;
    std::string sim_out;
    add_common(sim, sim_common);
    add_cohort(sim, sim_cohort);
    sim->add_option("--out", sim_out, "output directory")->required();

    // connect
    CLI::App* con = app.add_subcommand("connect", "estimate interbrain connectivity matrices");
    CommonFlags con_common;
    ConnectivityFlags con_conn;
    std::string con_manifest;
    std::string con_out;
    add_common(con, con_common);
    add_connectivity(con, con_conn, false);
    con->add_option("--manifest", con_manifest, "cohort manifest JSON")->required();
    con->add_option("--out", con_out, "output directory")->required();

    // graph
    CLI::App* gra = app.add_subcommand("graph", "build interbrain graphs from connectivity");
    CommonFlags gra_common;
    ConnectivityFlags gra_conn;
    std::string gra_in;
    std::string gra_out;
    add_common(gra, gra_common);
    gra_conn.o_top = gra->add_option("--top-percent", gra_conn.top_percent,
                                     "keep only this fraction of strongest edges (0,1]");
    gra->add_option("--in", gra_in, "directory of connectivity JSON files")->required();
    gra->add_option("--out", gra_out, "output directory")->required();

    // embed
    CLI::App* emb = app.add_subcommand("embed", "fit an encoder and embed graphs");
    CommonFlags emb_common;
    PipelineFlags emb_pipe;
    std::string emb_graphs;
    std::string emb_out;
    std::string emb_ledger = "runs.jsonl";
    add_common(emb, emb_common);
    add_pipeline(emb, emb_pipe, false);
    emb->add_option("--graphs", emb_graphs, "directory of graph JSON files")->required();
    emb->add_option("--out", emb_out, "output path prefix")->required();
    emb->add_option("--ledger", emb_ledger, "run ledger path");

    // cv
    CLI::App* cv = app.add_subcommand("cv", "nested cross-validated classification");
    CommonFlags cv_common;
    CohortFlags cv_cohort;
    ConnectivityFlags cv_conn;
    PipelineFlags cv_pipe;
    SourceFlags cv_source;
    std::string cv_out;
    std::string cv_ledger = "runs.jsonl";
    add_common(cv, cv_common);
    add_cohort(cv, cv_cohort);
    add_connectivity(cv, cv_conn, true);
    add_pipeline(cv, cv_pipe, true);
    add_source(cv, cv_source);
    cv->add_option("--out", cv_out, "write the fold results JSON here");
    cv->add_option("--ledger", cv_ledger, "run ledger path");

    // cct
    CLI::App* cct = app.add_subcommand("cct", "cross-chromophore transfer test");
    CommonFlags cct_common;
    CohortFlags cct_cohort;
    ConnectivityFlags cct_conn;
    PipelineFlags cct_pipe;
    SourceFlags cct_source;
    std::string cct_out;
    std::string cct_ledger = "runs.jsonl";
    add_common(cct, cct_common);
    add_cohort(cct, cct_cohort);
    add_connectivity(cct, cct_conn, true);
    add_pipeline(cct, cct_pipe, false);
    add_source(cct, cct_source);
    cct->add_option("--out", cct_out, "write the test result JSON here");
    cct->add_option("--ledger", cct_ledger, "run ledger path");

    // permtest
    CLI::App* perm = app.add_subcommand("permtest", "randomized-label robustness test");
    CommonFlags perm_common;
    CohortFlags perm_cohort;
    ConnectivityFlags perm_conn;
    PipelineFlags perm_pipe;
    SourceFlags perm_source;
    int perm_n = 10;
    std::string perm_out;
    std::string perm_ledger = "runs.jsonl";
    add_common(perm, perm_common);
    add_cohort(perm, perm_cohort);
    add_connectivity(perm, perm_conn, true);
    add_pipeline(perm, perm_pipe, true);
    add_source(perm, perm_source);
    perm->add_option("--permutations", perm_n, "number of label permutations");
    perm->add_option("--out", perm_out, "write the full test JSON here");
    perm->add_option("--ledger", perm_ledger, "run ledger path");

    // compare
    CLI::App* cmp = app.add_subcommand("compare", "Bayesian comparison of two cv results");
    std::string cmp_a;
    std::string cmp_b;
    std::string cmp_out;
    cmp->add_option("--a", cmp_a, "first cv result JSON")->required();
    cmp->add_option("--b", cmp_b, "second cv result JSON")->required();
    cmp->add_option("--out", cmp_out, "write the posterior JSON here");

    // report
    CLI::App* rep = app.add_subcommand("report", "summarize the run ledger");
    std::string rep_ledger = "runs.jsonl";
    std::string rep_format = "text";
    std::string rep_out;
    rep->add_option("--ledger", rep_ledger, "run ledger path");
    rep->add_option("--format", rep_format, "text or csv");
    rep->add_option("--out", rep_out, "write the report here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*sim) {
            sim_common.load_config();
            return run_simulate(sim_common, sim_cohort, sim_out);
        }
        if (*con) {
            con_common.load_config();
            return run_connect(con_common, con_conn, con_manifest, con_out);
        }
        if (*gra) {
            gra_common.load_config();
            return run_graph(gra_common, gra_conn, gra_in, gra_out);
        }
        if (*emb) {
            emb_common.load_config();
            return run_embed(emb_common, emb_pipe, emb_graphs, emb_out, emb_ledger);
        }
        if (*cv) {
            cv_common.load_config();
            return run_cv(cv_common, cv_cohort, cv_conn, cv_pipe, cv_source, cv_out, cv_ledger);
        }
        if (*cct) {
            cct_common.load_config();
            return run_cct(cct_common, cct_cohort, cct_conn, cct_pipe, cct_source, cct_out,
                           cct_ledger);
        }
        if (*perm) {
            perm_common.load_config();
            return run_permtest(perm_common, perm_cohort, perm_conn, perm_pipe, perm_source,
                                perm_n, perm_out, perm_ledger);
        }
        if (*cmp) return run_compare(cmp_a, cmp_b, cmp_out);
        if (*rep) return run_report(rep_ledger, rep_format, rep_out);
        throw validation_error("no subcommand selected");
    } catch (const io_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 2;
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
