#include "ibnet/signals.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ibnet/errors.hpp"
#include "ibnet/rng.hpp"

namespace ibnet {

namespace {

// Oscillator model constants. The slow band mimics task-driven hemodynamic
// fluctuations; the polarity dwell sets how long the nonlinear coupling keeps
// one sign before alternating (balanced alternation keeps the first circular
// moment of the phase difference near zero while leaving the histogram
// strongly bimodal, which separates the entropy index from PLV).
constexpr double kFreqLo1 = 0.06, kFreqHi1 = 0.10; // Hz, first component
constexpr double kFreqLo2 = 0.12, kFreqHi2 = 0.18; // Hz, second component
constexpr double kAmp2 = 0.7;                      // second component amplitude
constexpr double kPhaseDriftRate = 0.25;           // rad per sqrt(second)
constexpr double kBaseNoise = 0.35;                // broadband floor inside the oscillator
constexpr double kFlipDwellS = 80.0;               // polarity block length, seconds
constexpr double kChannelSourceMix = 0.85;         // channel share of the dyad-level source
constexpr double kHbrScale = -0.4;                 // HBR = kHbrScale * HBO + noise

void standardize(Eigen::VectorXd& x) {
    x.array() -= x.mean();
    const double sd = std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
    if (sd > 1e-12) x /= sd;
}

Eigen::VectorXd base_oscillator(int n, double fs, Rng& rng) {
    const double f1 = rng.uniform(kFreqLo1, kFreqHi1);
    const double f2 = rng.uniform(kFreqLo2, kFreqHi2);
    double phi1 = rng.uniform(0.0, 2.0 * M_PI);
    double phi2 = rng.uniform(0.0, 2.0 * M_PI);
    const double drift = kPhaseDriftRate / std::sqrt(fs);
    const double dphi1 = 2.0 * M_PI * f1 / fs;
    const double dphi2 = 2.0 * M_PI * f2 / fs;
    Eigen::VectorXd x(n);
    for (int t = 0; t < n; ++t) {
        x(t) = std::sin(phi1) + kAmp2 * std::sin(phi2) + kBaseNoise * rng.gaussian();
        phi1 += dphi1 + drift * rng.gaussian();
        phi2 += dphi2 + drift * rng.gaussian();
    }
    standardize(x);
    return x;
}

Eigen::VectorXd circular_delay(const Eigen::VectorXd& x, int d) {
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd out(n);
    d = ((d % n) + n) % n;
    for (int t = 0; t < n; ++t) out(t) = x((t - d + n) % n);
    return out;
}

void validate_profile(const CouplingProfile& p) {
    const double vals[] = {p.concurrent_strength, p.lagged_strength, p.lag_s, p.nonlinearity};
    for (double v : vals)
        if (!std::isfinite(v)) throw validation_error("coupling profile: non-finite value");
    if (p.concurrent_strength < 0.0 || p.concurrent_strength > 1.0 ||
        p.lagged_strength < 0.0 || p.lagged_strength > 1.0 || p.nonlinearity < 0.0 ||
        p.nonlinearity > 1.0)
        throw validation_error("coupling profile: strengths must lie in [0,1]");
    if (p.lag_s < 0.0) throw validation_error("coupling profile: lag_s must be >= 0");
}

std::pair<Eigen::VectorXd, Eigen::VectorXd>
make_coupled_pair(const CouplingProfile& profile, int n, double fs, Rng& rng, double noise_sd) {
    const Eigen::VectorXd base1 = base_oscillator(n, fs, rng);
    const Eigen::VectorXd base2 = base_oscillator(n, fs, rng);

    // Lag is rounded to whole samples; the shift is circular so the series
    // keeps its length and stationarity.
    const int lag_samples = static_cast<int>(std::llround(profile.lag_s * fs));
    const Eigen::VectorXd delayed = circular_delay(base1, lag_samples);

    Eigen::VectorXd nonlinear = delayed.array() * delayed.array().abs();
    standardize(nonlinear);

    // Strictly alternating polarity blocks with a random grid offset.
    const int dwell = std::max(1, static_cast<int>(std::llround(kFlipDwellS * fs)));
    const int offset = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(2 * dwell)));
    const double first_sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
    Eigen::VectorXd flipped(n);
    for (int t = 0; t < n; ++t) {
        const int block = (t + offset) / dwell;
        flipped(t) = (block % 2 == 0 ? first_sign : -first_sign) * nonlinear(t);
    }

    const double nu = profile.nonlinearity;
    Eigen::VectorXd lag_component = (1.0 - nu) * delayed + nu * flipped;
    standardize(lag_component);

    const double c = profile.concurrent_strength;
    const double l = profile.lagged_strength;
    Eigen::VectorXd p2 = (1.0 - c) * (1.0 - l) * base2 + c * base1 + l * lag_component;
    if (noise_sd > 0.0)
        for (int t = 0; t < n; ++t) p2(t) += noise_sd * rng.gaussian();
    standardize(p2);
    return {base1, p2};
}

struct DyadPlan {
    std::string dyad_id;
    int label = 0;
    double trait = 1.0; // dyad-level multiplier on coupling strengths
};

CouplingProfile scaled_profile(const CouplingProfile& p, double factor) {
    CouplingProfile out = p;
    out.concurrent_strength = std::clamp(p.concurrent_strength * factor, 0.0, 1.0);
    out.lagged_strength = std::clamp(p.lagged_strength * factor, 0.0, 1.0);
    return out;
}

} // namespace

std::pair<Eigen::VectorXd, Eigen::VectorXd>
coupled_oscillator_pair(const CouplingProfile& profile, int n_samples, double fs,
                        std::uint64_t seed, double noise_sd) {
    if (n_samples < 256)
        throw validation_error("coupled_oscillator_pair: n_samples must be >= 256");
    if (!(fs > 0.0)) throw validation_error("coupled_oscillator_pair: fs must be positive");
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd))
        throw validation_error("coupled_oscillator_pair: noise_sd must be finite and >= 0");
    validate_profile(profile);
    Rng rng(mix_seed(seed, 0xc0ab1edULL));
    return make_coupled_pair(profile, n_samples, fs, rng, noise_sd);
}

std::vector<DyadRecording> generate_dyad_cohort(const CohortConfig& config) {
    if (config.n_dyads_per_class < 1)
        throw validation_error("generate_dyad_cohort: need at least one dyad per class");
    if (config.conditions_per_dyad < 1)
        throw validation_error("generate_dyad_cohort: need at least one condition per dyad");
    if (config.n_channels < 1)
        throw validation_error("generate_dyad_cohort: need at least one channel");
    if (!(config.fs > 0.0)) throw validation_error("generate_dyad_cohort: fs must be positive");
    const int n = static_cast<int>(std::llround(config.duration_s * config.fs));
    if (n < 256)
        throw validation_error("generate_dyad_cohort: duration_s * fs must be at least 256 samples");
    if (config.dyad_trait_spread < 0.0 || config.dyad_trait_spread >= 1.0)
        throw validation_error("generate_dyad_cohort: dyad_trait_spread must lie in [0,1)");
    validate_profile(config.profile_class0);
    validate_profile(config.profile_class1);

    const std::uint64_t master = config.seed;
    const int n_ch = config.n_channels;

    std::vector<DyadPlan> dyads;
    for (int cls = 0; cls <= 1; ++cls) {
        for (int d = 0; d < config.n_dyads_per_class; ++d) {
            const int g = cls * config.n_dyads_per_class + d;
            DyadPlan plan;
            char buf[32];
            std::snprintf(buf, sizeof buf, "dyad_c%d_%03d", cls, d);
            plan.dyad_id = buf;
            plan.label = cls;
            Rng trait_rng(mix_seed(master, 1, static_cast<std::uint64_t>(g)));
            plan.trait = trait_rng.uniform(1.0 - config.dyad_trait_spread,
                                           1.0 + config.dyad_trait_spread);
            dyads.push_back(plan);
        }
    }

    std::vector<DyadRecording> out;
    out.reserve(dyads.size() * static_cast<std::size_t>(config.conditions_per_dyad) * 2);
    for (std::size_t g = 0; g < dyads.size(); ++g) {
        const auto& plan = dyads[g];
        const CouplingProfile profile = scaled_profile(
            plan.label == 1 ? config.profile_class1 : config.profile_class0, plan.trait);

        // Channel mixing weights are a stable per-channel property of the dyad.
        Rng mix_rng(mix_seed(master, 2, g));
        Eigen::VectorXd alpha1(n_ch), alpha2(n_ch);
        for (int ch = 0; ch < n_ch; ++ch) {
            alpha1(ch) = std::clamp(kChannelSourceMix * mix_rng.uniform(0.8, 1.2), 0.0, 1.0);
            alpha2(ch) = std::clamp(kChannelSourceMix * mix_rng.uniform(0.8, 1.2), 0.0, 1.0);
        }

        for (int k = 0; k < config.conditions_per_dyad; ++k) {
            Rng cond_rng(mix_seed(master, 3, g, static_cast<std::uint64_t>(k)));
            const auto [s1, s2] = make_coupled_pair(profile, n, config.fs, cond_rng, 0.0);

            DyadRecording hbo;
            hbo.meta.dyad_id = plan.dyad_id;
            hbo.meta.label = plan.label;
            char cbuf[16];
            std::snprintf(cbuf, sizeof cbuf, "cond_%02d", k);
            hbo.meta.condition_id = cbuf;
            hbo.meta.chromophore = "HBO";
            hbo.fs = config.fs;
            hbo.signals_p1.resize(n, n_ch);
            hbo.signals_p2.resize(n, n_ch);
            for (int ch = 0; ch < n_ch; ++ch) {
                Rng ch_rng(mix_seed(master, 4, g,
                                    static_cast<std::uint64_t>(k) * 1024 +
                                        static_cast<std::uint64_t>(ch)));
                // Channel-private parts are spectrally white so that most of
                // their power lands outside the oscillatory band and the
                // source phase structure survives the mixture.
                Eigen::VectorXd w1(n), w2(n);
                for (int t = 0; t < n; ++t) w1(t) = ch_rng.gaussian();
                for (int t = 0; t < n; ++t) w2(t) = ch_rng.gaussian();
                standardize(w1);
                standardize(w2);
                Eigen::VectorXd p1 =
                    alpha1(ch) * s1 + std::sqrt(1.0 - alpha1(ch) * alpha1(ch)) * w1;
                Eigen::VectorXd p2 =
                    alpha2(ch) * s2 + std::sqrt(1.0 - alpha2(ch) * alpha2(ch)) * w2;
                if (config.noise_sd > 0.0)
                    for (int t = 0; t < n; ++t) {
                        p1(t) += config.noise_sd * ch_rng.gaussian();
                        p2(t) += config.noise_sd * ch_rng.gaussian();
                    }
                standardize(p1);
                standardize(p2);
                hbo.signals_p1.col(ch) = p1;
                hbo.signals_p2.col(ch) = p2;
            }

            DyadRecording hbr = hbo;
            hbr.meta.chromophore = "HBR";
            for (int ch = 0; ch < n_ch; ++ch) {
                Rng hbr_rng(mix_seed(master, 5, g,
                                     static_cast<std::uint64_t>(k) * 1024 +
                                         static_cast<std::uint64_t>(ch)));
                for (int t = 0; t < n; ++t) {
                    hbr.signals_p1(t, ch) = kHbrScale * hbo.signals_p1(t, ch) +
                                            config.noise_sd * hbr_rng.gaussian();
                    hbr.signals_p2(t, ch) = kHbrScale * hbo.signals_p2(t, ch) +
                                            config.noise_sd * hbr_rng.gaussian();
                }
            }

            out.push_back(std::move(hbo));
            out.push_back(std::move(hbr));
        }
    }
    return out;
}

namespace {

std::string csv_name(const RecordMeta& meta, int participant) {
    return meta.dyad_id + "_" + meta.condition_id + "_" + meta.chromophore + "_p" +
           std::to_string(participant) + ".csv";
}

void write_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m, double fs) {
    std::ofstream f(path);
    if (!f) throw io_error("write_cohort: cannot open " + path.string());
    f << "t";
    for (int c = 0; c < m.cols(); ++c) f << ",ch" << (c + 1);
    f << "\n";
    char buf[64];
    for (int r = 0; r < m.rows(); ++r) {
        std::snprintf(buf, sizeof buf, "%.12g", static_cast<double>(r) / fs);
        f << buf;
        for (int c = 0; c < m.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.12g", m(r, c));
            f << ',' << buf;
        }
        f << "\n";
    }
    if (!f) throw io_error("write_cohort: write failed for " + path.string());
}

Eigen::MatrixXd read_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw io_error("load_recordings: cannot open " + path.string());
    std::string line;
    if (!std::getline(f, line))
        throw validation_error("load_recordings: empty file " + path.string());
    if (line.rfind("t,", 0) != 0 && line != "t")
        throw validation_error("load_recordings: missing 't,ch..' header in " + path.string());
    int n_cols = 0;
    for (char c : line)
        if (c == ',') ++n_cols;

    std::vector<std::vector<double>> rows;
    int line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row;
        row.reserve(static_cast<std::size_t>(n_cols));
        std::size_t pos = 0;
        int col = 0;
        while (pos <= line.size()) {
            std::size_t next = line.find(',', pos);
            if (next == std::string::npos) next = line.size();
            const std::string cell = line.substr(pos, next - pos);
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0')
                throw validation_error("load_recordings: non-numeric cell at " + path.string() +
                                       " line " + std::to_string(line_no) + " column " +
                                       std::to_string(col + 1));
            if (!std::isfinite(v))
                throw validation_error("load_recordings: non-finite cell at " + path.string() +
                                       " line " + std::to_string(line_no) + " column " +
                                       std::to_string(col + 1));
            if (col > 0) row.push_back(v); // drop the time column
            ++col;
            pos = next + 1;
            if (next == line.size()) break;
        }
        if (static_cast<int>(row.size()) != n_cols)
            throw validation_error("load_recordings: wrong cell count at " + path.string() +
                                   " line " + std::to_string(line_no));
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd m(static_cast<int>(rows.size()), n_cols);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (int c = 0; c < n_cols; ++c) m(static_cast<int>(r), c) = rows[r][static_cast<std::size_t>(c)];
    return m;
}

} // namespace

std::string write_cohort(const std::vector<DyadRecording>& recordings, const std::string& dir,
                         const std::string& manifest_name) {
    std::filesystem::path root(dir);
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    if (ec) throw io_error("write_cohort: cannot create directory " + dir);

    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& rec : recordings) {
        const std::string p1 = csv_name(rec.meta, 1);
        const std::string p2 = csv_name(rec.meta, 2);
        write_csv(root / p1, rec.signals_p1, rec.fs);
        write_csv(root / p2, rec.signals_p2, rec.fs);
        manifest.push_back({{"dyad_id", rec.meta.dyad_id},
                            {"label", rec.meta.label},
                            {"condition_id", rec.meta.condition_id},
                            {"chromophore", rec.meta.chromophore},
                            {"fs", rec.fs},
                            {"p1_csv", p1},
                            {"p2_csv", p2}});
    }
    const std::filesystem::path mpath = root / manifest_name;
    std::ofstream f(mpath);
    if (!f) throw io_error("write_cohort: cannot open " + mpath.string());
    f << manifest.dump(2) << "\n";
    if (!f) throw io_error("write_cohort: write failed for " + mpath.string());
    return mpath.string();
}

std::vector<DyadRecording> load_recordings(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw io_error("load_recordings: cannot open " + manifest_path);
    nlohmann::json manifest;
    try {
        f >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("load_recordings: malformed manifest: ") + e.what());
    }
    if (!manifest.is_array())
        throw validation_error("load_recordings: manifest must be a JSON array");

    const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
    std::vector<DyadRecording> out;
    for (const auto& entry : manifest) {
        DyadRecording rec;
        std::string p1_csv, p2_csv;
        try {
            rec.meta.dyad_id = entry.at("dyad_id").get<std::string>();
            rec.meta.label = entry.at("label").get<int>();
            rec.meta.condition_id = entry.at("condition_id").get<std::string>();
            rec.meta.chromophore = entry.at("chromophore").get<std::string>();
            rec.fs = entry.at("fs").get<double>();
            p1_csv = entry.at("p1_csv").get<std::string>();
            p2_csv = entry.at("p2_csv").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw validation_error(std::string("load_recordings: malformed manifest entry: ") +
                                   e.what());
        }
        if (rec.meta.label != 0 && rec.meta.label != 1)
            throw validation_error("load_recordings: label must be 0 or 1 for dyad " +
                                   rec.meta.dyad_id);
        if (!(rec.fs > 0.0))
            throw validation_error("load_recordings: fs must be positive for dyad " +
                                   rec.meta.dyad_id);
        auto resolve = [&base](const std::string& p) {
            std::filesystem::path path(p);
            return path.is_absolute() ? path : base / path;
        };
        rec.signals_p1 = read_csv(resolve(p1_csv));
        rec.signals_p2 = read_csv(resolve(p2_csv));
        if (rec.signals_p1.rows() != rec.signals_p2.rows() ||
            rec.signals_p1.cols() != rec.signals_p2.cols())
            throw validation_error("load_recordings: participant shapes differ for dyad " +
                                   rec.meta.dyad_id + " condition " + rec.meta.condition_id);
        out.push_back(std::move(rec));
    }
    return out;
}

} // namespace ibnet
