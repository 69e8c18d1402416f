#include "ibnet/connectivity.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "ibnet/errors.hpp"

namespace ibnet {

std::string estimator_name(Estimator e) {
    switch (e) {
        case Estimator::WCO: return "WCO";
        case Estimator::PLV: return "PLV";
        case Estimator::ENTROPY: return "ENTROPY";
    }
    throw validation_error("estimator_name: unknown estimator");
}

Estimator estimator_from_name(const std::string& name) {
    if (name == "WCO" || name == "wco") return Estimator::WCO;
    if (name == "PLV" || name == "plv") return Estimator::PLV;
    if (name == "ENTROPY" || name == "entropy") return Estimator::ENTROPY;
    throw validation_error("estimator_from_name: unknown estimator '" + name + "'");
}

namespace {

void check_compatible(const WaveletSpectrum& wx, const WaveletSpectrum& wy) {
    if (wx.fs != wy.fs || wx.coefficients.cols() != wy.coefficients.cols() ||
        wx.scales.size() != wy.scales.size())
        throw validation_error("connectivity: spectra have mismatched shape or rate");
    for (std::size_t i = 0; i < wx.scales.size(); ++i)
        if (std::abs(wx.scales[i] - wy.scales[i]) > 1e-9 * wx.scales[i])
            throw validation_error("connectivity: spectra have mismatched scales");
}

std::vector<int> band_scale_indices(const WaveletSpectrum& w, Band band) {
    if (!(band.lo_s < band.hi_s))
        throw validation_error("connectivity: band bounds must satisfy lo < hi");
    std::vector<int> idx;
    for (std::size_t i = 0; i < w.periods.size(); ++i)
        if (w.periods[i] >= band.lo_s && w.periods[i] <= band.hi_s)
            idx.push_back(static_cast<int>(i));
    if (idx.empty()) throw validation_error("connectivity: band contains no scales");
    return idx;
}

// Edge-normalized Gaussian time smoothing (sigma = scale, in seconds) with
// per-scale kernels; convolutions run in the frequency domain.
class TimeSmoother {
public:
    TimeSmoother(const std::vector<double>& scales, double fs, int n) : n_(n) {
        kernels_.resize(scales.size());
        for (std::size_t i = 0; i < scales.size(); ++i) {
            const double sigma = scales[i] * fs; // samples
            const int half = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
            auto& k = kernels_[i];
            k.half = half;
            k.weights.resize(static_cast<std::size_t>(2 * half + 1));
            double sum = 0.0;
            for (int j = -half; j <= half; ++j) {
                const double v = std::exp(-0.5 * (static_cast<double>(j) / sigma) *
                                          (static_cast<double>(j) / sigma));
                k.weights[static_cast<std::size_t>(j + half)] = v;
                sum += v;
            }
            for (double& v : k.weights) v /= sum;
            k.prefix.resize(k.weights.size() + 1, 0.0);
            for (std::size_t j = 0; j < k.weights.size(); ++j)
                k.prefix[j + 1] = k.prefix[j] + k.weights[j];

            int len = 1;
            while (len < n + 2 * half + 1) len *= 2;
            k.fft_len = len;
            std::vector<std::complex<double>> kpad(static_cast<std::size_t>(len), {0.0, 0.0});
            for (std::size_t j = 0; j < k.weights.size(); ++j) kpad[j] = k.weights[j];
            Eigen::FFT<double> fft;
            fft.fwd(k.khat, kpad);
        }
    }

    Eigen::VectorXcd smooth(std::size_t scale_idx, const Eigen::VectorXcd& row) const {
        const auto& k = kernels_[scale_idx];
        std::vector<std::complex<double>> pad(static_cast<std::size_t>(k.fft_len), {0.0, 0.0});
        for (int t = 0; t < n_; ++t) pad[static_cast<std::size_t>(t)] = row(t);
        Eigen::FFT<double> fft;
        std::vector<std::complex<double>> fhat;
        fft.fwd(fhat, pad);
        for (int j = 0; j < k.fft_len; ++j)
            fhat[static_cast<std::size_t>(j)] *= k.khat[static_cast<std::size_t>(j)];
        std::vector<std::complex<double>> conv;
        fft.inv(conv, fhat);

        Eigen::VectorXcd out(n_);
        for (int t = 0; t < n_; ++t) {
            // Kernel mass actually covering sample t; renormalizing keeps the
            // smoother unbiased at the series edges.
            const int lo = std::max(0, k.half - t);
            const int hi = std::min(2 * k.half + 1, n_ - t + k.half);
            const double mass = k.prefix[static_cast<std::size_t>(hi)] -
                                k.prefix[static_cast<std::size_t>(lo)];
            out(t) = conv[static_cast<std::size_t>(t + k.half)] / mass;
        }
        return out;
    }

    Eigen::VectorXd smooth(std::size_t scale_idx, const Eigen::VectorXd& row) const {
        Eigen::VectorXcd c = smooth(scale_idx, row.cast<std::complex<double>>().eval());
        return c.real();
    }

private:
    struct Kernel {
        int half = 0;
        int fft_len = 0;
        std::vector<double> weights;
        std::vector<double> prefix;
        std::vector<std::complex<double>> khat;
    };
    int n_;
    std::vector<Kernel> kernels_;
};

// Boxcar in the scale direction: rows j with |s_j - s_i| <= 0.3 * s_i.
template <typename Mat>
Mat scale_boxcar(const Mat& m, const std::vector<double>& scales) {
    Mat out(m.rows(), m.cols());
    for (int i = 0; i < m.rows(); ++i) {
        const double s = scales[static_cast<std::size_t>(i)];
        int lo = i, hi = i;
        while (lo > 0 && scales[static_cast<std::size_t>(lo - 1)] >= 0.7 * s) --lo;
        while (hi + 1 < m.rows() && scales[static_cast<std::size_t>(hi + 1)] <= 1.3 * s) ++hi;
        out.row(i) = m.middleRows(lo, hi - lo + 1).colwise().mean();
    }
    return out;
}

// Time-then-scale smoothed |W|^2 / s.
Eigen::MatrixXd smoothed_auto(const WaveletSpectrum& w, const TimeSmoother& sm) {
    const int n_scales = static_cast<int>(w.scales.size());
    Eigen::MatrixXd a(n_scales, w.coefficients.cols());
    for (int i = 0; i < n_scales; ++i) {
        Eigen::VectorXd row =
            w.coefficients.row(i).cwiseAbs2().transpose() / w.scales[static_cast<std::size_t>(i)];
        a.row(i) = sm.smooth(static_cast<std::size_t>(i), row).transpose();
    }
    return scale_boxcar(a, w.scales);
}

double wco_from_smoothed(const WaveletSpectrum& wx, const WaveletSpectrum& wy,
                         const Eigen::MatrixXd& sax, const Eigen::MatrixXd& say,
                         const TimeSmoother& sm, Band band) {
    const int n = static_cast<int>(wx.coefficients.cols());
    const int n_scales = static_cast<int>(wx.scales.size());
    Eigen::MatrixXcd cross(n_scales, n);
    for (int i = 0; i < n_scales; ++i) {
        Eigen::VectorXcd row = (wx.coefficients.row(i).array() *
                                wy.coefficients.row(i).array().conjugate())
                                   .transpose() /
                               wx.scales[static_cast<std::size_t>(i)];
        cross.row(i) = sm.smooth(static_cast<std::size_t>(i), row).transpose();
    }
    Eigen::MatrixXcd sc = scale_boxcar(cross, wx.scales);

    double sum = 0.0;
    std::size_t count = 0;
    for (int i : band_scale_indices(wx, band)) {
        for (int t = 0; t < n; ++t) {
            if (!outside_coi(wx, i, t)) continue;
            const double denom = sax(i, t) * say(i, t);
            if (!(denom > 0.0)) continue;
            sum += std::norm(sc(i, t)) / denom;
            ++count;
        }
    }
    if (count == 0)
        throw validation_error("wavelet_coherence: no band samples outside the cone of influence");
    double r2 = sum / static_cast<double>(count);
    if (r2 < 0.0) r2 = 0.0;
    if (r2 > 1.0) r2 = 1.0; // floating-point overshoot only; bounded by Cauchy-Schwarz
    return r2;
}

Eigen::MatrixXd phase_matrix(const WaveletSpectrum& w) {
    Eigen::MatrixXd p(w.coefficients.rows(), w.coefficients.cols());
    for (int i = 0; i < p.rows(); ++i)
        for (int t = 0; t < p.cols(); ++t)
            p(i, t) = std::arg(w.coefficients(i, t));
    return p;
}

double plv_from_phases(const WaveletSpectrum& wx, const Eigen::MatrixXd& px,
                       const WaveletSpectrum& wy, const Eigen::MatrixXd& py, Band band) {
    const int n = static_cast<int>(px.cols());
    double scale_sum = 0.0;
    int scale_count = 0;
    for (int i : band_scale_indices(wx, band)) {
        double re = 0.0, im = 0.0;
        std::size_t count = 0;
        for (int t = 0; t < n; ++t) {
            if (!outside_coi(wx, i, t)) continue;
            if (wx.coefficients(i, t) == std::complex<double>(0.0, 0.0) ||
                wy.coefficients(i, t) == std::complex<double>(0.0, 0.0))
                continue;
            const double d = px(i, t) - py(i, t);
            re += std::cos(d);
            im += std::sin(d);
            ++count;
        }
        if (count == 0) continue;
        scale_sum += std::hypot(re, im) / static_cast<double>(count);
        ++scale_count;
    }
    if (scale_count == 0)
        throw validation_error("phase_locking_value: no band samples outside the cone of influence");
    return scale_sum / static_cast<double>(scale_count);
}

std::vector<std::pair<double, double>>
entropy_profile_from_phases(const WaveletSpectrum& wx, const Eigen::MatrixXd& px,
                            const WaveletSpectrum& wy, const Eigen::MatrixXd& py, Band band,
                            const EntropyOpts& opts) {
    const int n = static_cast<int>(px.cols());
    const double duration = static_cast<double>(n) / wx.fs;
    if (opts.max_lag_s < 0.0)
        throw validation_error("entropy_sync: max_lag_s must be >= 0");
    if (opts.max_lag_s >= duration / 2.0)
        throw validation_error("entropy_sync: max_lag_s must be below half the duration");
    if (opts.n_lags < 1) throw validation_error("entropy_sync: n_lags must be >= 1");

    const auto band_idx = band_scale_indices(wx, band);

    std::vector<int> lags;
    lags.reserve(static_cast<std::size_t>(opts.n_lags));
    for (int j = 0; j < opts.n_lags; ++j) {
        const double tau = opts.n_lags == 1
                               ? 0.0
                               : -opts.max_lag_s + 2.0 * opts.max_lag_s * static_cast<double>(j) /
                                                       static_cast<double>(opts.n_lags - 1);
        lags.push_back(static_cast<int>(std::llround(tau * wx.fs)));
    }

    auto pool = [&](int lag) {
        std::vector<double> dphi;
        const int t0 = std::max(0, -lag);
        const int t1 = n - 1 - std::max(0, lag);
        for (int i : band_idx)
            for (int t = t0; t <= t1; ++t) {
                if (!outside_coi(wx, i, t) || !outside_coi(wy, i, t + lag)) continue;
                if (wx.coefficients(i, t) == std::complex<double>(0.0, 0.0) ||
                    wy.coefficients(i, t + lag) == std::complex<double>(0.0, 0.0))
                    continue;
                dphi.push_back(px(i, t) - py(i, t + lag));
            }
        return dphi;
    };

    // AUTO bin count is anchored at the most central grid lag so every lag is
    // scored on the same histogram resolution.
    int bins = opts.n_bins;
    if (bins <= 0) {
        int center = lags[0];
        for (int l : lags)
            if (std::abs(l) < std::abs(center)) center = l;
        const auto n_center = pool(center).size();
        if (n_center < 2)
            throw validation_error("entropy_sync: no band samples outside the cone of influence");
        bins = auto_bin_count(n_center);
    }

    std::vector<std::pair<double, double>> profile;
    for (int lag : lags) {
        const auto dphi = pool(lag);
        if (dphi.empty()) continue;
        profile.emplace_back(static_cast<double>(lag) / wx.fs, phase_entropy_index(dphi, bins));
    }
    if (profile.empty())
        throw validation_error("entropy_sync: no band samples outside the cone of influence");
    return profile;
}

double entropy_from_phases(const WaveletSpectrum& wx, const Eigen::MatrixXd& px,
                           const WaveletSpectrum& wy, const Eigen::MatrixXd& py, Band band,
                           const EntropyOpts& opts) {
    const auto profile = entropy_profile_from_phases(wx, px, wy, py, band, opts);
    if (opts.max_over_lags) {
        double best = profile.front().second;
        for (const auto& [lag, v] : profile) best = std::max(best, v);
        return best;
    }
    double sum = 0.0;
    for (const auto& [lag, v] : profile) sum += v;
    return sum / static_cast<double>(profile.size());
}

} // namespace

double wavelet_coherence(const WaveletSpectrum& wx, const WaveletSpectrum& wy, Band band) {
    check_compatible(wx, wy);
    TimeSmoother sm(wx.scales, wx.fs, static_cast<int>(wx.coefficients.cols()));
    const Eigen::MatrixXd sax = smoothed_auto(wx, sm);
    const Eigen::MatrixXd say = smoothed_auto(wy, sm);
    return wco_from_smoothed(wx, wy, sax, say, sm, band);
}

double phase_locking_value(const WaveletSpectrum& wx, const WaveletSpectrum& wy, Band band) {
    check_compatible(wx, wy);
    return plv_from_phases(wx, phase_matrix(wx), wy, phase_matrix(wy), band);
}

double entropy_sync(const WaveletSpectrum& wx, const WaveletSpectrum& wy, Band band,
                    const EntropyOpts& opts) {
    check_compatible(wx, wy);
    return entropy_from_phases(wx, phase_matrix(wx), wy, phase_matrix(wy), band, opts);
}

std::vector<std::pair<double, double>>
entropy_lag_profile(const WaveletSpectrum& wx, const WaveletSpectrum& wy, Band band,
                    const EntropyOpts& opts) {
    check_compatible(wx, wy);
    return entropy_profile_from_phases(wx, phase_matrix(wx), wy, phase_matrix(wy), band, opts);
}

double plv_from_phase_diffs(const std::vector<double>& dphi) {
    if (dphi.empty()) throw validation_error("plv_from_phase_diffs: empty input");
    double re = 0.0, im = 0.0;
    for (double d : dphi) {
        re += std::cos(d);
        im += std::sin(d);
    }
    return std::hypot(re, im) / static_cast<double>(dphi.size());
}

double phase_entropy_index(const std::vector<double>& dphi, int n_bins) {
    if (dphi.empty()) throw validation_error("phase_entropy_index: empty input");
    if (n_bins < 2) throw validation_error("phase_entropy_index: need at least 2 bins");
    std::vector<double> counts(static_cast<std::size_t>(n_bins), 0.0);
    for (double x : dphi) {
        double y = x - 2.0 * M_PI * std::floor((x + M_PI) / (2.0 * M_PI)); // [-pi, pi)
        int b = static_cast<int>(std::floor((y + M_PI) / (2.0 * M_PI) * n_bins));
        if (b < 0) b = 0;
        if (b >= n_bins) b = n_bins - 1;
        counts[static_cast<std::size_t>(b)] += 1.0;
    }
    const double total = static_cast<double>(dphi.size());
    double entropy = 0.0;
    for (double c : counts) {
        if (c <= 0.0) continue;
        const double p = c / total;
        entropy -= p * std::log(p);
    }
    const double log_b = std::log(static_cast<double>(n_bins));
    double idx = (log_b - entropy) / log_b;
    if (idx < 0.0) idx = 0.0;
    if (idx > 1.0) idx = 1.0;
    return idx;
}

int auto_bin_count(std::size_t n_samples) {
    if (n_samples < 2) throw validation_error("auto_bin_count: need at least 2 samples");
    const double b = std::exp(0.626 + 0.4 * std::log(static_cast<double>(n_samples - 1)));
    return std::max(2, static_cast<int>(std::lround(b)));
}

ConnectivityMatrix connectivity_matrix(const DyadRecording& rec, Estimator estimator, Band band,
                                       const ConnectivityOpts& opts) {
    if (rec.signals_p1.rows() != rec.signals_p2.rows())
        throw validation_error("connectivity_matrix: participant series lengths differ");
    if (rec.signals_p1.cols() < 1 || rec.signals_p2.cols() < 1)
        throw validation_error("connectivity_matrix: recording has no channels");
    if (!(rec.fs > 0.0)) throw validation_error("connectivity_matrix: fs must be positive");

    const int n1 = static_cast<int>(rec.signals_p1.cols());
    const int n2 = static_cast<int>(rec.signals_p2.cols());

    std::vector<WaveletSpectrum> wx(static_cast<std::size_t>(n1));
    std::vector<WaveletSpectrum> wy(static_cast<std::size_t>(n2));
    for (int c = 0; c < n1; ++c) wx[static_cast<std::size_t>(c)] = cwt(rec.signals_p1.col(c), rec.fs, opts.wavelet);
    for (int c = 0; c < n2; ++c) wy[static_cast<std::size_t>(c)] = cwt(rec.signals_p2.col(c), rec.fs, opts.wavelet);

    ConnectivityMatrix cm;
    cm.values.resize(n1, n2);
    cm.estimator = estimator;
    cm.band = band;
    cm.meta = rec.meta;

    if (estimator == Estimator::WCO) {
        TimeSmoother sm(wx[0].scales, rec.fs, static_cast<int>(wx[0].coefficients.cols()));
        std::vector<Eigen::MatrixXd> sax(static_cast<std::size_t>(n1)), say(static_cast<std::size_t>(n2));
        for (int c = 0; c < n1; ++c) sax[static_cast<std::size_t>(c)] = smoothed_auto(wx[static_cast<std::size_t>(c)], sm);
        for (int c = 0; c < n2; ++c) say[static_cast<std::size_t>(c)] = smoothed_auto(wy[static_cast<std::size_t>(c)], sm);
        for (int i = 0; i < n1; ++i)
            for (int j = 0; j < n2; ++j) {
                check_compatible(wx[static_cast<std::size_t>(i)], wy[static_cast<std::size_t>(j)]);
                cm.values(i, j) = wco_from_smoothed(wx[static_cast<std::size_t>(i)], wy[static_cast<std::size_t>(j)],
                                                    sax[static_cast<std::size_t>(i)], say[static_cast<std::size_t>(j)],
                                                    sm, band);
            }
        return cm;
    }

    std::vector<Eigen::MatrixXd> px(static_cast<std::size_t>(n1)), py(static_cast<std::size_t>(n2));
    for (int c = 0; c < n1; ++c) px[static_cast<std::size_t>(c)] = phase_matrix(wx[static_cast<std::size_t>(c)]);
    for (int c = 0; c < n2; ++c) py[static_cast<std::size_t>(c)] = phase_matrix(wy[static_cast<std::size_t>(c)]);

    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) {
            check_compatible(wx[static_cast<std::size_t>(i)], wy[static_cast<std::size_t>(j)]);
            if (estimator == Estimator::PLV)
                cm.values(i, j) = plv_from_phases(wx[static_cast<std::size_t>(i)], px[static_cast<std::size_t>(i)],
                                                  wy[static_cast<std::size_t>(j)], py[static_cast<std::size_t>(j)], band);
            else
                cm.values(i, j) = entropy_from_phases(wx[static_cast<std::size_t>(i)], px[static_cast<std::size_t>(i)],
                                                      wy[static_cast<std::size_t>(j)], py[static_cast<std::size_t>(j)],
                                                      band, opts.entropy);
        }
    return cm;
}

nlohmann::json connectivity_to_json(const ConnectivityMatrix& cm) {
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(cm.values.size()));
    for (int i = 0; i < cm.values.rows(); ++i)
        for (int j = 0; j < cm.values.cols(); ++j) values.push_back(cm.values(i, j));
    return {{"dyad_id", cm.meta.dyad_id},
            {"condition_id", cm.meta.condition_id},
            {"chromophore", cm.meta.chromophore},
            {"label", cm.meta.label},
            {"estimator", estimator_name(cm.estimator)},
            {"band", {cm.band.lo_s, cm.band.hi_s}},
            {"n1", cm.values.rows()},
            {"n2", cm.values.cols()},
            {"values", values}};
}

ConnectivityMatrix connectivity_from_json(const nlohmann::json& j) {
    ConnectivityMatrix cm;
    try {
        cm.meta.dyad_id = j.at("dyad_id").get<std::string>();
        cm.meta.condition_id = j.at("condition_id").get<std::string>();
        cm.meta.chromophore = j.at("chromophore").get<std::string>();
        cm.meta.label = j.at("label").get<int>();
        cm.estimator = estimator_from_name(j.at("estimator").get<std::string>());
        cm.band.lo_s = j.at("band").at(0).get<double>();
        cm.band.hi_s = j.at("band").at(1).get<double>();
        const int n1 = j.at("n1").get<int>();
        const int n2 = j.at("n2").get<int>();
        const auto values = j.at("values").get<std::vector<double>>();
        if (static_cast<int>(values.size()) != n1 * n2)
            throw validation_error("connectivity_from_json: value count does not match shape");
        cm.values.resize(n1, n2);
        for (int a = 0; a < n1; ++a)
            for (int b = 0; b < n2; ++b)
                cm.values(a, b) = values[static_cast<std::size_t>(a * n2 + b)];
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("connectivity_from_json: malformed document: ") + e.what());
    }
    return cm;
}

} // namespace ibnet
