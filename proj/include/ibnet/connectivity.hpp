#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "ibnet/signals.hpp"
#include "ibnet/types.hpp"
#include "ibnet/wavelet.hpp"

#include <nlohmann/json.hpp>

namespace ibnet {

enum class Estimator { WCO, PLV, ENTROPY };

std::string estimator_name(Estimator e);
Estimator estimator_from_name(const std::string& name);

/// Per-channel-pair connectivity of one recording.
struct ConnectivityMatrix {
    Eigen::MatrixXd values; // |V1| x |V2|, estimator range
    Estimator estimator = Estimator::WCO;
    Band band;
    RecordMeta meta;
};

struct EntropyOpts {
    double max_lag_s = 4.0;
    int n_lags = 9;      // odd, so the grid contains lag 0
    int n_bins = 0;      // 0 = AUTO: round(exp(0.626 + 0.4*ln(n-1)))
    bool max_over_lags = true; // false: mean over the lag grid
};

struct ConnectivityOpts {
    WaveletParams wavelet;
    EntropyOpts entropy;
};

/// Squared smoothed wavelet coherence, averaged over the band and over times
/// outside the cone of influence.
double wavelet_coherence(const WaveletSpectrum& wx, const WaveletSpectrum& wy, Band band);

/// Mean over band scales of the per-scale phase-locking value.
double phase_locking_value(const WaveletSpectrum& wx, const WaveletSpectrum& wy, Band band);

/// Lag-scanned normalized phase-entropy index, max (or mean) over the lag grid.
double entropy_sync(const WaveletSpectrum& wx, const WaveletSpectrum& wy, Band band,
                    const EntropyOpts& opts = {});

/// Diagnostic view of entropy_sync: (realized lag in seconds, index) for every
/// scorable grid lag, in grid order.
std::vector<std::pair<double, double>>
entropy_lag_profile(const WaveletSpectrum& wx, const WaveletSpectrum& wy, Band band,
                    const EntropyOpts& opts = {});

/// All channel pairs of one recording under one estimator.
ConnectivityMatrix connectivity_matrix(const DyadRecording& rec, Estimator estimator,
                                       Band band, const ConnectivityOpts& opts = {});

/// |mean of unit phasors| of the given phase differences (radians).
double plv_from_phase_diffs(const std::vector<double>& dphi);

/// (ln B - S)/ln B of the B-bin histogram of dphi wrapped to [-pi, pi).
double phase_entropy_index(const std::vector<double>& dphi, int n_bins);

/// Histogram-bin count heuristic for n samples.
int auto_bin_count(std::size_t n_samples);

nlohmann::json connectivity_to_json(const ConnectivityMatrix& cm);
ConnectivityMatrix connectivity_from_json(const nlohmann::json& j);

} // namespace ibnet
