#pragma once

#include <Eigen/Dense>
#include <vector>

namespace ibnet {

struct WaveletParams {
    double omega0 = 6.0;       // Morlet center frequency
    int voices_per_octave = 8; // geometric scale resolution
    double min_period_s = 0.0; // 0 = auto: 4/fs (two Nyquist periods)
    double max_period_s = 0.0; // 0 = auto: duration/4
};

/// Continuous Morlet transform of one series.
struct WaveletSpectrum {
    Eigen::MatrixXcd coefficients; // scales x time
    std::vector<double> scales;    // strictly increasing
    std::vector<double> periods;   // equivalent Fourier periods, seconds
    double fs = 0.0;
    std::vector<double> coi;       // per-time cone-of-influence period bound, seconds
};

/// Morlet CWT via frequency-domain multiplication on the zero-padded,
/// demeaned series. Throws validation_error for length < 256 or non-finite
/// input.
WaveletSpectrum cwt(const Eigen::VectorXd& x, double fs, const WaveletParams& params = {});

/// Fourier period per unit scale for the Morlet wavelet.
double morlet_fourier_factor(double omega0);

/// True where the point (scale index, time index) lies outside the cone of
/// influence, i.e. edge effects are negligible.
inline bool outside_coi(const WaveletSpectrum& w, int scale_idx, int time_idx) {
    return w.periods[static_cast<std::size_t>(scale_idx)] < w.coi[static_cast<std::size_t>(time_idx)];
}

} // namespace ibnet
