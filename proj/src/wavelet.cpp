#include "ibnet/wavelet.hpp"

#include <cmath>
#include <complex>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "ibnet/errors.hpp"

namespace ibnet {

double morlet_fourier_factor(double omega0) {
    return 4.0 * M_PI / (omega0 + std::sqrt(2.0 + omega0 * omega0));
}

namespace {

int next_pow2(int n) {
    int p = 1;
    while (p < n) p *= 2;
    return p;
}

} // namespace

WaveletSpectrum cwt(const Eigen::VectorXd& x, double fs, const WaveletParams& params) {
    const int n = static_cast<int>(x.size());
    if (n < 256) throw validation_error("cwt: series must have at least 256 samples");
    if (!(fs > 0.0)) throw validation_error("cwt: fs must be positive");
    if (!x.allFinite()) throw validation_error("cwt: non-finite sample");

    const double dt = 1.0 / fs;
    const double lambda = morlet_fourier_factor(params.omega0);
    const double min_period = params.min_period_s > 0.0 ? params.min_period_s : 4.0 / fs;
    const double max_period =
        params.max_period_s > 0.0 ? params.max_period_s : static_cast<double>(n) * dt / 4.0;
    if (!(min_period < max_period))
        throw validation_error("cwt: period range is empty");

    const double s0 = min_period / lambda;
    const double s_max = max_period / lambda;
    const int voices = params.voices_per_octave;
    if (voices < 1) throw validation_error("cwt: voices_per_octave must be >= 1");
    const int n_scales =
        static_cast<int>(std::ceil(static_cast<double>(voices) * std::log2(s_max / s0))) + 1;

    WaveletSpectrum out;
    out.fs = fs;
    out.scales.reserve(static_cast<std::size_t>(n_scales));
    out.periods.reserve(static_cast<std::size_t>(n_scales));
    for (int j = 0; j < n_scales; ++j) {
        const double s = s0 * std::pow(2.0, static_cast<double>(j) / static_cast<double>(voices));
        out.scales.push_back(s);
        out.periods.push_back(lambda * s);
    }

    const int npad = next_pow2(n);
    const double mean = x.mean();
    std::vector<std::complex<double>> series(static_cast<std::size_t>(npad), {0.0, 0.0});
    for (int i = 0; i < n; ++i) series[static_cast<std::size_t>(i)] = x(i) - mean;

    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> xhat;
    fft.fwd(xhat, series);

    // Angular frequencies of the padded grid; only omega > 0 carries the
    // analytic Morlet response, so offsets (DC) never reach the coefficients.
    std::vector<double> omega(static_cast<std::size_t>(npad), 0.0);
    for (int k = 1; k <= npad / 2; ++k)
        omega[static_cast<std::size_t>(k)] = 2.0 * M_PI * static_cast<double>(k) /
                                             (static_cast<double>(npad) * dt);

    out.coefficients.resize(n_scales, n);
    const double norm_const = std::pow(M_PI, -0.25);
    std::vector<std::complex<double>> prod(static_cast<std::size_t>(npad));
    std::vector<std::complex<double>> row;
    for (int j = 0; j < n_scales; ++j) {
        const double s = out.scales[static_cast<std::size_t>(j)];
        const double amp = std::sqrt(2.0 * M_PI * s / dt) * norm_const;
        prod.assign(static_cast<std::size_t>(npad), {0.0, 0.0});
        for (int k = 1; k <= npad / 2; ++k) {
            const double arg = s * omega[static_cast<std::size_t>(k)] - params.omega0;
            const double daughter = amp * std::exp(-0.5 * arg * arg);
            prod[static_cast<std::size_t>(k)] = xhat[static_cast<std::size_t>(k)] * daughter;
        }
        fft.inv(row, prod);
        for (int t = 0; t < n; ++t) out.coefficients(j, t) = row[static_cast<std::size_t>(t)];
    }

    // Envelope e^(-t^2/(2 s^2)) e-folds at t = sqrt(2)*s, so the largest
    // trusted period at distance d samples from an edge is lambda*d*dt/sqrt(2).
    out.coi.resize(static_cast<std::size_t>(n));
    const double coi_factor = lambda * dt / std::sqrt(2.0);
    for (int t = 0; t < n; ++t)
        out.coi[static_cast<std::size_t>(t)] =
            coi_factor * static_cast<double>(std::min(t, n - 1 - t));
    return out;
}

} // namespace ibnet
