#include <doctest.h>

#include <cmath>
#include <vector>

#include "ibnet/connectivity.hpp"
#include "ibnet/errors.hpp"
#include "ibnet/rng.hpp"
#include "ibnet/signals.hpp"
#include "ibnet/wavelet.hpp"

using namespace ibnet;

namespace {

const Band kBand{5.0, 20.0};

Eigen::VectorXd white_noise(int n, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::VectorXd x(n);
    for (int t = 0; t < n; ++t) x(t) = rng.gaussian();
    return x;
}

Eigen::VectorXd oscillator(int n, double fs, std::uint64_t seed) {
    return coupled_oscillator_pair(CouplingProfile{}, n, fs, seed).first;
}

Eigen::VectorXd circular_shift(const Eigen::VectorXd& x, int d) {
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd out(n);
    for (int t = 0; t < n; ++t) out(t) = x(((t - d) % n + n) % n);
    return out;
}

DyadRecording oscillator_recording(int n_channels, int n, double fs, std::uint64_t seed) {
    DyadRecording rec;
    rec.meta.dyad_id = "dyad_c0_000";
    rec.meta.condition_id = "cond_00";
    rec.meta.chromophore = "HBO";
    rec.fs = fs;
    rec.signals_p1.resize(n, n_channels);
    rec.signals_p2.resize(n, n_channels);
    for (int c = 0; c < n_channels; ++c) {
        rec.signals_p1.col(c) = oscillator(n, fs, seed + static_cast<std::uint64_t>(2 * c));
        rec.signals_p2.col(c) = oscillator(n, fs, seed + static_cast<std::uint64_t>(2 * c + 1));
    }
    return rec;
}

} // namespace

TEST_SUITE("connectivity") {

TEST_CASE("self-coherence is one") {
    const auto w = cwt(oscillator(1024, 4.0, 17), 4.0);
    CHECK(wavelet_coherence(w, w, kBand) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("white-noise pairs have low mean coherence") {
    double sum = 0.0;
    const int n_seeds = 50;
    for (int seed = 0; seed < n_seeds; ++seed) {
        const auto wx = cwt(white_noise(4096, static_cast<std::uint64_t>(2 * seed)), 4.0);
        const auto wy = cwt(white_noise(4096, static_cast<std::uint64_t>(2 * seed + 1)), 4.0);
        sum += wavelet_coherence(wx, wy, kBand);
    }
    CHECK(sum / n_seeds < 0.35);
}

TEST_CASE("coherence stays within the unit interval on random inputs") {
    for (int seed = 0; seed < 100; ++seed) {
        const auto wx = cwt(white_noise(256, static_cast<std::uint64_t>(1000 + 2 * seed)), 4.0);
        const auto wy = cwt(white_noise(256, static_cast<std::uint64_t>(1001 + 2 * seed)), 4.0);
        const double v = wavelet_coherence(wx, wy, kBand);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("constant phase offset yields unit plv") {
    Eigen::VectorXd x(1024);
    for (int t = 0; t < 1024; ++t)
        x(t) = std::cos(2.0 * M_PI * 0.125 * static_cast<double>(t) / 4.0);
    const auto wx = cwt(x, 4.0);
    const auto wy = cwt(circular_shift(x, 4), 4.0); // shift by 1 s = 1/8 period
    CHECK(phase_locking_value(wx, wy, kBand) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("plv of the complex roots of unity vanishes") {
    std::vector<double> dphi;
    const int N = 16;
    for (int k = 0; k < N; ++k) dphi.push_back(2.0 * M_PI * k / N);
    CHECK(plv_from_phase_diffs(dphi) < 1e-12);
}

TEST_CASE("plv of iid uniform phases matches the finite-sample floor") {
    // E[PLV] for N iid phases is ~ sqrt(pi)/2 * N^(-1/2) = 0.028 at N=1000.
    Rng rng(31);
    double sum = 0.0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<double> dphi(1000);
        for (auto& d : dphi) d = rng.uniform(-M_PI, M_PI);
        sum += plv_from_phase_diffs(dphi);
    }
    CHECK(sum / trials == doctest::Approx(0.028).epsilon(0.75));
    CHECK(std::abs(sum / trials - 0.028) < 0.02);
}

TEST_CASE("phase entropy index hits both extremes") {
    CHECK(phase_entropy_index(std::vector<double>(100, 0.7), 16) ==
          doctest::Approx(1.0).epsilon(1e-9));
    // One sample per bin center, repeated: exactly uniform histogram.
    std::vector<double> uniform;
    const int B = 16;
    for (int rep = 0; rep < 10; ++rep)
        for (int k = 0; k < B; ++k)
            uniform.push_back(-M_PI + (k + 0.5) * 2.0 * M_PI / B);
    CHECK(std::abs(phase_entropy_index(uniform, B)) < 1e-12);
    // Values outside [-pi, pi) wrap around the circle.
    const std::vector<double> wrapped = {0.0, 2.0 * M_PI, -2.0 * M_PI, 4.0 * M_PI};
    CHECK(phase_entropy_index(wrapped, 8) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("auto bin count follows the log rule") {
    CHECK(auto_bin_count(1001) == 30);
    CHECK(auto_bin_count(257) == 17);
    for (std::size_t n : {300u, 1000u, 5000u}) {
        const int expected = static_cast<int>(
            std::llround(std::exp(0.626 + 0.4 * std::log(static_cast<double>(n - 1)))));
        CHECK(auto_bin_count(n) == expected);
    }
}

TEST_CASE("identical signals give unit entropy index") {
    const auto w = cwt(oscillator(1024, 4.0, 23), 4.0);
    CHECK(entropy_sync(w, w, kBand) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("entropy lag scan recovers a pure transmission delay") {
    CouplingProfile p;
    p.lagged_strength = 0.9;
    p.lag_s = 2.0;
    const auto [x, y] = coupled_oscillator_pair(p, 2048, 4.0, 11, 0.1);
    const auto wx = cwt(x, 4.0);
    const auto wy = cwt(y, 4.0);
    const auto profile = entropy_lag_profile(wx, wy, kBand); // 9 lags over [-4, 4] s
    REQUIRE(profile.size() == 9);
    double best_lag = 0.0, best = -1.0, at_zero = -1.0;
    for (const auto& [lag, v] : profile) {
        if (v > best) {
            best = v;
            best_lag = lag;
        }
        if (lag == 0.0) at_zero = v;
    }
    CHECK(best_lag == doctest::Approx(2.0));
    CHECK(best - at_zero > 0.05);
    CHECK(entropy_sync(wx, wy, kBand) == doctest::Approx(best));
}

TEST_CASE("estimators ignore constant offsets and positive rescaling") {
    CouplingProfile p;
    p.concurrent_strength = 0.5;
    const auto [x, y] = coupled_oscillator_pair(p, 1024, 4.0, 41);
    const auto wx = cwt(x, 4.0);
    const auto wy = cwt(y, 4.0);
    const auto wx_off = cwt((x.array() + 5.0).matrix().eval(), 4.0);
    const auto wx_scaled = cwt((3.7 * x).eval(), 4.0);

    const double wco = wavelet_coherence(wx, wy, kBand);
    const double plv = phase_locking_value(wx, wy, kBand);
    const double ent = entropy_sync(wx, wy, kBand);

    CHECK(wavelet_coherence(wx_off, wy, kBand) == doctest::Approx(wco).epsilon(1e-6));
    CHECK(phase_locking_value(wx_off, wy, kBand) == doctest::Approx(plv).epsilon(1e-6));
    CHECK(entropy_sync(wx_off, wy, kBand) == doctest::Approx(ent).epsilon(1e-6));

    CHECK(wavelet_coherence(wx_scaled, wy, kBand) == doctest::Approx(wco).epsilon(1e-6));
    CHECK(phase_locking_value(wx_scaled, wy, kBand) == doctest::Approx(plv).epsilon(1e-6));
    CHECK(entropy_sync(wx_scaled, wy, kBand) == doctest::Approx(ent).epsilon(1e-6));
}

TEST_CASE("connectivity matrix covers every channel pair") {
    const auto rec = oscillator_recording(8, 256, 4.0, 61);
    const auto cm = connectivity_matrix(rec, Estimator::PLV, kBand);
    CHECK(cm.values.rows() == 8);
    CHECK(cm.values.cols() == 8);
    CHECK(cm.values.size() == 64);
    CHECK(cm.values.allFinite());
    CHECK(cm.values.minCoeff() >= 0.0);
    CHECK(cm.values.maxCoeff() <= 1.0);
    CHECK(cm.meta.dyad_id == rec.meta.dyad_id);
    CHECK(cm.meta.condition_id == rec.meta.condition_id);
    CHECK(cm.estimator == Estimator::PLV);
}

TEST_CASE("self-dyad plv diagonal is one") {
    auto rec = oscillator_recording(3, 512, 4.0, 71);
    rec.signals_p2 = rec.signals_p1;
    const auto cm = connectivity_matrix(rec, Estimator::PLV, kBand);
    for (int c = 0; c < 3; ++c) CHECK(cm.values(c, c) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("wco connectivity matrix values stay in range") {
    const auto rec = oscillator_recording(2, 512, 4.0, 81);
    const auto cm = connectivity_matrix(rec, Estimator::WCO, kBand);
    CHECK(cm.values.allFinite());
    CHECK(cm.values.minCoeff() >= 0.0);
    CHECK(cm.values.maxCoeff() <= 1.0);
}

TEST_CASE("estimator names round-trip and reject unknowns") {
    CHECK(estimator_name(Estimator::WCO) == "WCO");
    CHECK(estimator_name(Estimator::PLV) == "PLV");
    CHECK(estimator_name(Estimator::ENTROPY) == "ENTROPY");
    CHECK(estimator_from_name("WCO") == Estimator::WCO);
    CHECK(estimator_from_name("plv") == Estimator::PLV);
    CHECK_THROWS_AS(estimator_from_name("bogus"), validation_error);
}

TEST_CASE("connectivity json round-trips") {
    const auto rec = oscillator_recording(2, 256, 4.0, 91);
    auto cm = connectivity_matrix(rec, Estimator::ENTROPY, kBand);
    cm.meta.label = 1;
    const auto back = connectivity_from_json(connectivity_to_json(cm));
    CHECK(back.estimator == Estimator::ENTROPY);
    CHECK(back.meta.dyad_id == cm.meta.dyad_id);
    CHECK(back.meta.label == 1);
    CHECK(back.band.lo_s == doctest::Approx(cm.band.lo_s));
    CHECK(back.band.hi_s == doctest::Approx(cm.band.hi_s));
    CHECK((back.values - cm.values).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("malformed connectivity json is rejected") {
    nlohmann::json j = {{"dyad_id", "d"},    {"condition_id", "c"}, {"chromophore", "HBO"},
                        {"label", 0},        {"estimator", "PLV"},  {"band", {5.0, 20.0}},
                        {"values", {0.5, 0.5, 0.5}}, {"n1", 2},     {"n2", 2}};
    CHECK_THROWS_AS(connectivity_from_json(j), validation_error);
}

TEST_CASE("incompatible spectra and empty bands are rejected") {
    const auto wa = cwt(oscillator(256, 4.0, 101), 4.0);
    const auto wb = cwt(oscillator(300, 4.0, 102), 4.0);
    CHECK_THROWS_AS(wavelet_coherence(wa, wb, kBand), validation_error);
    CHECK_THROWS_AS(phase_locking_value(wa, wb, kBand), validation_error);
    CHECK_THROWS_AS(entropy_sync(wa, wb, kBand), validation_error);

    const auto wc = cwt(oscillator(256, 4.0, 103), 4.0);
    CHECK_THROWS_AS(wavelet_coherence(wa, wc, Band{100.0, 200.0}), validation_error);
    CHECK_THROWS_AS(wavelet_coherence(wa, wc, Band{20.0, 5.0}), validation_error);

    EntropyOpts opts;
    opts.max_lag_s = 40.0; // >= half of the 64 s duration
    CHECK_THROWS_AS(entropy_sync(wa, wc, kBand, opts), validation_error);
    opts.max_lag_s = -1.0;
    CHECK_THROWS_AS(entropy_sync(wa, wc, kBand, opts), validation_error);
}

} // TEST_SUITE
