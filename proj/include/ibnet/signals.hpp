#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ibnet/types.hpp"

namespace ibnet {

/// One dual-brain recording: two synchronized multi-channel series.
struct DyadRecording {
    RecordMeta meta;
    Eigen::MatrixXd signals_p1; // time x channels
    Eigen::MatrixXd signals_p2; // same shape as signals_p1
    double fs = 0.0;            // Hz
};

/// Class-level coupling description for the synthetic generator.
/// concurrent: zero-lag linear mixing of participant 1 into participant 2.
/// lagged: delayed mixing, optionally routed through a polarity-alternating
/// signed-square transform (blend controlled by `nonlinearity`).
struct CouplingProfile {
    double concurrent_strength = 0.0; // [0,1]
    double lagged_strength = 0.0;     // [0,1]
    double lag_s = 0.0;               // seconds; rounded to whole samples
    double nonlinearity = 0.0;        // [0,1]; 0 = linear, 1 = full x*|x| path
};

struct CohortConfig {
    int n_dyads_per_class = 18;
    int n_channels = 8;
    int conditions_per_dyad = 8;
    double duration_s = 120.0;
    double fs = 4.0;
    CouplingProfile profile_class0;
    CouplingProfile profile_class1;
    double noise_sd = 0.3;
    /// Multiplicative dyad-level spread of coupling strengths, U(1-x, 1+x).
    /// Models stable between-dyad synchrony differences; keeps class overlap
    /// realistic so classification is not trivially saturated.
    double dyad_trait_spread = 0.25;
    std::uint64_t seed = 0;
};

/// Two coupled unit-variance series per the profile. Deterministic in seed.
/// noise_sd is measurement noise added to participant 2 before standardizing.
std::pair<Eigen::VectorXd, Eigen::VectorXd>
coupled_oscillator_pair(const CouplingProfile& profile, int n_samples, double fs,
                        std::uint64_t seed, double noise_sd = 0.3);

/// Full two-class cohort; every dyad gets conditions_per_dyad recordings per
/// chromophore (HBO generated, HBR = -0.4*HBO + noise).
std::vector<DyadRecording> generate_dyad_cohort(const CohortConfig& config);

/// Load recordings listed in a JSON manifest (see write_cohort for layout).
std::vector<DyadRecording> load_recordings(const std::string& manifest_path);

/// Write recordings as CSV files plus a manifest JSON under dir.
/// Returns the manifest path.
std::string write_cohort(const std::vector<DyadRecording>& recordings,
                         const std::string& dir,
                         const std::string& manifest_name = "manifest.json");

} // namespace ibnet
