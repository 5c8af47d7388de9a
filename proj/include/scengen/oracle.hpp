#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "scengen/dataset.hpp"
#include "scengen/features.hpp"
#include "scengen/mat.hpp"

namespace scengen {

// Synthetic market with a known joint law, standing in for vendor feeds.
// Per business day: ds ~ N(0, state_cov); instrument transitions are
// A * ds + mean-reversion + idiosyncratic noise, applied through the
// per-feature transition kind so price-like series stay positive.
struct OracleModel {
    std::vector<FeatureSpec> eqv;
    std::vector<FeatureSpec> stv;
    Mat state_cov;                       // 7x7, positive definite
    Mat response;                        // 11x7
    std::vector<double> mean_reversion;  // 11, per-day pull toward level_target
    std::vector<double> level_target;    // 11
    std::vector<double> noise_scale;     // 11
    std::vector<double> init_level;      // 11
    std::vector<double> state_init;      // 7
    double missing_rate = 0.0;           // chance an output cell is blanked

    void validate() const;
};

OracleModel default_oracle();

// Entries of the response matrix designed to dominate their target's
// variance; conditional-fidelity checks regress against these.
std::vector<std::pair<int, int>> oracle_dominant_entries();

// Lower-triangular Cholesky factor of a positive-definite matrix.
Mat cholesky(const Mat& spd);

// Raw per-step state-transition draws (the law the covariance check targets).
Mat draw_state_transitions(const OracleModel& oracle, int n, std::uint64_t seed);

RawSeries synth_generate(const OracleModel& oracle, int n_instruments, int n_dates,
                         std::uint64_t seed);

}  // namespace scengen
