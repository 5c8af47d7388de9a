#pragma once

#include <cstdint>
#include <vector>

#include "scengen/features.hpp"
#include "scengen/mat.hpp"
#include "scengen/sampler.hpp"

namespace scengen {

// level (*) transition, the exact inverse of compute_transition: relative
// kinds multiply, absolute kinds add. Throws when a relative-kind level
// would become non-positive.
std::vector<double> apply_star(const std::vector<double>& levels,
                               const std::vector<double>& deltas,
                               const std::vector<FeatureSpec>& specs);

// Conditional transition generator: trained network plus affines, or a stub.
class EquityGenerator {
public:
    virtual ~EquityGenerator() = default;
    virtual int latent_dim() const = 0;
    // z [n,8], levels [n,11], ds [n,7] -> instrument transitions [n,10]
    virtual Mat delta(const Mat& z, const Mat& levels, const Mat& ds) const = 0;
};

class NetworkEquityGenerator : public EquityGenerator {
public:
    NetworkEquityGenerator(const Network* gen_e, AffineMap cond_affine, AffineMap target_affine)
        : net_(gen_e), cond_(std::move(cond_affine)), target_(std::move(target_affine)) {}
    int latent_dim() const override { return 8; }
    Mat delta(const Mat& z, const Mat& levels, const Mat& ds) const override;

private:
    const Network* net_;
    AffineMap cond_;
    AffineMap target_;
};

struct Trajectory {
    int instrument = 0;
    Mat states;   // [steps+1, 11]; rows past an abort are absent
    Mat deltas;   // [steps, 11]; the 11th transition is held at zero
    Mat ds_used;  // [steps, 7]
    bool aborted = false;
    int abort_step = -1;
};

struct SimConfig {
    int latent_count = 2;        // I_t
    int state_count = 3;         // S_t
    int depth = 1;               // p
    bool share_pairs_across_instruments = true;  // prose behavior of Algorithm 2
    ChainConfig chain;
    std::uint64_t seed = 1;
};

// Algorithm 1: one instrument, one trajectory. Throws on an infeasible box;
// a positivity violation raises a NumericError naming the step.
Trajectory single_trajectory(const std::vector<double>& init_levels,
                             const std::vector<ScenarioBox>& boxes, const StateGenerator& sgen,
                             const EquityGenerator& egen, const std::vector<FeatureSpec>& eqv,
                             const SimConfig& cfg, const LatentEncoder* encoder = nullptr,
                             const Mat* pool = nullptr);

struct PairDraw {
    int z_index = 0;
    int s_index = 0;
};

struct StepDraws {
    Mat z;  // [I_t, 8]
    Mat s;  // [S_t, 7]
    // pair assignment per trajectory; one list per instrument when pairs are
    // not shared
    std::vector<std::vector<PairDraw>> pairs;  // [K or 1][n_t]
};

struct PortfolioRun {
    int n_t = 0;
    std::vector<std::vector<Trajectory>> trajectories;  // [K][n_t]
    std::vector<StepDraws> steps;                       // [depth]
    std::vector<ScenarioBox> boxes;
    int mcmc_passes = 0;   // one per unique box
    int aborted_count = 0;
    bool shared_pairs = true;
};

// Algorithm 2: per unique box sample S_t state transitions once; per step
// draw I_t latents, form the Cartesian product and assign pairs without
// replacement, shared across instruments.
PortfolioRun portfolio_simulate(const std::vector<std::vector<double>>& init_levels,
                                const std::vector<ScenarioBox>& boxes, const StateGenerator& sgen,
                                const EquityGenerator& egen, const std::vector<FeatureSpec>& eqv,
                                const SimConfig& cfg, const LatentEncoder* encoder = nullptr,
                                const Mat* pool = nullptr);

struct BinnedEstimate {
    int feature = 0;
    int time = 0;
    std::vector<double> edges;    // bins+1
    std::vector<double> mean;     // bins
    std::vector<double> stderr_;  // binomial, sqrt(p(1-p)/n_t)
};

BinnedEstimate binned_estimate(const PortfolioRun& run, int feature, int time,
                               const std::vector<double>& edges, int instrument = 0);

// 30 equal-width bins over the empirical 0.5-99.5 percentile range.
std::vector<double> default_bin_edges(const PortfolioRun& run, int feature, int time,
                                      int bins = 30, int instrument = 0);

}  // namespace scengen
