#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "scengen/errors.hpp"
#include "scengen/mat.hpp"
#include "scengen/network.hpp"
#include "scengen/trainer.hpp"

namespace scengen {

// Per-state-variable closed intervals; +/-infinity marks an unbounded side.
struct ScenarioBox {
    std::vector<double> lo;
    std::vector<double> hi;

    static ScenarioBox unbounded(int dim = 7);
    void validate() const;
    int dim() const { return static_cast<int>(lo.size()); }
    bool contains(const double* v, int n) const;
    bool operator==(const ScenarioBox& o) const { return lo == o.lo && hi == o.hi; }
};

// 1 iff every coordinate lies inside its closed interval.
int window_indicator(const std::vector<double>& ds, const ScenarioBox& box);

struct ChainConfig {
    double proposal_sigma = 0.1;
    int burn_in = 1000;
    int thinning = 10;
    int chains = 4;
    int max_init_attempts = 10000;
    std::uint64_t seed = 1;

    void validate() const;
};

// Latent-to-state map: a trained generator plus denormalization, or a stub.
class StateGenerator {
public:
    virtual ~StateGenerator() = default;
    virtual int latent_dim() const = 0;
    virtual int state_dim() const = 0;
    virtual Mat generate(const Mat& z) const = 0;  // [n, latent] -> [n, state]
};

class NetworkStateGenerator : public StateGenerator {
public:
    NetworkStateGenerator(const Network* gen_s, AffineMap affine)
        : net_(gen_s), affine_(std::move(affine)) {}
    int latent_dim() const override { return 8; }
    int state_dim() const override { return 7; }
    Mat generate(const Mat& z) const override;

private:
    const Network* net_;
    AffineMap affine_;
};

// First 7 latent coordinates pass through; calibration stub.
class IdentityStateGenerator : public StateGenerator {
public:
    int latent_dim() const override { return 8; }
    int state_dim() const override { return 7; }
    Mat generate(const Mat& z) const override;
};

class LatentEncoder {
public:
    virtual ~LatentEncoder() = default;
    virtual Mat encode(const Mat& ds) const = 0;  // [n, state] -> [n, latent]
};

class NetworkLatentEncoder : public LatentEncoder {
public:
    NetworkLatentEncoder(const Network* enc_z, AffineMap affine)
        : net_(enc_z), affine_(std::move(affine)) {}
    Mat encode(const Mat& ds) const override;

private:
    const Network* net_;
    AffineMap affine_;
};

// Starting latent: encode a pool element that satisfies the box and verify,
// else rejection-sample the prior; exhausting the budget means the scenario
// is infeasible.
std::vector<double> encoder_init(const ScenarioBox& box, const StateGenerator& gen,
                                 const LatentEncoder* encoder, const Mat* pool,
                                 const ChainConfig& cfg, std::uint64_t chain_stream = 0);

struct McmcDiagnostics {
    long long proposed = 0;
    long long accepted = 0;
    double acceptance_rate = 0.0;
    bool low_acceptance = false;
    std::string warning;
};

struct McmcResult {
    Mat samples;  // [n, state_dim], every row inside the box
    McmcDiagnostics diag;
};

// Random-walk Metropolis on the latent prior restricted by the box window;
// draws from the configured chains are interleaved.
McmcResult mh_sample_conditioned(const StateGenerator& gen, const ScenarioBox& box, int n_samples,
                                 const ChainConfig& cfg, const LatentEncoder* encoder = nullptr,
                                 const Mat* pool = nullptr);

}  // namespace scengen
