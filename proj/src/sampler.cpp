#include "scengen/sampler.hpp"

#include <cmath>
#include <limits>

#include "scengen/rng.hpp"

namespace scengen {

ScenarioBox ScenarioBox::unbounded(int dim) {
    ScenarioBox b;
    b.lo.assign(dim, -std::numeric_limits<double>::infinity());
    b.hi.assign(dim, std::numeric_limits<double>::infinity());
    return b;
}

void ScenarioBox::validate() const {
    if (lo.size() != hi.size()) throw ConfigError("scenario box: bound arrays differ in length");
    if (static_cast<int>(lo.size()) != 7)
        throw ConfigError("scenario box: expected 7 state-transition dimensions, got " +
                          std::to_string(lo.size()));
    for (std::size_t i = 0; i < lo.size(); ++i) {
        if (std::isnan(lo[i]) || std::isnan(hi[i]))
            throw ConfigError("scenario box: NaN bound (use +/-inf for an open side)");
        if (lo[i] > hi[i])
            throw ConfigError("scenario box: empty interval at dimension " + std::to_string(i));
    }
}

bool ScenarioBox::contains(const double* v, int n) const {
    if (n != dim()) throw ConfigError("scenario box: dimension mismatch");
    for (int i = 0; i < n; ++i)
        if (v[i] < lo[i] || v[i] > hi[i]) return false;
    return true;
}

int window_indicator(const std::vector<double>& ds, const ScenarioBox& box) {
    return box.contains(ds.data(), static_cast<int>(ds.size())) ? 1 : 0;
}

void ChainConfig::validate() const {
    if (proposal_sigma <= 0.0) throw ConfigError("chain: proposal sigma must be positive");
    if (burn_in < 0) throw ConfigError("chain: negative burn-in");
    if (thinning < 1) throw ConfigError("chain: thinning must be >= 1");
    if (chains < 1) throw ConfigError("chain: need at least one chain");
    if (max_init_attempts < 1) throw ConfigError("chain: need a positive init budget");
}

namespace {

// Bound the live tape footprint: big generation batches run in slices.
constexpr int kInferChunk = 256;

}  // namespace

Mat NetworkStateGenerator::generate(const Mat& z) const {
    Mat m(z.rows, 7);
    for (int start = 0; start < z.rows; start += kInferChunk) {
        const int n = std::min(kInferChunk, z.rows - start);
        std::vector<double> slice(z.data.begin() + static_cast<std::size_t>(start) * z.cols,
                                  z.data.begin() + static_cast<std::size_t>(start + n) * z.cols);
        Tensor out = net_->infer({Tensor({n, z.cols}, std::move(slice))});
        std::copy(out.data(), out.data() + out.size(),
                  m.data.begin() + static_cast<std::size_t>(start) * 7);
    }
    return affine_.invert(m);
}

Mat IdentityStateGenerator::generate(const Mat& z) const {
    Mat m(z.rows, 7);
    for (int r = 0; r < z.rows; ++r)
        for (int c = 0; c < 7; ++c) m.at(r, c) = z.at(r, c);
    return m;
}

Mat NetworkLatentEncoder::encode(const Mat& ds) const {
    Mat std = affine_.apply(ds);
    Mat m(ds.rows, 8);
    for (int start = 0; start < ds.rows; start += kInferChunk) {
        const int n = std::min(kInferChunk, ds.rows - start);
        std::vector<double> slice(std.data.begin() + static_cast<std::size_t>(start) * ds.cols,
                                  std.data.begin() + static_cast<std::size_t>(start + n) * ds.cols);
        Tensor out = net_->infer({Tensor({n, ds.cols}, std::move(slice))});
        std::copy(out.data(), out.data() + out.size(),
                  m.data.begin() + static_cast<std::size_t>(start) * 8);
    }
    return m;
}

std::vector<double> encoder_init(const ScenarioBox& box, const StateGenerator& gen,
                                 const LatentEncoder* encoder, const Mat* pool,
                                 const ChainConfig& cfg, std::uint64_t chain_stream) {
    box.validate();
    cfg.validate();
    Rng rng = Rng(cfg.seed).split(0x171).split(chain_stream);
    const int ld = gen.latent_dim();

    // pool elements inside the box, inverse-mapped and verified
    if (encoder && pool && pool->rows > 0) {
        Rng rp = rng.split(0);
        const int tries = std::min(pool->rows, cfg.max_init_attempts);
        for (int t = 0; t < tries; ++t) {
            const int r = static_cast<int>(rp.below(static_cast<std::uint64_t>(pool->rows)));
            if (!box.contains(pool->row(r), pool->cols)) continue;
            Mat one(1, pool->cols);
            for (int c = 0; c < pool->cols; ++c) one.at(0, c) = pool->at(r, c);
            Mat z0 = encoder->encode(one);
            Mat back = gen.generate(z0);
            if (box.contains(back.row(0), back.cols)) return z0.row_vec(0);
        }
    }

    // fall back to rejection sampling from the latent prior
    Rng rz = rng.split(1);
    Mat z(1, ld);
    for (int attempt = 0; attempt < cfg.max_init_attempts; ++attempt) {
        for (int c = 0; c < ld; ++c) z.at(0, c) = rz.normal();
        Mat ds = gen.generate(z);
        if (box.contains(ds.row(0), ds.cols)) return z.row_vec(0);
    }
    throw InfeasibleScenarioError(
        "no admissible starting point found for the scenario box after " +
        std::to_string(cfg.max_init_attempts) + " attempts");
}

McmcResult mh_sample_conditioned(const StateGenerator& gen, const ScenarioBox& box, int n_samples,
                                 const ChainConfig& cfg, const LatentEncoder* encoder,
                                 const Mat* pool) {
    box.validate();
    cfg.validate();
    if (n_samples < 1) throw ConfigError("mcmc: need a positive sample count");
    const int ld = gen.latent_dim();
    const int sd = gen.state_dim();
    const int C = cfg.chains;

    Mat z(C, ld);
    Mat cur_ds(C, sd);
    std::vector<double> cur_sq(C, 0.0);
    std::vector<Rng> rngs;
    for (int c = 0; c < C; ++c) {
        std::vector<double> z0 = encoder_init(box, gen, encoder, pool, cfg, c);
        double sq = 0.0;
        for (int i = 0; i < ld; ++i) {
            z.at(c, i) = z0[i];
            sq += z0[i] * z0[i];
        }
        cur_sq[c] = sq;
        rngs.push_back(Rng(cfg.seed).split(0x3c4a).split(c));
    }
    {
        Mat ds0 = gen.generate(z);
        cur_ds = ds0;
    }

    McmcResult out;
    out.samples = Mat(n_samples, sd);
    McmcDiagnostics& diag = out.diag;

    Mat prop(C, ld);
    long long burn_proposed = 0, burn_accepted = 0;
    int emitted = 0;
    int iter = 0;
    while (emitted < n_samples) {
        // propose for every chain, evaluate the generator in one batch
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < ld; ++i)
                prop.at(c, i) = z.at(c, i) + cfg.proposal_sigma * rngs[c].normal();
        Mat prop_ds = gen.generate(prop);
        for (int c = 0; c < C; ++c) {
            ++diag.proposed;
            if (iter < cfg.burn_in) ++burn_proposed;
            if (!box.contains(prop_ds.row(c), sd)) continue;  // zero-density proposal
            double sq = 0.0;
            for (int i = 0; i < ld; ++i) sq += prop.at(c, i) * prop.at(c, i);
            const double log_alpha = -0.5 * (sq - cur_sq[c]);
            if (log_alpha >= 0.0 || std::log(rngs[c].uniform()) < log_alpha) {
                for (int i = 0; i < ld; ++i) z.at(c, i) = prop.at(c, i);
                for (int i = 0; i < sd; ++i) cur_ds.at(c, i) = prop_ds.at(c, i);
                cur_sq[c] = sq;
                ++diag.accepted;
                if (iter < cfg.burn_in) ++burn_accepted;
            }
        }
        ++iter;
        if (iter <= cfg.burn_in) continue;
        if ((iter - cfg.burn_in) % cfg.thinning != 0) continue;
        for (int c = 0; c < C && emitted < n_samples; ++c) {
            for (int i = 0; i < sd; ++i) out.samples.at(emitted, i) = cur_ds.at(c, i);
            ++emitted;
        }
    }

    diag.acceptance_rate =
        diag.proposed > 0 ? static_cast<double>(diag.accepted) / diag.proposed : 0.0;
    if (burn_proposed > 0 && static_cast<double>(burn_accepted) / burn_proposed < 0.01) {
        diag.low_acceptance = true;
        diag.warning = "acceptance rate below 1% during burn-in; try proposal_sigma around " +
                       std::to_string(cfg.proposal_sigma / 4.0);
    }
    return out;
}

}  // namespace scengen
