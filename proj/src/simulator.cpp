#include "scengen/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "scengen/rng.hpp"

namespace scengen {

std::vector<double> apply_star(const std::vector<double>& levels,
                               const std::vector<double>& deltas,
                               const std::vector<FeatureSpec>& specs) {
    if (levels.size() != deltas.size() || levels.size() != specs.size())
        throw DataError("apply_star: levels, transitions and specs must align");
    std::vector<double> out(levels.size());
    for (std::size_t f = 0; f < levels.size(); ++f) {
        if (specs[f].transition == TransitionKind::Relative && levels[f] <= 0.0)
            throw NumericError("apply_star: non-positive level on relative-kind feature " +
                               specs[f].name);
        out[f] = apply_transition(levels[f], deltas[f], specs[f].transition);
        if (specs[f].transition == TransitionKind::Relative && out[f] <= 0.0)
            throw NumericError("apply_star: transition drives relative-kind feature " +
                               specs[f].name + " non-positive");
    }
    return out;
}

Mat NetworkEquityGenerator::delta(const Mat& z, const Mat& levels, const Mat& ds) const {
    const int total = z.rows;
    Mat cond(total, 18);
    for (int r = 0; r < total; ++r) {
        for (int c = 0; c < 11; ++c) cond.at(r, c) = levels.at(r, c);
        for (int c = 0; c < 7; ++c) cond.at(r, 11 + c) = ds.at(r, c);
    }
    Mat cond_std = cond_.apply(cond);
    Mat m(total, 10);
    constexpr int kChunk = 256;  // keep the scratch tape small
    for (int start = 0; start < total; start += kChunk) {
        const int n = std::min(kChunk, total - start);
        std::vector<double> zslice(z.data.begin() + static_cast<std::size_t>(start) * z.cols,
                                   z.data.begin() + static_cast<std::size_t>(start + n) * z.cols);
        std::vector<double> cslice(
            cond_std.data.begin() + static_cast<std::size_t>(start) * 18,
            cond_std.data.begin() + static_cast<std::size_t>(start + n) * 18);
        Tensor out = net_->infer(
            {Tensor({n, z.cols}, std::move(zslice)), Tensor({n, 18}, std::move(cslice))});
        std::copy(out.data(), out.data() + out.size(),
                  m.data.begin() + static_cast<std::size_t>(start) * 10);
    }
    return target_.invert(m);
}

namespace {

Mat normal_mat(int rows, int cols, Rng rng) {
    Mat m(rows, cols);
    for (auto& v : m.data) v = rng.normal();
    return m;
}

// transitions for all 11 features: the 10 generated plus the held 11th
std::vector<double> full_deltas(const Mat& d10, int row) {
    std::vector<double> d(11, 0.0);
    for (int c = 0; c < 10; ++c) d[c] = d10.at(row, c);
    return d;
}

}  // namespace

Trajectory single_trajectory(const std::vector<double>& init_levels,
                             const std::vector<ScenarioBox>& boxes, const StateGenerator& sgen,
                             const EquityGenerator& egen, const std::vector<FeatureSpec>& eqv,
                             const SimConfig& cfg, const LatentEncoder* encoder,
                             const Mat* pool) {
    if (init_levels.size() != 11) throw DataError("single_trajectory: need 11 initial levels");
    const int p = static_cast<int>(boxes.size());
    Trajectory traj;
    traj.states = Mat(p + 1, 11);
    traj.deltas = Mat(p, 11);
    traj.ds_used = Mat(p, 7);
    std::vector<double> lev = init_levels;
    for (int c = 0; c < 11; ++c) traj.states.at(0, c) = lev[c];

    Rng root = Rng(cfg.seed).split(0x7a31);
    for (int t = 0; t < p; ++t) {
        ChainConfig chain = cfg.chain;
        chain.seed = root.split(2 * t).key();
        McmcResult ds = mh_sample_conditioned(sgen, boxes[t], 1, chain, encoder, pool);
        Mat z = normal_mat(1, egen.latent_dim(), root.split(2 * t + 1));
        Mat levm(1, 11);
        for (int c = 0; c < 11; ++c) levm.at(0, c) = lev[c];
        Mat d10 = egen.delta(z, levm, ds.samples);
        std::vector<double> d = full_deltas(d10, 0);
        std::vector<double> next;
        try {
            next = apply_star(lev, d, eqv);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " at step " + std::to_string(t));
        }
        for (int c = 0; c < 11; ++c) {
            traj.deltas.at(t, c) = d[c];
            traj.states.at(t + 1, c) = next[c];
        }
        for (int c = 0; c < 7; ++c) traj.ds_used.at(t, c) = ds.samples.at(0, c);
        lev = std::move(next);
    }
    return traj;
}

PortfolioRun portfolio_simulate(const std::vector<std::vector<double>>& init_levels,
                                const std::vector<ScenarioBox>& boxes, const StateGenerator& sgen,
                                const EquityGenerator& egen, const std::vector<FeatureSpec>& eqv,
                                const SimConfig& cfg, const LatentEncoder* encoder,
                                const Mat* pool) {
    const int K = static_cast<int>(init_levels.size());
    const int p = static_cast<int>(boxes.size());
    if (K < 1) throw DataError("portfolio: need at least one instrument");
    for (const auto& lv : init_levels)
        if (lv.size() != 11) throw DataError("portfolio: initial states must have 11 levels");
    if (cfg.latent_count < 1 || cfg.state_count < 1)
        throw ConfigError("portfolio: latent and state draw counts must be positive");

    PortfolioRun run;
    run.n_t = cfg.latent_count * cfg.state_count;
    run.boxes = boxes;
    run.shared_pairs = cfg.share_pairs_across_instruments;

    // one MCMC pass per unique box
    std::vector<ScenarioBox> unique_boxes;
    std::vector<int> box_slot(p, -1);
    for (int t = 0; t < p; ++t) {
        for (std::size_t u = 0; u < unique_boxes.size(); ++u)
            if (unique_boxes[u] == boxes[t]) box_slot[t] = static_cast<int>(u);
        if (box_slot[t] < 0) {
            box_slot[t] = static_cast<int>(unique_boxes.size());
            unique_boxes.push_back(boxes[t]);
        }
    }
    Rng root = Rng(cfg.seed).split(0x9f01);
    std::vector<Mat> s_draws;
    for (std::size_t u = 0; u < unique_boxes.size(); ++u) {
        ChainConfig chain = cfg.chain;
        chain.seed = root.split(0x100 + u).key();
        McmcResult r =
            mh_sample_conditioned(sgen, unique_boxes[u], cfg.state_count, chain, encoder, pool);
        s_draws.push_back(std::move(r.samples));
        ++run.mcmc_passes;
    }

    run.trajectories.assign(K, {});
    for (int k = 0; k < K; ++k) {
        run.trajectories[k].assign(run.n_t, {});
        for (int m = 0; m < run.n_t; ++m) {
            Trajectory& tr = run.trajectories[k][m];
            tr.instrument = k;
            tr.states = Mat(p + 1, 11);
            tr.deltas = Mat(p, 11);
            tr.ds_used = Mat(p, 7);
            for (int c = 0; c < 11; ++c) tr.states.at(0, c) = init_levels[k][c];
        }
    }

    for (int t = 0; t < p; ++t) {
        StepDraws step;
        step.z = normal_mat(cfg.latent_count, egen.latent_dim(), root.split(0x2000 + t));
        step.s = s_draws[box_slot[t]];

        // without-replacement pair assignment: a permutation of the Cartesian
        // product, shared across instruments or drawn per instrument
        const int lists = cfg.share_pairs_across_instruments ? 1 : K;
        step.pairs.assign(lists, std::vector<PairDraw>(run.n_t));
        for (int l = 0; l < lists; ++l) {
            std::vector<int> perm(run.n_t);
            for (int i = 0; i < run.n_t; ++i) perm[i] = i;
            Rng rp = root.split(0x3000 + t).split(l);
            for (int i = run.n_t - 1; i > 0; --i) {
                const int j = static_cast<int>(rp.below(static_cast<std::uint64_t>(i + 1)));
                std::swap(perm[i], perm[j]);
            }
            for (int m = 0; m < run.n_t; ++m)
                step.pairs[l][m] = {perm[m] / cfg.state_count, perm[m] % cfg.state_count};
        }

        // advance every live trajectory, batching the generator calls
        for (int k = 0; k < K; ++k) {
            const auto& pairs = step.pairs[cfg.share_pairs_across_instruments ? 0 : k];
            std::vector<int> live;
            for (int m = 0; m < run.n_t; ++m)
                if (!run.trajectories[k][m].aborted) live.push_back(m);
            if (live.empty()) continue;
            const int n = static_cast<int>(live.size());
            Mat z(n, egen.latent_dim());
            Mat lev(n, 11);
            Mat ds(n, 7);
            for (int i = 0; i < n; ++i) {
                const int m = live[i];
                const PairDraw& pd = pairs[m];
                for (int c = 0; c < egen.latent_dim(); ++c) z.at(i, c) = step.z.at(pd.z_index, c);
                for (int c = 0; c < 7; ++c) ds.at(i, c) = step.s.at(pd.s_index, c);
                for (int c = 0; c < 11; ++c)
                    lev.at(i, c) = run.trajectories[k][m].states.at(t, c);
            }
            Mat d10 = egen.delta(z, lev, ds);
            for (int i = 0; i < n; ++i) {
                const int m = live[i];
                Trajectory& tr = run.trajectories[k][m];
                std::vector<double> d = full_deltas(d10, i);
                std::vector<double> cur = lev.row_vec(i);
                std::vector<double> next;
                try {
                    next = apply_star(cur, d, eqv);
                } catch (const NumericError&) {
                    tr.aborted = true;
                    tr.abort_step = t;
                    ++run.aborted_count;
                    continue;
                }
                for (int c = 0; c < 11; ++c) {
                    tr.deltas.at(t, c) = d[c];
                    tr.states.at(t + 1, c) = next[c];
                }
                for (int c = 0; c < 7; ++c) tr.ds_used.at(t, c) = ds.at(i, c);
            }
        }
        run.steps.push_back(std::move(step));
    }
    return run;
}

BinnedEstimate binned_estimate(const PortfolioRun& run, int feature, int time,
                               const std::vector<double>& edges, int instrument) {
    if (edges.size() < 2) throw ConfigError("binned_estimate: need at least one bin");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1]))
            throw ConfigError("binned_estimate: edges must be strictly increasing");
    if (instrument < 0 || instrument >= static_cast<int>(run.trajectories.size()))
        throw ConfigError("binned_estimate: instrument out of range");
    if (time < 0 || time >= static_cast<int>(run.steps.size()))
        throw ConfigError("binned_estimate: time step out of range");
    if (feature < 0 || feature >= 11)
        throw ConfigError("binned_estimate: feature out of range");

    const int bins = static_cast<int>(edges.size()) - 1;
    BinnedEstimate est;
    est.feature = feature;
    est.time = time;
    est.edges = edges;
    est.mean.assign(bins, 0.0);
    est.stderr_.assign(bins, 0.0);
    const double n_t = static_cast<double>(run.n_t);
    for (const Trajectory& tr : run.trajectories[instrument]) {
        if (tr.aborted && tr.abort_step <= time) continue;
        const double v = tr.deltas.at(time, feature);
        for (int b = 0; b < bins; ++b)
            if (v >= edges[b] && v <= edges[b + 1]) {
                est.mean[b] += 1.0;
                break;  // closed bins; boundary values count once, leftmost
            }
    }
    for (int b = 0; b < bins; ++b) {
        est.mean[b] /= n_t;
        est.stderr_[b] = std::sqrt(est.mean[b] * (1.0 - est.mean[b]) / n_t);
    }
    return est;
}

std::vector<double> default_bin_edges(const PortfolioRun& run, int feature, int time, int bins,
                                      int instrument) {
    std::vector<double> values;
    for (const Trajectory& tr : run.trajectories.at(instrument)) {
        if (tr.aborted && tr.abort_step <= time) continue;
        values.push_back(tr.deltas.at(time, feature));
    }
    if (values.size() < 2) throw DataError("default_bin_edges: not enough live trajectories");
    std::sort(values.begin(), values.end());
    auto pct = [&](double q) {
        const double pos = q * (values.size() - 1);
        const std::size_t i = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(i);
        return i + 1 < values.size() ? values[i] * (1.0 - frac) + values[i + 1] * frac
                                     : values[i];
    };
    double lo = pct(0.005), hi = pct(0.995);
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    std::vector<double> edges(bins + 1);
    for (int b = 0; b <= bins; ++b) edges[b] = lo + (hi - lo) * b / bins;
    return edges;
}

}  // namespace scengen
