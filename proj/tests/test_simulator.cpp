#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "scengen/rng.hpp"
#include "scengen/simulator.hpp"

using namespace scengen;

namespace {

std::vector<FeatureSpec> eqv_specs() { return default_eqv_features(); }

std::vector<double> base_levels() {
    return {100.0, 5000.0, 55.0, 3.0, 0.25, 0.30, 0.35, 0.40, 0.0, 0.0, 0.22};
}

// deterministic linear-Gaussian stub: delta = Wz z + Ws ds + b
class LinearEquityStub : public EquityGenerator {
public:
    LinearEquityStub(double z_scale, double s_scale, double bias)
        : z_scale_(z_scale), s_scale_(s_scale), bias_(bias) {}
    int latent_dim() const override { return 8; }
    Mat delta(const Mat& z, const Mat& levels, const Mat& ds) const override {
        (void)levels;
        Mat out(z.rows, 10, 0.0);
        for (int r = 0; r < z.rows; ++r)
            for (int c = 0; c < 10; ++c) {
                double v = bias_;
                for (int j = 0; j < 8; ++j) v += z_scale_ * w_z(c, j) * z.at(r, j);
                for (int j = 0; j < 7; ++j) v += s_scale_ * w_s(c, j) * ds.at(r, j);
                out.at(r, c) = v;
            }
        // shrink transitions for the relative-kind features so levels stay positive
        for (int r = 0; r < z.rows; ++r) {
            out.at(r, 0) *= 1e-3;
            out.at(r, 1) *= 1e-3;
        }
        return out;
    }
    // fixed pseudo-random unit-ish weights
    static double w_z(int c, int j) { return std::sin(1.0 + 3.0 * c + 7.0 * j) * 0.5; }
    static double w_s(int c, int j) { return std::cos(2.0 + 5.0 * c + 11.0 * j) * 0.5; }

private:
    double z_scale_, s_scale_, bias_;
};

class ZeroEquityStub : public EquityGenerator {
public:
    int latent_dim() const override { return 8; }
    Mat delta(const Mat& z, const Mat&, const Mat&) const override {
        return Mat(z.rows, 10, 0.0);
    }
};

SimConfig quick_sim(std::uint64_t seed) {
    SimConfig cfg;
    cfg.seed = seed;
    cfg.chain.proposal_sigma = 0.5;
    cfg.chain.burn_in = 50;
    cfg.chain.thinning = 2;
    cfg.chain.chains = 2;
    cfg.chain.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("star operator: relative and absolute forms") {
    std::vector<FeatureSpec> specs = eqv_specs();
    std::vector<double> lv = base_levels();
    std::vector<double> d(11, 0.0);
    d[0] = 0.10;   // price, relative
    d[4] = -0.05;  // correlation, absolute
    std::vector<double> out = apply_star(lv, d, specs);
    CHECK(out[0] == doctest::Approx(110.0));
    CHECK(out[4] == doctest::Approx(0.20));
}

TEST_CASE("star rejects transitions that kill a positive level") {
    std::vector<FeatureSpec> specs = eqv_specs();
    std::vector<double> lv = base_levels();
    std::vector<double> d(11, 0.0);
    d[0] = -1.0;
    CHECK_THROWS_AS(apply_star(lv, d, specs), NumericError);
}

TEST_CASE("star and compute_transition are exact inverses on random vectors") {
    std::vector<FeatureSpec> specs = eqv_specs();
    Rng rng(5);
    double worst = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
        std::vector<double> a(11), b(11), d(11);
        for (int f = 0; f < 11; ++f) {
            if (specs[f].transition == TransitionKind::Relative) {
                a[f] = std::exp(rng.normal()) * 100.0;
                b[f] = std::exp(rng.normal()) * 100.0;
            } else {
                a[f] = rng.normal();
                b[f] = rng.normal();
            }
            d[f] = compute_transition(a[f], b[f], specs[f].transition);
        }
        std::vector<double> back = apply_star(a, d, specs);
        for (int f = 0; f < 11; ++f)
            worst = std::max(worst, std::fabs(back[f] - b[f]) /
                                        std::max(1.0, std::fabs(b[f])));
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("single trajectory with depth zero is just the initial state") {
    IdentityStateGenerator sgen;
    ZeroEquityStub egen;
    Trajectory tr = single_trajectory(base_levels(), {}, sgen, egen, eqv_specs(), quick_sim(1));
    CHECK(tr.states.rows == 1);
    for (int c = 0; c < 11; ++c) CHECK(tr.states.at(0, c) == base_levels()[c]);
}

TEST_CASE("zero transitions give a constant trajectory") {
    IdentityStateGenerator sgen;
    ZeroEquityStub egen;
    std::vector<ScenarioBox> boxes(3, ScenarioBox::unbounded(7));
    Trajectory tr =
        single_trajectory(base_levels(), boxes, sgen, egen, eqv_specs(), quick_sim(2));
    REQUIRE(tr.states.rows == 4);
    for (int t = 0; t <= 3; ++t)
        for (int c = 0; c < 11; ++c) CHECK(tr.states.at(t, c) == base_levels()[c]);
}

TEST_CASE("trajectory replay: stored transitions reproduce the states bit-exactly") {
    IdentityStateGenerator sgen;
    LinearEquityStub egen(0.02, 0.02, 0.0);
    std::vector<ScenarioBox> boxes(3, ScenarioBox::unbounded(7));
    Trajectory tr =
        single_trajectory(base_levels(), boxes, sgen, egen, eqv_specs(), quick_sim(3));
    std::vector<double> lv = base_levels();
    for (int t = 0; t < 3; ++t) {
        lv = apply_star(lv, tr.deltas.row_vec(t), eqv_specs());
        for (int c = 0; c < 11; ++c) CHECK(lv[c] == tr.states.at(t + 1, c));
    }
    // and every used state transition satisfies its box
    for (int t = 0; t < 3; ++t) CHECK(boxes[t].contains(tr.ds_used.row(t), 7));
}

TEST_CASE("portfolio bookkeeping: 2x3 Cartesian product, each pair used once, shared") {
    IdentityStateGenerator sgen;
    LinearEquityStub egen(0.01, 0.01, 0.0);
    SimConfig cfg = quick_sim(7);
    cfg.latent_count = 2;
    cfg.state_count = 3;
    cfg.depth = 2;
    std::vector<ScenarioBox> boxes(2, ScenarioBox::unbounded(7));
    std::vector<std::vector<double>> init = {base_levels(), base_levels()};
    PortfolioRun run =
        portfolio_simulate(init, boxes, sgen, egen, eqv_specs(), cfg);
    CHECK(run.n_t == 6);
    REQUIRE(run.steps.size() == 2);
    for (const StepDraws& step : run.steps) {
        REQUIRE(step.pairs.size() == 1);  // shared across instruments
        std::set<std::pair<int, int>> seen;
        for (const PairDraw& pd : step.pairs[0]) seen.insert({pd.z_index, pd.s_index});
        CHECK(seen.size() == 6);
        for (int zi = 0; zi < 2; ++zi)
            for (int si = 0; si < 3; ++si) CHECK(seen.count({zi, si}) == 1);
    }
    // a single unique box means exactly one MCMC pass
    CHECK(run.mcmc_passes == 1);
}

TEST_CASE("trajectory m of both instruments uses the identical draw pair") {
    IdentityStateGenerator sgen;
    LinearEquityStub egen(0.01, 0.01, 0.0);
    SimConfig cfg = quick_sim(11);
    cfg.latent_count = 2;
    cfg.state_count = 2;
    cfg.depth = 1;
    std::vector<ScenarioBox> boxes(1, ScenarioBox::unbounded(7));
    std::vector<std::vector<double>> init = {base_levels(), base_levels()};
    PortfolioRun run = portfolio_simulate(init, boxes, sgen, egen, eqv_specs(), cfg);
    for (int m = 0; m < run.n_t; ++m)
        for (int c = 0; c < 7; ++c)
            CHECK(run.trajectories[0][m].ds_used.at(0, c) ==
                  run.trajectories[1][m].ds_used.at(0, c));
    // identical inputs plus a deterministic stub mean identical transitions
    for (int m = 0; m < run.n_t; ++m)
        for (int c = 0; c < 10; ++c)
            CHECK(run.trajectories[0][m].deltas.at(0, c) ==
                  run.trajectories[1][m].deltas.at(0, c));
}

TEST_CASE("per-instrument pair mode redraws the assignment") {
    IdentityStateGenerator sgen;
    LinearEquityStub egen(0.01, 0.01, 0.0);
    SimConfig cfg = quick_sim(13);
    cfg.latent_count = 3;
    cfg.state_count = 4;
    cfg.depth = 1;
    cfg.share_pairs_across_instruments = false;
    std::vector<ScenarioBox> boxes(1, ScenarioBox::unbounded(7));
    std::vector<std::vector<double>> init = {base_levels(), base_levels()};
    PortfolioRun run = portfolio_simulate(init, boxes, sgen, egen, eqv_specs(), cfg);
    REQUIRE(run.steps[0].pairs.size() == 2);
    // each instrument still exhausts the Cartesian product exactly once
    for (int k = 0; k < 2; ++k) {
        std::set<std::pair<int, int>> seen;
        for (const PairDraw& pd : run.steps[0].pairs[k]) seen.insert({pd.z_index, pd.s_index});
        CHECK(seen.size() == 12);
    }
}

TEST_CASE("repeated boxes trigger one mcmc pass per distinct box") {
    IdentityStateGenerator sgen;
    LinearEquityStub egen(0.01, 0.01, 0.0);
    SimConfig cfg = quick_sim(17);
    cfg.latent_count = 2;
    cfg.state_count = 2;
    cfg.depth = 4;
    ScenarioBox a = ScenarioBox::unbounded(7);
    ScenarioBox b = ScenarioBox::unbounded(7);
    b.lo[0] = 0.0;
    std::vector<ScenarioBox> boxes = {a, b, a, b};
    std::vector<std::vector<double>> init = {base_levels()};
    PortfolioRun run = portfolio_simulate(init, boxes, sgen, egen, eqv_specs(), cfg);
    CHECK(run.mcmc_passes == 2);
    // and every used ds satisfies the step's box
    for (int m = 0; m < run.n_t; ++m)
        for (int t = 0; t < 4; ++t)
            CHECK(boxes[t].contains(run.trajectories[0][m].ds_used.row(t), 7));
}

TEST_CASE("same seed and config give an identical portfolio run") {
    IdentityStateGenerator sgen;
    LinearEquityStub egen(0.02, 0.02, 0.0);
    SimConfig cfg = quick_sim(19);
    cfg.latent_count = 2;
    cfg.state_count = 3;
    cfg.depth = 2;
    std::vector<ScenarioBox> boxes(2, ScenarioBox::unbounded(7));
    std::vector<std::vector<double>> init = {base_levels()};
    PortfolioRun a = portfolio_simulate(init, boxes, sgen, egen, eqv_specs(), cfg);
    PortfolioRun b = portfolio_simulate(init, boxes, sgen, egen, eqv_specs(), cfg);
    for (int m = 0; m < a.n_t; ++m)
        for (std::size_t i = 0; i < a.trajectories[0][m].states.data.size(); ++i)
            CHECK(a.trajectories[0][m].states.data[i] == b.trajectories[0][m].states.data[i]);
}

TEST_CASE("binned estimate: point mass occupies a single bin") {
    IdentityStateGenerator sgen;
    ZeroEquityStub egen;
    SimConfig cfg = quick_sim(23);
    cfg.latent_count = 4;
    cfg.state_count = 2;
    cfg.depth = 1;
    std::vector<ScenarioBox> boxes(1, ScenarioBox::unbounded(7));
    std::vector<std::vector<double>> init = {base_levels()};
    PortfolioRun run = portfolio_simulate(init, boxes, sgen, egen, eqv_specs(), cfg);
    BinnedEstimate est = binned_estimate(run, 2, 0, {-1.0, -0.5, 0.5, 1.0});
    CHECK(est.mean[0] == 0.0);
    CHECK(est.mean[1] == 1.0);  // all transitions are exactly zero
    CHECK(est.mean[2] == 0.0);
}

TEST_CASE("binned estimate: a partition's means sum to one") {
    IdentityStateGenerator sgen;
    LinearEquityStub egen(1.0, 0.2, 0.0);
    SimConfig cfg = quick_sim(29);
    cfg.latent_count = 50;
    cfg.state_count = 4;
    cfg.depth = 1;
    std::vector<ScenarioBox> boxes(1, ScenarioBox::unbounded(7));
    std::vector<std::vector<double>> init = {base_levels()};
    PortfolioRun run = portfolio_simulate(init, boxes, sgen, egen, eqv_specs(), cfg);
    std::vector<double> edges = {-1e9, -0.5, 0.0, 0.5, 1e9};
    BinnedEstimate est = binned_estimate(run, 4, 0, edges);
    double total = 0.0;
    for (double m : est.mean) total += m;
    CHECK(total == doctest::Approx(1.0));
    for (double m : est.mean) {
        CHECK(m >= 0.0);
        CHECK(m <= 1.0);
    }
}

TEST_CASE("binned estimate matches the Gaussian law of an analytic stub") {
    // ds has weight zero so all randomness comes from the latent draws, and
    // the marginal law of each transition is exactly Gaussian
    IdentityStateGenerator sgen;
    LinearEquityStub egen(1.0, 0.0, 0.1);
    SimConfig cfg = quick_sim(31);
    cfg.latent_count = 2000;
    cfg.state_count = 1;
    cfg.depth = 1;
    std::vector<ScenarioBox> boxes(1, ScenarioBox::unbounded(7));
    std::vector<std::vector<double>> init = {base_levels()};

    const int feature = 5;
    double var = 0.0;
    for (int j = 0; j < 8; ++j) var += std::pow(LinearEquityStub::w_z(feature, j), 2);
    const double sd = std::sqrt(var);
    std::vector<double> edges;
    for (int b = 0; b <= 12; ++b) edges.push_back(0.1 + sd * (-3.0 + 0.5 * b));
    auto phi = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };

    int within = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SimConfig c2 = cfg;
        c2.seed = 1000 + seed;
        PortfolioRun run = portfolio_simulate(init, boxes, sgen, egen, eqv_specs(), c2);
        BinnedEstimate est = binned_estimate(run, feature, 0, edges);
        for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
            const double p =
                phi((edges[b + 1] - 0.1) / sd) - phi((edges[b] - 0.1) / sd);
            const double se = std::sqrt(p * (1 - p) / 2000.0);
            ++total;
            if (std::fabs(est.mean[b] - p) <= 3.0 * se) ++within;
        }
    }
    CHECK(static_cast<double>(within) / total >= 0.95);
}

TEST_CASE("positivity violations abort only the offending trajectory") {
    // transitions of -1 on the price dimension kill relative-kind levels
    class KillerStub : public EquityGenerator {
    public:
        int latent_dim() const override { return 8; }
        Mat delta(const Mat& z, const Mat&, const Mat&) const override {
            Mat out(z.rows, 10, 0.0);
            for (int r = 0; r < z.rows; ++r)
                out.at(r, 0) = z.at(r, 0) > 0.6 ? -1.0 : 0.01;  // some trajectories die
            return out;
        }
    } egen;
    IdentityStateGenerator sgen;
    SimConfig cfg = quick_sim(41);
    cfg.latent_count = 10;
    cfg.state_count = 2;
    cfg.depth = 2;
    std::vector<ScenarioBox> boxes(2, ScenarioBox::unbounded(7));
    std::vector<std::vector<double>> init = {base_levels()};
    PortfolioRun run = portfolio_simulate(init, boxes, sgen, egen, eqv_specs(), cfg);
    CHECK(run.aborted_count > 0);
    CHECK(run.aborted_count < run.n_t);
    int live = 0;
    for (const Trajectory& tr : run.trajectories[0])
        if (!tr.aborted) ++live;
    CHECK(live == run.n_t - run.aborted_count);
    // estimator normalizes by n_t, so a partition's mass drops below one;
    // a trajectory aborted later than t still counts at t
    int counted_at_0 = 0;
    for (const Trajectory& tr : run.trajectories[0])
        if (!tr.aborted || tr.abort_step > 0) ++counted_at_0;
    BinnedEstimate est = binned_estimate(run, 2, 0, {-1e9, 0.0, 1e9});
    double total = 0.0;
    for (double m : est.mean) total += m;
    CHECK(total <= 1.0);
    CHECK(total == doctest::Approx(static_cast<double>(counted_at_0) / run.n_t));

    // the single-trajectory form raises instead, naming the step
    SimConfig cfg1 = quick_sim(43);
    bool threw = false;
    for (std::uint64_t s = 0; s < 30 && !threw; ++s) {
        cfg1.seed = 100 + s;
        try {
            single_trajectory(base_levels(), boxes, sgen, egen, eqv_specs(), cfg1);
        } catch (const NumericError& e) {
            threw = true;
            CHECK(std::string(e.what()).find("at step") != std::string::npos);
        }
    }
    CHECK(threw);
}

TEST_CASE("default bin edges span the central mass") {
    IdentityStateGenerator sgen;
    LinearEquityStub egen(1.0, 0.3, 0.0);
    SimConfig cfg = quick_sim(37);
    cfg.latent_count = 100;
    cfg.state_count = 2;
    cfg.depth = 1;
    std::vector<ScenarioBox> boxes(1, ScenarioBox::unbounded(7));
    std::vector<std::vector<double>> init = {base_levels()};
    PortfolioRun run = portfolio_simulate(init, boxes, sgen, egen, eqv_specs(), cfg);
    std::vector<double> edges = default_bin_edges(run, 3, 0);
    CHECK(edges.size() == 31);
    for (std::size_t i = 1; i < edges.size(); ++i) CHECK(edges[i] > edges[i - 1]);
}
