#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scengen/losses.hpp"
#include "scengen/oracle.hpp"
#include "scengen/trainer.hpp"

using namespace scengen;

namespace {

Tensor const_scores(Tape& tape, int n, double v) {
    return tape.constant(Tensor({n, 1}, std::vector<double>(n, v)));
}

Mat tiny_state_data(int n, std::uint64_t seed) {
    Rng rng(seed);
    Mat m(n, 7);
    for (auto& v : m.data) v = 0.02 * rng.normal();
    return m;
}

Mat tiny_cgan_data(int n, std::uint64_t seed) {
    Rng rng(seed);
    Mat m(n, 29);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < 11; ++c) m.at(r, c) = 50.0 + rng.normal();
        for (int c = 11; c < 29; ++c) m.at(r, c) = 0.05 * rng.normal();
    }
    return m;
}

}  // namespace

TEST_CASE("hinge: saturated scores give zero discriminator loss") {
    Tape tape;
    HingeLosses hl = hinge_losses(tape, const_scores(tape, 5, 1.0), const_scores(tape, 5, -1.0));
    CHECK(hl.d_loss.value() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("hinge: generator loss is minus the mean fake score") {
    Tape tape;
    HingeLosses hl = hinge_losses(tape, const_scores(tape, 4, 0.3), const_scores(tape, 4, 0.7));
    CHECK(hl.g_loss.value() == doctest::Approx(-0.7).epsilon(1e-14));
}

TEST_CASE("hinge: zero scores cost one per term") {
    Tape tape;
    HingeLosses hl = hinge_losses(tape, const_scores(tape, 3, 0.0), const_scores(tape, 3, 0.0));
    CHECK(hl.d_loss.value() == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("hinge rejects mismatched batches") {
    Tape tape;
    CHECK_THROWS_AS(hinge_losses(tape, const_scores(tape, 3, 0.0), const_scores(tape, 4, 0.0)),
                    ShapeError);
}

TEST_CASE("cycle loss vanishes for exact mutual inverses") {
    Tape tape;
    Rng rng(3);
    Tensor x({4, 7});
    for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    Tensor z({4, 8});
    for (int i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
    // g: pad 7 -> 8 with zero; e: truncate 8 -> 7 would NOT be inverses both
    // ways, so use the identity on matching dims instead
    NetFn g = [&](const Tensor& t) { return t; };
    NetFn e = [&](const Tensor& t) { return t; };
    Tensor xc = tape.constant(x);
    CHECK(cycle_loss(tape, xc, xc, g, e).value() == doctest::Approx(0.0));
}

TEST_CASE("cycle loss of the zero maps is 2 with per-element means") {
    Tape tape;
    Tensor x = tape.constant(Tensor({1, 7}, std::vector<double>(7, 1.0)));
    Tensor z = tape.constant(Tensor({1, 8}, std::vector<double>(8, 1.0)));
    NetFn zero7 = [&](const Tensor& t) {
        return tape.constant(Tensor({t.shape()[0], 7}, 0.0));
    };
    NetFn zero8 = [&](const Tensor& t) {
        return tape.constant(Tensor({t.shape()[0], 8}, 0.0));
    };
    // G(E(x)) = 0 in data space; E(G(z)) = 0 in latent space
    NetFn g = [&](const Tensor& t) { return zero7(t); };
    NetFn e = [&](const Tensor& t) { return zero8(t); };
    CHECK(cycle_loss(tape, x, z, g, e).value() == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("cycle loss is nonnegative for random maps") {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        Tape tape;
        Tensor w1({7, 8});
        Tensor w2({8, 7});
        for (int i = 0; i < w1.size(); ++i) w1.data()[i] = rng.normal();
        for (int i = 0; i < w2.size(); ++i) w2.data()[i] = rng.normal();
        Tensor tw1 = tape.constant(w1);
        Tensor tw2 = tape.constant(w2);
        NetFn g = [&](const Tensor& z) { return tape.matmul(z, tw1, false, true); };
        NetFn e = [&](const Tensor& x) { return tape.matmul(x, tw2, false, true); };
        Tensor x({3, 7});
        Tensor z({3, 8});
        for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
        for (int i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
        CHECK(cycle_loss(tape, tape.constant(x), tape.constant(z), g, e).value() >= 0.0);
    }
}

TEST_CASE("gradient penalty: unit-norm linear critic has zero penalty") {
    Tape tape;
    Rng rng(5);
    std::vector<double> w(6);
    double n2 = 0.0;
    for (auto& v : w) {
        v = rng.normal();
        n2 += v * v;
    }
    for (auto& v : w) v /= std::sqrt(n2);
    Tensor wt = tape.constant(Tensor({6, 1}, w));
    NetFn d = [&](const Tensor& x) { return tape.matmul(x, wt); };
    Tensor xr = tape.constant(Tensor({4, 6}, 0.3));
    Tensor xf = tape.constant(Tensor({4, 6}, -0.2));
    Rng gp_rng(9);
    CHECK(gradient_penalty(tape, d, xr, xf, 10.0, gp_rng).value() ==
          doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("gradient penalty: constant critic pays lambda") {
    Tape tape;
    NetFn d = [&](const Tensor& x) {
        return tape.constant(Tensor({x.shape()[0], 1}, 0.42));
    };
    Tensor xr = tape.constant(Tensor({3, 2}, 1.0));
    Tensor xf = tape.constant(Tensor({3, 2}, 0.0));
    Rng rng(1);
    CHECK(gradient_penalty(tape, d, xr, xf, 10.0, rng).value() == doctest::Approx(10.0));
}

TEST_CASE("gradient penalty: slope-two critic pays lambda") {
    Tape tape;
    Tensor wt = tape.constant(Tensor({1, 1}, {2.0}));
    NetFn d = [&](const Tensor& x) { return tape.matmul(x, wt); };
    Tensor xr = tape.constant(Tensor({5, 1}, 0.7));
    Tensor xf = tape.constant(Tensor({5, 1}, -0.1));
    Rng rng(2);
    // gradient norm is 2 everywhere, so the penalty is lambda * (2-1)^2
    CHECK(gradient_penalty(tape, d, xr, xf, 3.0, rng).value() == doctest::Approx(3.0));
}

TEST_CASE("gradient penalty is differentiable in the critic weights") {
    Rng rng(11);
    Tensor w0({3, 1});
    for (int i = 0; i < 3; ++i) w0.data()[i] = 0.5 + 0.1 * rng.normal();
    Tensor xr0({4, 3});
    Tensor xf0({4, 3});
    for (int i = 0; i < xr0.size(); ++i) xr0.data()[i] = rng.normal();
    for (int i = 0; i < xf0.size(); ++i) xf0.data()[i] = rng.normal();

    auto penalty_at = [&](const Tensor& wv, bool want_grad, Tensor* grad_out) {
        Tape tape;
        Tensor w = want_grad ? tape.watch(wv) : tape.constant(wv);
        NetFn d = [&](const Tensor& x) { return tape.matmul(x, w); };
        Rng gp_rng(77);  // same interpolation draws on every call
        Tensor pen = gradient_penalty(tape, d, tape.constant(xr0), tape.constant(xf0), 10.0,
                                      gp_rng);
        if (want_grad) {
            tape.backward(pen);
            *grad_out = tape.grad(w);
        }
        return pen.value();
    };

    Tensor analytic;
    penalty_at(w0, true, &analytic);
    const double h = 1e-6;
    for (int i = 0; i < 3; ++i) {
        Tensor up = w0.clone();
        up.data()[i] += h;
        Tensor dn = w0.clone();
        dn.data()[i] -= h;
        const double fd = (penalty_at(up, false, nullptr) - penalty_at(dn, false, nullptr)) /
                          (2.0 * h);
        CHECK(std::fabs(fd - analytic.at(i)) / std::max(1.0, std::fabs(fd)) < 1e-5);
    }
}

TEST_CASE("wgan-gp discriminator loss decomposes term by term") {
    Tape tape;
    Rng rng(23);
    Tensor wt({4, 1});
    for (int i = 0; i < 4; ++i) wt.data()[i] = rng.normal();
    Tensor w = tape.constant(wt);
    NetFn d = [&](const Tensor& x) { return tape.matmul(x, w); };
    Tensor xr({6, 4});
    Tensor xf({6, 4});
    for (int i = 0; i < xr.size(); ++i) xr.data()[i] = rng.normal();
    for (int i = 0; i < xf.size(); ++i) xf.data()[i] = rng.normal();
    Tensor xrc = tape.constant(xr), xfc = tape.constant(xf);

    Tensor d_real = d(xrc);
    Tensor d_fake = d(xfc);
    HingeLosses wl = wasserstein_losses(tape, d_real, d_fake);
    Rng gp_rng(31);
    Tensor gp = gradient_penalty(tape, d, xrc, xfc, 7.5, gp_rng);
    const double total = tape.add(wl.d_loss, gp).value();

    // independent term computation
    double mr = 0.0, mf = 0.0;
    for (int i = 0; i < 6; ++i) {
        double sr = 0.0, sf = 0.0;
        for (int c = 0; c < 4; ++c) {
            sr += xr.at(i * 4 + c) * wt.at(c);
            sf += xf.at(i * 4 + c) * wt.at(c);
        }
        mr += sr / 6.0;
        mf += sf / 6.0;
    }
    double wnorm = 0.0;
    for (int c = 0; c < 4; ++c) wnorm += wt.at(c) * wt.at(c);
    wnorm = std::sqrt(wnorm);
    const double pen = 7.5 * (wnorm - 1.0) * (wnorm - 1.0);
    CHECK(total == doctest::Approx(mf - mr + pen).epsilon(1e-12));
}

TEST_CASE("train config invariants") {
    TrainConfig cfg;
    cfg.cycle_alpha = 1.5;
    CHECK_THROWS_AS(cfg.validate(), NumericError);
    cfg.cycle_alpha = 0.5;
    cfg.batch = 1;
    CHECK_THROWS_AS(cfg.validate(), NumericError);
    cfg.batch = 2;
    cfg.gp_lambda = -1.0;
    CHECK_THROWS_AS(cfg.validate(), NumericError);
}

TEST_CASE("bigan: alpha zero keeps the cycle history identically zero") {
    TrainConfig cfg;
    cfg.steps = 3;
    cfg.batch = 4;
    cfg.cycle_alpha = 0.0;
    cfg.seed = 5;
    BiganResult res = train_bigan(tiny_state_data(64, 2), cfg);
    REQUIRE(res.state.history.size() == 3);
    for (const LossRecord& r : res.state.history) CHECK(r.cycle == 0.0);
    CHECK(res.state.sn_audited);
}

TEST_CASE("bigan: same seed and data give bit-identical parameters") {
    TrainConfig cfg;
    cfg.steps = 2;
    cfg.batch = 4;
    cfg.seed = 9;
    Mat data = tiny_state_data(32, 4);
    BiganResult a = train_bigan(data, cfg);
    BiganResult b = train_bigan(data, cfg);
    REQUIRE(a.gen_s.params().size() == b.gen_s.params().size());
    for (std::size_t p = 0; p < a.gen_s.params().size(); ++p)
        for (int i = 0; i < a.gen_s.params()[p].size(); ++i)
            CHECK(a.gen_s.params()[p].at(i) == b.gen_s.params()[p].at(i));
    for (std::size_t p = 0; p < a.disc_sz.params().size(); ++p)
        for (int i = 0; i < a.disc_sz.params()[p].size(); ++i)
            CHECK(a.disc_sz.params()[p].at(i) == b.disc_sz.params()[p].at(i));
}

TEST_CASE("bigan: a replayed step reproduces its loss record exactly") {
    TrainConfig cfg;
    cfg.steps = 4;
    cfg.batch = 4;
    cfg.seed = 21;
    BiganTrainer tr(tiny_state_data(48, 6), cfg);
    tr.step_once();
    tr.step_once();
    BiganTrainer::Snapshot snap = tr.snapshot();
    tr.step_once();
    const LossRecord recorded = tr.state().history.back();
    tr.restore(snap);
    tr.step_once();
    const LossRecord replayed = tr.state().history.back();
    CHECK(recorded.step == replayed.step);
    CHECK(recorded.d_loss == replayed.d_loss);
    CHECK(recorded.g_loss == replayed.g_loss);
    CHECK(recorded.cycle == replayed.cycle);
}

TEST_CASE("bigan: losses stay finite over wgan-gp steps too") {
    TrainConfig cfg;
    cfg.steps = 2;
    cfg.batch = 4;
    cfg.seed = 31;
    cfg.loss_mode = LossMode::WganGp;
    cfg.gp_lambda = 5.0;
    BiganResult res = train_bigan(tiny_state_data(32, 8), cfg);
    for (const LossRecord& r : res.state.history) {
        CHECK(std::isfinite(r.d_loss));
        CHECK(std::isfinite(r.g_loss));
    }
}

TEST_CASE("cgan: wrong column count is rejected") {
    Mat bad(10, 20, 0.0);
    TrainConfig cfg;
    cfg.steps = 1;
    CHECK_THROWS_AS(train_cgan(bad, cfg), ShapeError);
}

TEST_CASE("cgan: losses recorded and finite on a tiny run") {
    TrainConfig cfg;
    cfg.steps = 2;
    cfg.batch = 4;
    cfg.seed = 3;
    CganResult res = train_cgan(tiny_cgan_data(64, 12), cfg);
    REQUIRE(res.state.history.size() == 2);
    for (const LossRecord& r : res.state.history) {
        CHECK(std::isfinite(r.d_loss));
        CHECK(std::isfinite(r.g_loss));
    }
    CHECK(res.state.sn_audited);
}

TEST_CASE("cgan slices pick levels, first ten transitions and state transitions") {
    Mat d(1, 29);
    for (int c = 0; c < 29; ++c) d.at(0, c) = c;
    CganSlices s = slice_cgan_rows(d);
    CHECK(s.cond.at(0, 0) == 0.0);
    CHECK(s.cond.at(0, 10) == 10.0);
    CHECK(s.cond.at(0, 11) == 22.0);
    CHECK(s.cond.at(0, 17) == 28.0);
    CHECK(s.target.at(0, 0) == 11.0);
    CHECK(s.target.at(0, 9) == 20.0);
}
