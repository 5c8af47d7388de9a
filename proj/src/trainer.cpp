#include "scengen/trainer.hpp"

#include <cmath>
#include <fstream>

namespace scengen {

void TrainConfig::validate() const {
    if (cycle_alpha < 0.0 || cycle_alpha > 1.0)
        throw NumericError("train config: cycle weight must lie in [0,1]");
    if (gp_lambda < 0.0) throw NumericError("train config: gradient-penalty weight must be >= 0");
    if (batch < 2) throw NumericError("train config: batch size must be >= 2");
    if (steps < 0) throw NumericError("train config: negative step count");
    if (lr_d <= 0.0 || lr_g <= 0.0) throw NumericError("train config: learning rates must be > 0");
    if (d_steps_per_g < 1) throw NumericError("train config: d_steps_per_g must be >= 1");
}

AffineMap AffineMap::fit(const Mat& data) {
    AffineMap a;
    a.mean.assign(data.cols, 0.0);
    a.scale.assign(data.cols, 1.0);
    if (data.rows == 0) return a;
    for (int c = 0; c < data.cols; ++c) {
        double s = 0.0;
        for (int r = 0; r < data.rows; ++r) s += data.at(r, c);
        a.mean[c] = s / data.rows;
        double q = 0.0;
        for (int r = 0; r < data.rows; ++r) {
            const double d = data.at(r, c) - a.mean[c];
            q += d * d;
        }
        a.scale[c] = std::max(std::sqrt(q / data.rows), 1e-9);
    }
    return a;
}

AffineMap AffineMap::identity(int dim) {
    AffineMap a;
    a.mean.assign(dim, 0.0);
    a.scale.assign(dim, 1.0);
    return a;
}

Mat AffineMap::apply(const Mat& m) const {
    Mat out = m;
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) out.at(r, c) = (m.at(r, c) - mean[c]) / scale[c];
    return out;
}

Mat AffineMap::invert(const Mat& m) const {
    Mat out = m;
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) out.at(r, c) = m.at(r, c) * scale[c] + mean[c];
    return out;
}

std::vector<double> AffineMap::apply_row(const std::vector<double>& v) const {
    std::vector<double> out(v.size());
    for (std::size_t c = 0; c < v.size(); ++c) out[c] = (v[c] - mean[c]) / scale[c];
    return out;
}

std::vector<double> AffineMap::invert_row(const std::vector<double>& v) const {
    std::vector<double> out(v.size());
    for (std::size_t c = 0; c < v.size(); ++c) out[c] = v[c] * scale[c] + mean[c];
    return out;
}

void export_loss_history(const TrainerState& state, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write loss history to " + path);
    f << "step,term,value\n";
    char buf[64];
    auto emit = [&](int step, const char* term, double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        f << step << ',' << term << ',' << buf << '\n';
    };
    for (const LossRecord& r : state.history) {
        emit(r.step, "d_loss", r.d_loss);
        emit(r.step, "g_loss", r.g_loss);
        emit(r.step, "cycle", r.cycle);
    }
}

AdamState clone_adam(const AdamState& s) {
    AdamState c = s;
    c.m.clear();
    c.v.clear();
    for (const Tensor& t : s.m) c.m.push_back(t.clone());
    for (const Tensor& t : s.v) c.v.push_back(t.clone());
    return c;
}

namespace {

Mat sample_rows(const Mat& data, int batch, Rng rng) {
    Mat out(batch, data.cols);
    for (int i = 0; i < batch; ++i) {
        const int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(data.rows)));
        for (int c = 0; c < data.cols; ++c) out.at(i, c) = data.at(r, c);
    }
    return out;
}

Tensor normal_batch(int batch, int dim, Rng rng) {
    Tensor t({batch, dim});
    for (int i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
    return t;
}

Tensor to_tensor(const Mat& m) { return Tensor({m.rows, m.cols}, m.data); }

std::vector<Tensor> concat_params(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    std::vector<Tensor> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

constexpr std::uint64_t kStreamBatch = 0;
constexpr std::uint64_t kStreamLatentD = 1;
constexpr std::uint64_t kStreamLatentG = 2;
constexpr std::uint64_t kStreamGp = 3;

}  // namespace

// ---- BiGAN -------------------------------------------------------------------

BiganTrainer::BiganTrainer(const Mat& d_s, TrainConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (d_s.cols != 7) throw ShapeError("train_bigan: dataset rows must be 7-dim transitions");
    if (d_s.rows < 2) throw ShapeError("train_bigan: dataset too small");
    affine_ = AffineMap::fit(d_s);
    data_std_ = affine_.apply(d_s);
    gen_s_ = build_network(gen_s_spec(), cfg_.seed + 0x51);
    enc_z_ = build_network(enc_z_spec(), cfg_.seed + 0x52);
    disc_sz_ = build_network(disc_sz_spec(), cfg_.seed + 0x53);
    adam_d_.lr = cfg_.lr_d;
    adam_d_.beta1 = cfg_.beta1;
    adam_d_.beta2 = cfg_.beta2;
    adam_d_.init(disc_sz_.params());
    adam_g_.lr = cfg_.lr_g;
    adam_g_.beta1 = cfg_.beta1;
    adam_g_.beta2 = cfg_.beta2;
    adam_g_.init(concat_params(gen_s_.params(), enc_z_.params()));
}

void BiganTrainer::step_once() {
    const int t = state_.step;
    const int B = cfg_.batch;
    Rng rstep = Rng(cfg_.seed).split(0xb16a).split(static_cast<std::uint64_t>(t));
    const bool wgan = cfg_.loss_mode == LossMode::WganGp;

    double d_loss_val = 0.0;

    // ---- discriminator step(s)
    for (int ds = 0; ds < cfg_.d_steps_per_g; ++ds) {
        Rng rsub = rstep.split(0x10 + ds);
        Mat xb = sample_rows(data_std_, B, rsub.split(kStreamBatch));
        Tensor z = normal_batch(B, 8, rsub.split(kStreamLatentD));

        Tape& tape = tape_d_;
        tape.reset();
        BindOptions dopt;
        dopt.requires_grad = true;
        dopt.mode = Mode::Train;
        dopt.sn_power_iters = wgan ? 0 : 1;
        dopt.sn_sigma_fixed = wgan ? std::optional<std::vector<double>>(
                                         std::vector<double>(disc_sz_.sn_states().size(), 1.0))
                                   : std::nullopt;
        Binding bd = disc_sz_.bind(tape, dopt);

        BindOptions gopt;
        gopt.requires_grad = false;
        gopt.mode = Mode::Train;
        Binding bg = gen_s_.bind(tape, gopt);
        Binding be = enc_z_.bind(tape, gopt);

        Tensor xt = tape.constant(to_tensor(xb));
        Tensor zt = tape.constant(z);
        Tensor fake_x = gen_s_.forward(bg, {zt}).detached();
        Tensor enc = enc_z_.forward(be, {xt}).detached();

        Tensor d_real = disc_sz_.forward(bd, {xt, tape.constant(enc)});
        Tensor d_fake = disc_sz_.forward(bd, {tape.constant(fake_x), zt});

        Tensor loss;
        if (wgan) {
            HingeLosses wl = wasserstein_losses(tape, d_real, d_fake);
            Rng rgp = rsub.split(kStreamGp);
            NetFn dfn = [&](const Tensor& xin) {
                Tensor e2 = tape.constant(enc);
                return disc_sz_.forward(bd, {xin, e2});
            };
            Tensor gp = gradient_penalty(tape, dfn, xt, tape.constant(fake_x), cfg_.gp_lambda, rgp);
            loss = tape.add(wl.d_loss, gp);
        } else {
            loss = hinge_losses(tape, d_real, d_fake).d_loss;
        }
        d_loss_val = loss.value();
        if (!wgan) state_.sn_audited = state_.sn_audited && bd.spectral_applied;
        tape.backward(loss);
        std::vector<Tensor> grads = disc_sz_.grads(bd);
        clip_grad_norm(grads, cfg_.grad_clip);
        adam_step(disc_sz_.params(), grads, adam_d_);
    }

    // ---- generator/encoder step
    Rng rg = rstep.split(0x20);
    Mat xb = sample_rows(data_std_, B, rg.split(kStreamBatch));
    Tensor z = normal_batch(B, 8, rg.split(kStreamLatentG));

    Tape& tape = tape_g_;
    tape.reset();
    BindOptions gopt;
    gopt.requires_grad = true;
    gopt.mode = Mode::Train;
    Binding bg = gen_s_.bind(tape, gopt);
    Binding be = enc_z_.bind(tape, gopt);

    BindOptions dopt;
    dopt.requires_grad = false;
    dopt.mode = Mode::Infer;
    dopt.sn_power_iters = 0;
    if (wgan)
        dopt.sn_sigma_fixed = std::vector<double>(disc_sz_.sn_states().size(), 1.0);
    else
        dopt.sn_frozen = true;
    Binding bd = disc_sz_.bind(tape, dopt);

    Tensor xt = tape.constant(to_tensor(xb));
    Tensor zt = tape.constant(z);
    Tensor fake_x = gen_s_.forward(bg, {zt});
    Tensor enc = enc_z_.forward(be, {xt});
    Tensor d_fake = disc_sz_.forward(bd, {fake_x, zt});
    Tensor d_real = disc_sz_.forward(bd, {xt, enc});

    // adversarial objective for the coupled pair: push fakes up, reals down
    Tensor l_adv = tape.sub(tape.reduce_mean(d_real), tape.reduce_mean(d_fake));
    double cycle_val = 0.0;
    Tensor loss;
    if (cfg_.cycle_alpha > 0.0) {
        // reconstructions reuse the forwards already on the tape
        Tensor x_rec = gen_s_.forward(bg, {enc});
        Tensor z_rec = enc_z_.forward(be, {fake_x});
        Tensor lc = tape.add(tape.mean_abs(tape.sub(xt, x_rec)),
                             tape.mean_abs(tape.sub(zt, z_rec)));
        cycle_val = lc.value();
        loss = tape.add(tape.scale(l_adv, 1.0 - cfg_.cycle_alpha),
                        tape.scale(lc, cfg_.cycle_alpha));
    } else {
        loss = l_adv;
    }
    const double g_loss_val = l_adv.value();
    tape.backward(loss);
    std::vector<Tensor> grads = concat_params(gen_s_.grads(bg), enc_z_.grads(be));
    clip_grad_norm(grads, cfg_.grad_clip);
    std::vector<Tensor> joint = concat_params(gen_s_.params(), enc_z_.params());
    adam_step(joint, grads, adam_g_);

    state_.history.push_back({t, d_loss_val, g_loss_val, cycle_val});
    state_.step += 1;
}

void BiganTrainer::run() {
    while (state_.step < cfg_.steps) {
        const int t = state_.step;
        bool ok = true;
        try {
            step_once();
        } catch (const NumericError&) {
            ok = false;
            state_.history.push_back({t, std::nan(""), std::nan(""), std::nan("")});
            state_.step += 1;
        }
        if (ok && !state_.history.empty()) {
            const LossRecord& r = state_.history.back();
            ok = std::isfinite(r.d_loss) && std::isfinite(r.g_loss) && std::isfinite(r.cycle);
        }
        if (ok)
            nonfinite_run_ = 0;
        else if (++nonfinite_run_ >= 100)
            throw NumericError(
                "train_bigan: 100 consecutive non-finite losses; last good checkpoint at step " +
                (last_checkpoint_ >= 0 ? std::to_string(last_checkpoint_) : std::string("none")));
        if (cfg_.checkpoint_every > 0 && state_.step % cfg_.checkpoint_every == 0 &&
            state_.step > 0 && ok) {
            last_checkpoint_ = state_.step;
            if (on_checkpoint) on_checkpoint(state_.step);
        }
    }
}

BiganTrainer::Snapshot BiganTrainer::snapshot() const {
    Snapshot s;
    s.gen_s = gen_s_.clone();
    s.enc_z = enc_z_.clone();
    s.disc_sz = disc_sz_.clone();
    s.adam_d = clone_adam(adam_d_);
    s.adam_g = clone_adam(adam_g_);
    s.step = state_.step;
    return s;
}

void BiganTrainer::restore(const Snapshot& s) {
    gen_s_ = s.gen_s.clone();
    enc_z_ = s.enc_z.clone();
    disc_sz_ = s.disc_sz.clone();
    adam_d_ = clone_adam(s.adam_d);
    adam_g_ = clone_adam(s.adam_g);
    state_.step = s.step;
}

BiganResult train_bigan(const Mat& d_s, const TrainConfig& cfg) {
    BiganTrainer tr(d_s, cfg);
    tr.run();
    BiganResult res;
    res.gen_s = tr.gen_s().clone();
    res.enc_z = tr.enc_z().clone();
    res.disc_sz = tr.disc_sz().clone();
    res.state_affine = tr.state_affine();
    res.state = tr.state();
    return res;
}

// ---- conditional GAN -----------------------------------------------------------

CganSlices slice_cgan_rows(const Mat& d_e) {
    if (d_e.cols != 29)
        throw ShapeError("train_cgan: expected 29-column rows (11 levels, 11 transitions, 7 state "
                         "transitions), got " +
                         std::to_string(d_e.cols));
    CganSlices s;
    s.cond = Mat(d_e.rows, 18);
    s.target = Mat(d_e.rows, 10);
    for (int r = 0; r < d_e.rows; ++r) {
        for (int c = 0; c < 11; ++c) s.cond.at(r, c) = d_e.at(r, c);
        for (int c = 0; c < 7; ++c) s.cond.at(r, 11 + c) = d_e.at(r, 22 + c);
        for (int c = 0; c < 10; ++c) s.target.at(r, c) = d_e.at(r, 11 + c);
    }
    return s;
}

CganTrainer::CganTrainer(const Mat& d_e, TrainConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    CganSlices s = slice_cgan_rows(d_e);
    if (s.cond.rows < 2) throw ShapeError("train_cgan: dataset too small");
    cond_affine_ = AffineMap::fit(s.cond);
    target_affine_ = AffineMap::fit(s.target);
    cond_std_ = cond_affine_.apply(s.cond);
    target_std_ = target_affine_.apply(s.target);
    gen_e_ = build_network(gen_e_spec(), cfg_.seed + 0x61);
    disc_e_ = build_network(disc_e_spec(), cfg_.seed + 0x62);
    adam_d_.lr = cfg_.lr_d;
    adam_d_.beta1 = cfg_.beta1;
    adam_d_.beta2 = cfg_.beta2;
    adam_d_.init(disc_e_.params());
    adam_g_.lr = cfg_.lr_g;
    adam_g_.beta1 = cfg_.beta1;
    adam_g_.beta2 = cfg_.beta2;
    adam_g_.init(gen_e_.params());
}

void CganTrainer::step_once() {
    const int t = state_.step;
    const int B = cfg_.batch;
    Rng rstep = Rng(cfg_.seed).split(0xc6a1).split(static_cast<std::uint64_t>(t));
    const bool wgan = cfg_.loss_mode == LossMode::WganGp;
    const int n = cond_std_.rows;

    double d_loss_val = 0.0;
    for (int ds = 0; ds < cfg_.d_steps_per_g; ++ds) {
        Rng rsub = rstep.split(0x10 + ds);
        Rng rrows = rsub.split(kStreamBatch);
        Mat cb(B, 18), yb(B, 10);
        for (int i = 0; i < B; ++i) {
            const int r = static_cast<int>(rrows.below(static_cast<std::uint64_t>(n)));
            for (int c = 0; c < 18; ++c) cb.at(i, c) = cond_std_.at(r, c);
            for (int c = 0; c < 10; ++c) yb.at(i, c) = target_std_.at(r, c);
        }
        Tensor z = normal_batch(B, 8, rsub.split(kStreamLatentD));

        Tape& tape = tape_d_;
        tape.reset();
        BindOptions dopt;
        dopt.requires_grad = true;
        dopt.mode = Mode::Train;
        dopt.sn_power_iters = wgan ? 0 : 1;
        if (wgan)
            dopt.sn_sigma_fixed = std::vector<double>(disc_e_.sn_states().size(), 1.0);
        Binding bd = disc_e_.bind(tape, dopt);
        BindOptions gopt;
        gopt.requires_grad = false;
        gopt.mode = Mode::Train;
        Binding bg = gen_e_.bind(tape, gopt);

        Tensor ct = tape.constant(to_tensor(cb));
        Tensor yt = tape.constant(to_tensor(yb));
        Tensor zt = tape.constant(z);
        Tensor fake = gen_e_.forward(bg, {zt, ct}).detached();
        Tensor d_real = disc_e_.forward(bd, {yt, ct});
        Tensor d_fake = disc_e_.forward(bd, {tape.constant(fake), ct});

        Tensor loss;
        if (wgan) {
            HingeLosses wl = wasserstein_losses(tape, d_real, d_fake);
            Rng rgp = rsub.split(kStreamGp);
            NetFn dfn = [&](const Tensor& xin) { return disc_e_.forward(bd, {xin, ct}); };
            Tensor gp = gradient_penalty(tape, dfn, yt, tape.constant(fake), cfg_.gp_lambda, rgp);
            loss = tape.add(wl.d_loss, gp);
        } else {
            loss = hinge_losses(tape, d_real, d_fake).d_loss;
        }
        d_loss_val = loss.value();
        if (!wgan) state_.sn_audited = state_.sn_audited && bd.spectral_applied;
        tape.backward(loss);
        std::vector<Tensor> grads = disc_e_.grads(bd);
        clip_grad_norm(grads, cfg_.grad_clip);
        adam_step(disc_e_.params(), grads, adam_d_);
    }

    // ---- generator step
    Rng rg = rstep.split(0x20);
    Rng rrows = rg.split(kStreamBatch);
    Mat cb(B, 18);
    for (int i = 0; i < B; ++i) {
        const int r = static_cast<int>(rrows.below(static_cast<std::uint64_t>(n)));
        for (int c = 0; c < 18; ++c) cb.at(i, c) = cond_std_.at(r, c);
    }
    Tensor z = normal_batch(B, 8, rg.split(kStreamLatentG));

    Tape& tape = tape_g_;
    tape.reset();
    BindOptions gopt;
    gopt.requires_grad = true;
    gopt.mode = Mode::Train;
    Binding bg = gen_e_.bind(tape, gopt);
    BindOptions dopt;
    dopt.requires_grad = false;
    dopt.mode = Mode::Infer;
    dopt.sn_power_iters = 0;
    if (wgan)
        dopt.sn_sigma_fixed = std::vector<double>(disc_e_.sn_states().size(), 1.0);
    else
        dopt.sn_frozen = true;
    Binding bd = disc_e_.bind(tape, dopt);

    Tensor ct = tape.constant(to_tensor(cb));
    Tensor zt = tape.constant(z);
    Tensor fake = gen_e_.forward(bg, {zt, ct});
    Tensor d_fake = disc_e_.forward(bd, {fake, ct});
    Tensor loss = tape.scale(tape.reduce_mean(d_fake), -1.0);
    const double g_loss_val = loss.value();
    tape.backward(loss);
    std::vector<Tensor> grads = gen_e_.grads(bg);
    clip_grad_norm(grads, cfg_.grad_clip);
    adam_step(gen_e_.params(), grads, adam_g_);

    state_.history.push_back({t, d_loss_val, g_loss_val, 0.0});
    state_.step += 1;
}

void CganTrainer::run() {
    while (state_.step < cfg_.steps) {
        const int t = state_.step;
        bool ok = true;
        try {
            step_once();
        } catch (const NumericError&) {
            ok = false;
            state_.history.push_back({t, std::nan(""), std::nan(""), std::nan("")});
            state_.step += 1;
        }
        if (ok && !state_.history.empty()) {
            const LossRecord& r = state_.history.back();
            ok = std::isfinite(r.d_loss) && std::isfinite(r.g_loss);
        }
        if (ok)
            nonfinite_run_ = 0;
        else if (++nonfinite_run_ >= 100)
            throw NumericError(
                "train_cgan: 100 consecutive non-finite losses; last good checkpoint at step " +
                (last_checkpoint_ >= 0 ? std::to_string(last_checkpoint_) : std::string("none")));
        if (cfg_.checkpoint_every > 0 && state_.step % cfg_.checkpoint_every == 0 &&
            state_.step > 0 && ok) {
            last_checkpoint_ = state_.step;
            if (on_checkpoint) on_checkpoint(state_.step);
        }
    }
}

CganResult train_cgan(const Mat& d_e, const TrainConfig& cfg) {
    CganTrainer tr(d_e, cfg);
    tr.run();
    CganResult res;
    res.gen_e = tr.gen_e().clone();
    res.disc_e = tr.disc_e().clone();
    res.cond_affine = tr.cond_affine();
    res.target_affine = tr.target_affine();
    res.state = tr.state();
    return res;
}

}  // namespace scengen
