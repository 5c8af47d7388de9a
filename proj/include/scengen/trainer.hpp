#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scengen/adam.hpp"
#include "scengen/losses.hpp"
#include "scengen/mat.hpp"
#include "scengen/network.hpp"

namespace scengen {

enum class LossMode { Hinge, WganGp };

struct TrainConfig {
    LossMode loss_mode = LossMode::Hinge;
    int steps = 2000;
    int batch = 64;
    double lr_d = 2e-4;
    double lr_g = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double cycle_alpha = 0.2;  // weight of the cycle-consistency term
    double gp_lambda = 10.0;   // gradient-penalty weight (wgan-gp only)
    int d_steps_per_g = 1;
    std::uint64_t seed = 1;
    int checkpoint_every = 0;
    double grad_clip = 10.0;

    void validate() const;
};

struct LossRecord {
    int step = 0;
    double d_loss = 0.0;
    double g_loss = 0.0;
    double cycle = 0.0;
};

struct TrainerState {
    int step = 0;
    std::vector<LossRecord> history;
    // hinge mode: every discriminator update so far used spectrally
    // normalized weights
    bool sn_audited = true;
};

// Column-wise standardization stored with the model so network-space samples
// can be mapped back to data units.
struct AffineMap {
    std::vector<double> mean;
    std::vector<double> scale;

    int dim() const { return static_cast<int>(mean.size()); }
    static AffineMap fit(const Mat& data);
    static AffineMap identity(int dim);
    Mat apply(const Mat& m) const;
    Mat invert(const Mat& m) const;
    std::vector<double> apply_row(const std::vector<double>& v) const;
    std::vector<double> invert_row(const std::vector<double>& v) const;
};

void export_loss_history(const TrainerState& state, const std::string& path);

// ---- BiGAN on state transitions -------------------------------------------

class BiganTrainer {
public:
    BiganTrainer(const Mat& d_s, TrainConfig cfg);

    void step_once();
    void run();  // cfg.steps with the non-finite-loss guard

    Network& gen_s() { return gen_s_; }
    Network& enc_z() { return enc_z_; }
    Network& disc_sz() { return disc_sz_; }
    const AffineMap& state_affine() const { return affine_; }
    const TrainerState& state() const { return state_; }
    TrainerState& state() { return state_; }

    // invoked after a checkpoint-cadence step completes
    std::function<void(int step)> on_checkpoint;

    struct Snapshot {
        Network gen_s, enc_z, disc_sz;
        AdamState adam_d, adam_g;
        int step = 0;
    };
    Snapshot snapshot() const;
    void restore(const Snapshot& s);

private:
    Mat data_std_;
    TrainConfig cfg_;
    AffineMap affine_;
    Network gen_s_, enc_z_, disc_sz_;
    AdamState adam_d_, adam_g_;
    TrainerState state_;
    Tape tape_d_, tape_g_;  // persistent so step buffers get recycled
    int nonfinite_run_ = 0;
    int last_checkpoint_ = -1;
};

struct BiganResult {
    Network gen_s, enc_z, disc_sz;
    AffineMap state_affine;
    TrainerState state;
};

BiganResult train_bigan(const Mat& d_s, const TrainConfig& cfg);

// ---- conditional GAN on instrument transitions -----------------------------

// d_e rows use the assembled 29-column order: 11 levels, 11 transitions,
// 7 state transitions. The target is the first 10 transitions; the condition
// is the 11 levels plus the 7 state transitions.
struct CganSlices {
    Mat cond;    // [n, 18]
    Mat target;  // [n, 10]
};
CganSlices slice_cgan_rows(const Mat& d_e);

class CganTrainer {
public:
    CganTrainer(const Mat& d_e, TrainConfig cfg);

    void step_once();
    void run();

    Network& gen_e() { return gen_e_; }
    Network& disc_e() { return disc_e_; }
    const AffineMap& cond_affine() const { return cond_affine_; }
    const AffineMap& target_affine() const { return target_affine_; }
    const TrainerState& state() const { return state_; }

    std::function<void(int step)> on_checkpoint;

private:
    Mat cond_std_, target_std_;
    TrainConfig cfg_;
    AffineMap cond_affine_, target_affine_;
    Network gen_e_, disc_e_;
    AdamState adam_d_, adam_g_;
    TrainerState state_;
    Tape tape_d_, tape_g_;  // persistent so step buffers get recycled
    int nonfinite_run_ = 0;
    int last_checkpoint_ = -1;
};

struct CganResult {
    Network gen_e, disc_e;
    AffineMap cond_affine;
    AffineMap target_affine;
    TrainerState state;
};

CganResult train_cgan(const Mat& d_e, const TrainConfig& cfg);

AdamState clone_adam(const AdamState& s);

}  // namespace scengen
