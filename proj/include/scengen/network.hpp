#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "scengen/rng.hpp"
#include "scengen/tensor.hpp"

namespace scengen {

enum class LayerKind { Linear, Conv1d, Conv1dTranspose, Identity };
enum class NormKind { None, Batch, Spectral };
enum class ActKind { Relu, LeakyRelu, Linear };

struct LayerSpec {
    LayerKind kind = LayerKind::Identity;
    int in_dim = 0;   // flattened features (linear) or input channels (conv)
    int out_dim = 0;  // output features (linear) or output channels (conv)
    int kernel = 1;
    int stride = 1;
    NormKind norm = NormKind::None;
    ActKind act = ActKind::Linear;
    int decl_ch = 0;  // declared output shape, channels x length
    int decl_len = 0;
};

// A network is one or more input streams, an implicit channel-concat when
// there is more than one stream, and a trunk.
struct NetworkSpec {
    std::string id;  // gen_S | enc_Z | disc_SZ | gen_E | disc_E
    std::vector<std::vector<LayerSpec>> streams;
    std::vector<std::array<int, 2>> input_shapes;  // (channels, length) per stream
    std::vector<LayerSpec> trunk;
    int latent_dim = 0;
    int condition_dim = 0;

    int output_dim() const;
    // Every (channels x length) the forward pass goes through, inputs included.
    std::vector<std::array<int, 2>> shape_walk() const;
    // Throws ShapeError naming the first mismatching layer.
    void audit() const;
    // Module-level dimension invariants for the five known ids.
    void validate() const;
};

// Reference architectures.
NetworkSpec gen_s_spec();
NetworkSpec enc_z_spec();
NetworkSpec disc_sz_spec();
NetworkSpec gen_e_spec();
NetworkSpec disc_e_spec();
NetworkSpec spec_by_id(const std::string& id);

struct SpectralNormState {
    Tensor u;  // unit-norm left singular-vector estimate
};

// In-place power iteration on the matrix view of `w`; returns the sigma
// estimate and leaves state.u renormalized.
double power_iterate(const Tensor& w, SpectralNormState& state, int iters);
// Current sigma estimate without mutating the stored u.
double sn_sigma(const Tensor& w, const SpectralNormState& state);
// Value-level W / max(sigma, 1e-12).
Tensor spectral_normalize(const Tensor& w, SpectralNormState& state, int power_iters);

enum class Mode { Train, Infer };

struct BindOptions {
    bool requires_grad = true;
    Mode mode = Mode::Infer;
    int sn_power_iters = 1;                       // applied once per bind, train mode only
    bool sn_frozen = false;                       // sigma captured as a constant
    std::optional<std::vector<double>> sn_sigma_fixed;  // pinned sigmas (gradient checks)
    bool update_running = true;                   // refresh bn running stats in train mode
};

class Network;

// Per-training-step view of a network on a tape: parameter leaves plus
// effective (spectrally normalized) weights, shared by every forward pass
// recorded against this binding.
struct Binding {
    Tape* tape = nullptr;
    Network* net = nullptr;
    BindOptions opts;
    std::vector<Tensor> leaves;       // aligned with Network::params()
    std::vector<Tensor> eff_weight;   // per layer slot; empty when layer has no weight
    // true iff every spectral layer's weight actually went through sigma
    // normalization in this binding (the training-audit flag)
    bool spectral_applied = false;
};

class Network {
public:
    Network() = default;
    Network(NetworkSpec spec, std::uint64_t seed);

    const NetworkSpec& spec() const { return spec_; }
    const std::vector<Tensor>& params() const { return params_; }
    std::vector<Tensor>& params() { return params_; }
    const std::vector<std::string>& param_names() const { return names_; }
    std::vector<BnStats>& bn_stats() { return bn_; }
    const std::vector<BnStats>& bn_stats() const { return bn_; }
    std::vector<SpectralNormState>& sn_states() { return sn_; }
    const std::vector<SpectralNormState>& sn_states() const { return sn_; }
    bool has_batchnorm() const;
    bool has_spectral() const;
    std::vector<double> current_sn_sigmas() const;
    // channel count per batchnorm slot, in slot order
    std::vector<int> bn_channels() const;

    Binding bind(Tape& tape, const BindOptions& opts);
    // inputs: one [batch, ch*len] tensor per stream. Returns [batch, out].
    Tensor forward(Binding& binding, const std::vector<Tensor>& inputs) const;

    // Convenience value-level inference on a scratch tape.
    Tensor infer(const std::vector<Tensor>& inputs) const;

    // Gradients aligned with params() after tape.backward().
    std::vector<Tensor> grads(const Binding& binding) const;

    // Deep copy of all mutable state.
    Network clone() const;

private:
    struct Slot {
        int w = -1, b = -1, gamma = -1, beta = -1;
        int bn = -1;  // index into bn_
        int sn = -1;  // index into sn_
    };
    friend struct Binding;

    const LayerSpec& layer_at(int flat) const;
    int layer_count() const;
    static void normalize_u(SpectralNormState& st);

    NetworkSpec spec_;
    std::vector<Tensor> params_;
    std::vector<std::string> names_;
    std::vector<Slot> slots_;
    std::vector<BnStats> bn_;
    std::vector<SpectralNormState> sn_;
};

Network build_network(const NetworkSpec& spec, std::uint64_t seed);

}  // namespace scengen
