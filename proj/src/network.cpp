#include "scengen/network.hpp"

#include <cmath>

namespace scengen {

int NetworkSpec::output_dim() const {
    const LayerSpec& last = trunk.empty() ? streams.at(0).back() : trunk.back();
    return last.decl_ch * last.decl_len;
}

namespace {

std::array<int, 2> layer_out_shape(const LayerSpec& l, std::array<int, 2> in,
                                   const std::string& where) {
    const int ch = in[0], len = in[1];
    switch (l.kind) {
        case LayerKind::Linear: {
            if (l.in_dim != ch * len)
                throw ShapeError(where + ": linear expects " + std::to_string(l.in_dim) +
                                 " features, stream carries " + std::to_string(ch * len));
            if (l.out_dim != l.decl_ch * l.decl_len)
                throw ShapeError(where + ": linear out_dim " + std::to_string(l.out_dim) +
                                 " does not equal declared " + std::to_string(l.decl_ch) + "x" +
                                 std::to_string(l.decl_len));
            return {l.decl_ch, l.decl_len};
        }
        case LayerKind::Conv1d: {
            if (l.in_dim != ch)
                throw ShapeError(where + ": conv1d expects " + std::to_string(l.in_dim) +
                                 " channels, stream carries " + std::to_string(ch));
            if (len < l.kernel || (len - l.kernel) % l.stride != 0)
                throw ShapeError(where + ": conv1d kernel " + std::to_string(l.kernel) +
                                 " stride " + std::to_string(l.stride) +
                                 " does not tile length " + std::to_string(len));
            const int out_len = (len - l.kernel) / l.stride + 1;
            return {l.out_dim, out_len};
        }
        case LayerKind::Conv1dTranspose: {
            if (l.in_dim != ch)
                throw ShapeError(where + ": conv1d_transpose expects " + std::to_string(l.in_dim) +
                                 " channels, stream carries " + std::to_string(ch));
            const int out_len = (len - 1) * l.stride + l.kernel;
            return {l.out_dim, out_len};
        }
        case LayerKind::Identity:
            return {ch, len};
    }
    throw ShapeError(where + ": unknown layer kind");
}

void audit_one(const LayerSpec& l, std::array<int, 2>& cur, const std::string& where) {
    const auto out = layer_out_shape(l, cur, where);
    if (out[0] != l.decl_ch || out[1] != l.decl_len)
        throw ShapeError(where + ": computed output " + std::to_string(out[0]) + "x" +
                         std::to_string(out[1]) + " but declared " + std::to_string(l.decl_ch) +
                         "x" + std::to_string(l.decl_len));
    cur = out;
}

}  // namespace

std::vector<std::array<int, 2>> NetworkSpec::shape_walk() const {
    std::vector<std::array<int, 2>> walk;
    std::array<int, 2> merged{0, 0};
    for (std::size_t s = 0; s < streams.size(); ++s) {
        std::array<int, 2> cur = input_shapes.at(s);
        walk.push_back(cur);
        for (std::size_t i = 0; i < streams[s].size(); ++i) {
            cur = layer_out_shape(streams[s][i], cur,
                                  id + ".s" + std::to_string(s) + ".l" + std::to_string(i));
            walk.push_back(cur);
        }
        if (s == 0)
            merged = cur;
        else {
            if (cur[1] != merged[1])
                throw ShapeError(id + ": streams end with different lengths, cannot concat");
            merged[0] += cur[0];
        }
    }
    if (streams.size() > 1) walk.push_back(merged);
    std::array<int, 2> cur = merged;
    for (std::size_t i = 0; i < trunk.size(); ++i) {
        cur = layer_out_shape(trunk[i], cur, id + ".trunk.l" + std::to_string(i));
        walk.push_back(cur);
    }
    return walk;
}

void NetworkSpec::audit() const {
    std::array<int, 2> merged{0, 0};
    for (std::size_t s = 0; s < streams.size(); ++s) {
        std::array<int, 2> cur = input_shapes.at(s);
        for (std::size_t i = 0; i < streams[s].size(); ++i)
            audit_one(streams[s][i], cur, id + ".s" + std::to_string(s) + ".l" + std::to_string(i));
        if (s == 0)
            merged = cur;
        else {
            if (cur[1] != merged[1])
                throw ShapeError(id + ": streams end with different lengths, cannot concat");
            merged[0] += cur[0];
        }
    }
    std::array<int, 2> cur = merged;
    for (std::size_t i = 0; i < trunk.size(); ++i)
        audit_one(trunk[i], cur, id + ".trunk.l" + std::to_string(i));
}

void NetworkSpec::validate() const {
    audit();
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) throw ShapeError(id + ": " + what);
    };
    const int out = output_dim();
    if (id == "gen_S") {
        expect(latent_dim == 8, "latent dimension must be 8");
        expect(input_shapes.size() == 1 && input_shapes[0][0] * input_shapes[0][1] == 8,
               "input must be the 8-dim latent");
        expect(out == 7, "output dimension must be 7");
    } else if (id == "enc_Z") {
        expect(input_shapes.size() == 1 && input_shapes[0][0] * input_shapes[0][1] == 7,
               "input must be the 7-dim state transition");
        expect(out == 8, "output dimension must be 8");
    } else if (id == "disc_SZ") {
        expect(input_shapes.size() == 2, "needs a (data, latent) input pair");
        expect(input_shapes[0][0] * input_shapes[0][1] == 7, "data input must be 7-dim");
        expect(input_shapes[1][0] * input_shapes[1][1] == 8, "latent input must be 8-dim");
        expect(out == 1, "output must be a scalar score");
    } else if (id == "gen_E") {
        expect(latent_dim == 8 && condition_dim == 18, "latent 8 and condition 18 required");
        expect(input_shapes.size() == 2, "needs a (latent, condition) input pair");
        expect(input_shapes[0][0] * input_shapes[0][1] == 8, "latent input must be 8-dim");
        expect(input_shapes[1][0] * input_shapes[1][1] == 18, "condition input must be 18-dim");
        expect(out == 10, "output dimension must be 10");
    } else if (id == "disc_E") {
        expect(condition_dim == 18, "condition dimension must be 18");
        expect(input_shapes.size() == 2, "needs a (data, condition) input pair");
        expect(input_shapes[0][0] * input_shapes[0][1] == 10, "data input must be 10-dim");
        expect(input_shapes[1][0] * input_shapes[1][1] == 18, "condition input must be 18-dim");
        expect(out == 1, "output must be a scalar score");
    }
}

namespace {

LayerSpec conv(int in_ch, int out_ch, int k, int s, NormKind norm, ActKind act, int dch,
               int dlen) {
    return {LayerKind::Conv1d, in_ch, out_ch, k, s, norm, act, dch, dlen};
}
LayerSpec convt(int in_ch, int out_ch, int k, int s, NormKind norm, ActKind act, int dch,
                int dlen) {
    return {LayerKind::Conv1dTranspose, in_ch, out_ch, k, s, norm, act, dch, dlen};
}
LayerSpec lin(int in_dim, int out_dim, NormKind norm, ActKind act, int dch, int dlen) {
    return {LayerKind::Linear, in_dim, out_dim, 1, 1, norm, act, dch, dlen};
}
LayerSpec identity(int ch, int len) {
    return {LayerKind::Identity, 0, 0, 1, 1, NormKind::None, ActKind::Linear, ch, len};
}

}  // namespace

NetworkSpec gen_s_spec() {
    NetworkSpec s;
    s.id = "gen_S";
    s.latent_dim = 8;
    s.input_shapes = {{8, 1}};
    s.streams = {{
        convt(8, 256, 3, 1, NormKind::Batch, ActKind::Relu, 256, 3),
        convt(256, 128, 3, 1, NormKind::Batch, ActKind::Relu, 128, 5),
        convt(128, 64, 3, 1, NormKind::Batch, ActKind::Relu, 64, 7),
        convt(64, 1, 1, 1, NormKind::None, ActKind::Linear, 1, 7),
    }};
    return s;
}

NetworkSpec enc_z_spec() {
    NetworkSpec s;
    s.id = "enc_Z";
    s.latent_dim = 8;
    s.input_shapes = {{1, 7}};
    s.streams = {{
        conv(1, 64, 3, 1, NormKind::Batch, ActKind::LeakyRelu, 64, 5),
        conv(64, 128, 3, 1, NormKind::Batch, ActKind::LeakyRelu, 128, 3),
        conv(128, 256, 2, 1, NormKind::Batch, ActKind::LeakyRelu, 256, 2),
        conv(256, 256, 2, 1, NormKind::Batch, ActKind::LeakyRelu, 256, 1),
        lin(256, 8, NormKind::None, ActKind::Linear, 8, 1),
    }};
    return s;
}

NetworkSpec disc_sz_spec() {
    NetworkSpec s;
    s.id = "disc_SZ";
    s.latent_dim = 8;
    s.input_shapes = {{1, 7}, {8, 1}};
    s.streams = {
        {
            conv(1, 64, 3, 1, NormKind::Spectral, ActKind::LeakyRelu, 64, 5),
            conv(64, 128, 3, 1, NormKind::Spectral, ActKind::LeakyRelu, 128, 3),
            conv(128, 256, 2, 1, NormKind::Spectral, ActKind::LeakyRelu, 256, 2),
            conv(256, 256, 2, 1, NormKind::Spectral, ActKind::LeakyRelu, 256, 1),
        },
        {
            lin(8, 64, NormKind::Spectral, ActKind::LeakyRelu, 64, 1),
            lin(64, 128, NormKind::Spectral, ActKind::LeakyRelu, 128, 1),
            lin(128, 256, NormKind::Spectral, ActKind::LeakyRelu, 256, 1),
            identity(256, 1),
        },
    };
    s.trunk = {
        lin(512, 256, NormKind::Spectral, ActKind::LeakyRelu, 256, 1),
        lin(256, 1, NormKind::Spectral, ActKind::Linear, 1, 1),
    };
    return s;
}

NetworkSpec gen_e_spec() {
    NetworkSpec s;
    s.id = "gen_E";
    s.latent_dim = 8;
    s.condition_dim = 18;
    s.input_shapes = {{8, 1}, {1, 18}};
    s.streams = {
        {},  // latent passes straight to the concat
        {lin(18, 8, NormKind::None, ActKind::Relu, 8, 1)},
    };
    s.trunk = {
        convt(16, 512, 3, 1, NormKind::Batch, ActKind::Relu, 512, 3),
        convt(512, 256, 3, 1, NormKind::Batch, ActKind::Relu, 256, 5),
        convt(256, 128, 5, 1, NormKind::Batch, ActKind::Relu, 128, 9),
        convt(128, 64, 2, 1, NormKind::Batch, ActKind::Relu, 64, 10),
        lin(640, 10, NormKind::None, ActKind::Linear, 1, 10),
    };
    return s;
}

NetworkSpec disc_e_spec() {
    NetworkSpec s;
    s.id = "disc_E";
    s.condition_dim = 18;
    s.input_shapes = {{1, 10}, {1, 18}};
    s.streams = {
        {},  // data passes straight to the concat
        {lin(18, 10, NormKind::None, ActKind::Relu, 1, 10)},
    };
    s.trunk = {
        conv(2, 64, 1, 1, NormKind::Spectral, ActKind::LeakyRelu, 64, 10),
        conv(64, 128, 2, 2, NormKind::Spectral, ActKind::LeakyRelu, 128, 5),
        conv(128, 256, 3, 1, NormKind::Spectral, ActKind::LeakyRelu, 256, 3),
        conv(256, 512, 1, 1, NormKind::Spectral, ActKind::LeakyRelu, 512, 3),
        conv(512, 1, 3, 1, NormKind::Spectral, ActKind::Linear, 1, 1),
    };
    return s;
}

NetworkSpec spec_by_id(const std::string& id) {
    if (id == "gen_S") return gen_s_spec();
    if (id == "enc_Z") return enc_z_spec();
    if (id == "disc_SZ") return disc_sz_spec();
    if (id == "gen_E") return gen_e_spec();
    if (id == "disc_E") return disc_e_spec();
    throw ShapeError("unknown network id: " + id);
}

// ---- spectral normalization --------------------------------------------------

namespace {

void normalize_inplace(std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n < 1e-12) {
        // degenerate direction; reset to a deterministic unit vector
        std::fill(v.begin(), v.end(), 0.0);
        v[0] = 1.0;
        return;
    }
    for (double& x : v) x /= n;
}

double sigma_from_u(const Tensor& w, const std::vector<double>& u, std::vector<double>* u_out) {
    const int rows = w.shape()[0], cols = w.shape()[1];
    std::vector<double> v(cols, 0.0);
    const double* pw = w.data();
    for (int i = 0; i < rows; ++i) {
        const double ui = u[i];
        for (int j = 0; j < cols; ++j) v[j] += pw[static_cast<std::size_t>(i) * cols + j] * ui;
    }
    normalize_inplace(v);
    std::vector<double> wu(rows, 0.0);
    for (int i = 0; i < rows; ++i) {
        double acc = 0.0;
        for (int j = 0; j < cols; ++j) acc += pw[static_cast<std::size_t>(i) * cols + j] * v[j];
        wu[i] = acc;
    }
    double sigma = 0.0;
    for (int i = 0; i < rows; ++i) sigma += wu[i] * wu[i];
    sigma = std::sqrt(sigma);
    if (u_out) {
        normalize_inplace(wu);
        *u_out = std::move(wu);
    }
    return sigma;
}

}  // namespace

double power_iterate(const Tensor& w, SpectralNormState& state, int iters) {
    if (w.shape().size() != 2) throw ShapeError("spectral norm expects a matrix view");
    const int rows = w.shape()[0];
    if (state.u.empty() || state.u.size() != rows) {
        std::vector<double> u0(rows, 0.0);
        u0[0] = 1.0;
        state.u = Tensor({rows}, std::move(u0));
    }
    std::vector<double> u(state.u.data(), state.u.data() + rows);
    double sigma = sigma_from_u(w, u, nullptr);
    for (int it = 0; it < iters; ++it) {
        std::vector<double> u_next;
        sigma = sigma_from_u(w, u, &u_next);
        u = std::move(u_next);
    }
    state.u = Tensor({rows}, std::move(u));
    return sigma;
}

double sn_sigma(const Tensor& w, const SpectralNormState& state) {
    const int rows = w.shape()[0];
    std::vector<double> u(rows, 0.0);
    if (!state.u.empty() && state.u.size() == rows)
        std::copy(state.u.data(), state.u.data() + rows, u.begin());
    else
        u[0] = 1.0;
    return sigma_from_u(w, u, nullptr);
}

Tensor spectral_normalize(const Tensor& w, SpectralNormState& state, int power_iters) {
    const double sigma = std::max(power_iterate(w, state, power_iters), 1e-12);
    Tensor out(w.shape());
    for (int i = 0; i < w.size(); ++i) out.data()[i] = w.at(i) / sigma;
    return out;
}

// ---- network ----------------------------------------------------------------

Network::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    spec_.validate();
    Rng rng = Rng(seed).split(0xa11c);
    int pi = 0;
    auto add_param = [&](const std::string& name, Shape shape, double stddev, double fill,
                         bool random) {
        Tensor t(shape);
        if (random) {
            Rng r = rng.split(static_cast<std::uint64_t>(pi));
            for (int i = 0; i < t.size(); ++i) t.data()[i] = stddev * r.normal();
        } else {
            for (int i = 0; i < t.size(); ++i) t.data()[i] = fill;
        }
        params_.push_back(std::move(t));
        names_.push_back(name);
        ++pi;
        return static_cast<int>(params_.size()) - 1;
    };

    auto add_layer = [&](const LayerSpec& l, const std::string& name, std::array<int, 2> in) {
        Slot s;
        switch (l.kind) {
            case LayerKind::Linear: {
                // unnormalized relu projections (the condition inlets) get
                // fan-in scaling; at 0.02 the condition would enter an order
                // of magnitude weaker than the unit-scale latent and the
                // conditional signal starves for thousands of steps
                const bool fan_scaled = l.norm == NormKind::None && l.act == ActKind::Relu;
                const double stddev = fan_scaled ? std::sqrt(2.0 / l.in_dim) : 0.02;
                s.w = add_param(name + ".w", {l.out_dim, l.in_dim}, stddev, 0.0, true);
                s.b = add_param(name + ".b", {l.out_dim}, 0.0, 0.0, false);
                break;
            }
            case LayerKind::Conv1d:
                s.w = add_param(name + ".w", {l.out_dim, l.in_dim * l.kernel}, 0.02, 0.0, true);
                s.b = add_param(name + ".b", {l.out_dim}, 0.0, 0.0, false);
                break;
            case LayerKind::Conv1dTranspose:
                s.w = add_param(name + ".w", {l.in_dim, l.out_dim * l.kernel}, 0.02, 0.0, true);
                s.b = add_param(name + ".b", {l.out_dim}, 0.0, 0.0, false);
                break;
            case LayerKind::Identity:
                break;
        }
        if (l.norm == NormKind::Batch) {
            // conv layers normalize per channel, linear layers per feature
            const int chans = l.out_dim;
            s.gamma = add_param(name + ".gamma", {chans}, 0.0, 1.0, false);
            s.beta = add_param(name + ".beta", {chans}, 0.0, 0.0, false);
            s.bn = static_cast<int>(bn_.size());
            bn_.emplace_back();
        } else if (l.norm == NormKind::Spectral) {
            s.sn = static_cast<int>(sn_.size());
            SpectralNormState st;
            const int rows = (l.kind == LayerKind::Conv1dTranspose) ? l.in_dim : l.out_dim;
            Rng r = rng.split(0x5e00 + sn_.size());
            std::vector<double> u(rows);
            for (int i = 0; i < rows; ++i) u[i] = r.normal();
            st.u = Tensor({rows}, std::move(u));
            normalize_u(st);
            sn_.push_back(std::move(st));
        }
        slots_.push_back(s);
        (void)in;
    };

    for (std::size_t st = 0; st < spec_.streams.size(); ++st) {
        std::array<int, 2> cur = spec_.input_shapes[st];
        for (std::size_t i = 0; i < spec_.streams[st].size(); ++i) {
            add_layer(spec_.streams[st][i], spec_.id + ".s" + std::to_string(st) + ".l" +
                                                std::to_string(i),
                      cur);
            cur = {spec_.streams[st][i].decl_ch, spec_.streams[st][i].decl_len};
        }
    }
    std::array<int, 2> cur{0, 0};
    for (std::size_t i = 0; i < spec_.trunk.size(); ++i) {
        add_layer(spec_.trunk[i], spec_.id + ".trunk.l" + std::to_string(i), cur);
    }
}

void Network::normalize_u(SpectralNormState& st) {
    double n = 0.0;
    for (int i = 0; i < st.u.size(); ++i) n += st.u.at(i) * st.u.at(i);
    n = std::sqrt(n);
    if (n > 0)
        for (int i = 0; i < st.u.size(); ++i) st.u.data()[i] /= n;
}

bool Network::has_batchnorm() const { return !bn_.empty(); }
bool Network::has_spectral() const { return !sn_.empty(); }

std::vector<int> Network::bn_channels() const {
    std::vector<int> out;
    auto visit = [&](const LayerSpec& l) {
        if (l.norm == NormKind::Batch) out.push_back(l.out_dim);
    };
    for (const auto& stream : spec_.streams)
        for (const auto& l : stream) visit(l);
    for (const auto& l : spec_.trunk) visit(l);
    return out;
}

std::vector<double> Network::current_sn_sigmas() const {
    std::vector<double> sigmas;
    int snc = 0;
    int flat = 0;
    auto visit = [&](const LayerSpec& l) {
        if (l.norm == NormKind::Spectral) {
            const Slot& s = slots_[flat];
            sigmas.push_back(std::max(sn_sigma(params_[s.w], sn_[snc]), 1e-12));
            ++snc;
        }
        ++flat;
    };
    for (const auto& stream : spec_.streams)
        for (const auto& l : stream) visit(l);
    for (const auto& l : spec_.trunk) visit(l);
    return sigmas;
}

Binding Network::bind(Tape& tape, const BindOptions& opts) {
    Binding b;
    b.tape = &tape;
    b.net = this;
    b.opts = opts;
    b.leaves.reserve(params_.size());
    for (const Tensor& p : params_) b.leaves.push_back(tape.watch(p, opts.requires_grad));

    b.eff_weight.assign(slots_.size(), Tensor{});
    b.spectral_applied = has_spectral();
    int flat = 0;
    int snc = 0;
    auto visit = [&](const LayerSpec& l) {
        const Slot& s = slots_[flat];
        if (s.w >= 0) {
            Tensor w = b.leaves[s.w];
            if (l.norm == NormKind::Spectral) {
                double sigma_fixed = 0.0;
                bool use_fixed = false;
                if (opts.sn_sigma_fixed) {
                    sigma_fixed = (*opts.sn_sigma_fixed).at(snc);
                    use_fixed = true;
                } else if (opts.sn_frozen) {
                    sigma_fixed = std::max(sn_sigma(params_[s.w], sn_[snc]), 1e-12);
                    use_fixed = true;
                }
                if (use_fixed) {
                    w = tape.scale(w, 1.0 / sigma_fixed);
                    if (opts.sn_sigma_fixed) b.spectral_applied = false;
                } else {
                    const int iters = opts.mode == Mode::Train ? opts.sn_power_iters : 0;
                    power_iterate(params_[s.w], sn_[snc], iters);
                    // sigma on tape: u^T W v with u, v captured constants
                    const int rows = params_[s.w].shape()[0];
                    const int cols = params_[s.w].shape()[1];
                    std::vector<double> uv(sn_[snc].u.data(), sn_[snc].u.data() + rows);
                    std::vector<double> v(cols, 0.0);
                    const double* pw = params_[s.w].data();
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < cols; ++j)
                            v[j] += pw[static_cast<std::size_t>(i) * cols + j] * uv[i];
                    double vn = 0.0;
                    for (double x : v) vn += x * x;
                    vn = std::sqrt(vn);
                    if (vn < 1e-12) {
                        w = tape.scale(w, 1.0 / 1e-12);
                    } else {
                        for (double& x : v) x /= vn;
                        Tensor u_row = tape.constant({1, rows}, std::move(uv));
                        Tensor v_col = tape.constant({cols, 1}, std::move(v));
                        Tensor sigma = tape.reshape(tape.matmul(tape.matmul(u_row, w), v_col), {1});
                        // floor at 1e-12: max(sigma, eps) = -min(-sigma, -eps)
                        Tensor floored =
                            tape.scale(tape.min_const(tape.scale(sigma, -1.0), -1e-12), -1.0);
                        w = tape.mul_scalar_t(w, tape.reciprocal(floored));
                    }
                }
                ++snc;
            }
            b.eff_weight[flat] = w;
        }
        ++flat;
    };
    for (const auto& stream : spec_.streams)
        for (const auto& l : stream) visit(l);
    for (const auto& l : spec_.trunk) visit(l);
    return b;
}

const LayerSpec& Network::layer_at(int flat) const {
    int i = flat;
    for (const auto& stream : spec_.streams) {
        if (i < static_cast<int>(stream.size())) return stream[i];
        i -= static_cast<int>(stream.size());
    }
    return spec_.trunk.at(i);
}

int Network::layer_count() const {
    int n = static_cast<int>(spec_.trunk.size());
    for (const auto& stream : spec_.streams) n += static_cast<int>(stream.size());
    return n;
}

Tensor Network::forward(Binding& b, const std::vector<Tensor>& inputs) const {
    Tape& tape = *b.tape;
    if (inputs.size() != spec_.streams.size())
        throw ShapeError(spec_.id + ": expected " + std::to_string(spec_.streams.size()) +
                         " inputs, got " + std::to_string(inputs.size()));
    const int batch = inputs.at(0).shape().at(0);
    if (b.opts.mode == Mode::Train && batch < 2 && has_batchnorm())
        throw ShapeError(spec_.id + ": train-mode forward with batch size 1 and batchnorm");

    auto apply_layer = [&](Tensor x, std::array<int, 2>& cur, const LayerSpec& l, int flat) {
        const Slot& s = slots_[flat];
        switch (l.kind) {
            case LayerKind::Linear:
                x = tape.linear(x, b.eff_weight[flat], b.leaves[s.b]);
                break;
            case LayerKind::Conv1d:
                x = tape.conv1d(x, b.eff_weight[flat], b.leaves[s.b], l.in_dim, l.out_dim,
                                l.kernel, l.stride);
                break;
            case LayerKind::Conv1dTranspose:
                x = tape.conv1d_transpose(x, b.eff_weight[flat], b.leaves[s.b], l.in_dim,
                                          l.out_dim, l.kernel, l.stride);
                break;
            case LayerKind::Identity:
                break;
        }
        cur = {l.decl_ch, l.decl_len};
        if (l.norm == NormKind::Batch) {
            const int chans = l.out_dim;
            BnStats& stats = const_cast<Network*>(this)->bn_[s.bn];
            if (b.opts.mode == Mode::Train)
                x = tape.batchnorm_train(x, b.leaves[s.gamma], b.leaves[s.beta], chans,
                                         b.opts.update_running ? &stats : nullptr, 0.9, 1e-5);
            else
                x = tape.batchnorm_infer(x, b.leaves[s.gamma], b.leaves[s.beta], chans, stats,
                                         1e-5);
        }
        switch (l.act) {
            case ActKind::Relu:
                x = tape.relu(x);
                break;
            case ActKind::LeakyRelu:
                x = tape.leaky_relu(x, 0.2);
                break;
            case ActKind::Linear:
                break;
        }
        return x;
    };

    std::vector<Tensor> ends;
    int flat = 0;
    for (std::size_t st = 0; st < spec_.streams.size(); ++st) {
        Tensor x = inputs[st];
        if (!x.tracked() || x.tape() != &tape) x = tape.constant(x);
        std::array<int, 2> cur = spec_.input_shapes[st];
        if (x.shape().size() != 2 || x.shape()[1] != cur[0] * cur[1])
            throw ShapeError(spec_.id + ": stream " + std::to_string(st) + " input " +
                             shape_str(x.shape()) + ", expected [batch," +
                             std::to_string(cur[0] * cur[1]) + "]");
        for (const auto& l : spec_.streams[st]) {
            x = apply_layer(x, cur, l, flat);
            ++flat;
        }
        ends.push_back(x);
    }
    Tensor x = ends[0];
    for (std::size_t i = 1; i < ends.size(); ++i) x = tape.concat(x, ends[i], 1);
    std::array<int, 2> cur{0, 0};
    for (const auto& l : spec_.trunk) {
        x = apply_layer(x, cur, l, flat);
        ++flat;
    }
    return x;
}

Tensor Network::infer(const std::vector<Tensor>& inputs) const {
    static thread_local Tape tape;
    tape.reset();
    BindOptions opts;
    opts.requires_grad = false;
    opts.mode = Mode::Infer;
    Binding b = const_cast<Network*>(this)->bind(tape, opts);
    Tensor out = forward(b, inputs);
    return out.detached().clone();
}

std::vector<Tensor> Network::grads(const Binding& b) const {
    std::vector<Tensor> g;
    g.reserve(b.leaves.size());
    for (const Tensor& leaf : b.leaves) g.push_back(b.tape->grad(leaf).detached());
    return g;
}

Network Network::clone() const {
    Network n;
    n.spec_ = spec_;
    n.names_ = names_;
    n.slots_ = slots_;
    n.params_.reserve(params_.size());
    for (const Tensor& p : params_) n.params_.push_back(p.clone());
    n.bn_.reserve(bn_.size());
    for (const BnStats& s : bn_) {
        BnStats c;
        c.initialized = s.initialized;
        if (s.initialized) {
            c.mean = s.mean.clone();
            c.var = s.var.clone();
        }
        n.bn_.push_back(std::move(c));
    }
    n.sn_.reserve(sn_.size());
    for (const SpectralNormState& s : sn_) {
        SpectralNormState c;
        c.u = s.u.clone();
        n.sn_.push_back(std::move(c));
    }
    return n;
}

Network build_network(const NetworkSpec& spec, std::uint64_t seed) { return Network(spec, seed); }

}  // namespace scengen
