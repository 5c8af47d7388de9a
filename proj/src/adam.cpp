#include "scengen/adam.hpp"

#include <cmath>

namespace scengen {

void AdamState::init(const std::vector<Tensor>& params) {
    step = 0;
    m.clear();
    v.clear();
    m.reserve(params.size());
    v.reserve(params.size());
    for (const Tensor& p : params) {
        m.emplace_back(p.shape(), 0.0);
        v.emplace_back(p.shape(), 0.0);
    }
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state) {
    if (state.lr <= 0.0) throw NumericError("adam: learning rate must be positive");
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("adam: parameter/gradient/state count mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].shape() != grads[t].shape())
            throw ShapeError("adam: shape mismatch at parameter " + std::to_string(t) + ": " +
                             shape_str(params[t].shape()) + " vs " +
                             shape_str(grads[t].shape()));
        double* p = params[t].data();
        const double* g = grads[t].data();
        double* m = state.m[t].data();
        double* v = state.v[t].data();
        const int n = params[t].size();
        for (int i = 0; i < n; ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double clip_grad_norm(std::vector<Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const Tensor& g : grads)
        for (int i = 0; i < g.size(); ++i) sq += g.at(i) * g.at(i);
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (Tensor& g : grads)
            for (int i = 0; i < g.size(); ++i) g.data()[i] *= s;
    }
    return norm;
}

}  // namespace scengen
