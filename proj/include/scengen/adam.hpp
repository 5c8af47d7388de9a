#pragma once

#include <cstdint>
#include <vector>

#include "scengen/tensor.hpp"

namespace scengen {

// Per-parameter-set Adam state with bias correction.
struct AdamState {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<Tensor> m;  // first moments, one per parameter tensor
    std::vector<Tensor> v;  // second moments

    void init(const std::vector<Tensor>& params);
};

// Standard Adam update; `params` are mutated in place.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state);

// Global L2 gradient-norm clipping; returns the pre-clip norm.
double clip_grad_norm(std::vector<Tensor>& grads, double max_norm);

}  // namespace scengen
