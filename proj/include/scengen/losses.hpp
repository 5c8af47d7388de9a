#pragma once

#include <functional>

#include "scengen/rng.hpp"
#include "scengen/tensor.hpp"

namespace scengen {

// A network forward closed over its binding; keeps loss code independent of
// the Network plumbing and lets tests substitute exact stubs.
using NetFn = std::function<Tensor(const Tensor&)>;

struct HingeLosses {
    Tensor d_loss;
    Tensor g_loss;
};

// Standard hinge pair:
//   L_D = -mean(min(0, -1 + d_real)) - mean(min(0, -1 - d_fake))
//   L_G = -mean(d_fake)
HingeLosses hinge_losses(Tape& tape, const Tensor& d_real, const Tensor& d_fake);

// Wasserstein critic/generator losses without the penalty term:
//   L_D = mean(d_fake) - mean(d_real),  L_G = -mean(d_fake)
HingeLosses wasserstein_losses(Tape& tape, const Tensor& d_real, const Tensor& d_fake);

// L_C = mean|x - G(E(x))| + mean|z - E(G(z))| with per-element means.
Tensor cycle_loss(Tape& tape, const Tensor& x, const Tensor& z, const NetFn& g, const NetFn& e);

// lambda * mean((||grad_xhat D(xhat)||_2 - 1)^2) with xhat = eps*x + (1-eps)*fake,
// eps uniform per row. Differentiates through the gradient, so the
// discriminator binding must require gradients.
Tensor gradient_penalty(Tape& tape, const NetFn& d, const Tensor& x_real, const Tensor& x_fake,
                        double lambda, Rng& rng);

}  // namespace scengen
