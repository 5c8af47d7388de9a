#include "scengen/losses.hpp"

namespace scengen {

HingeLosses hinge_losses(Tape& tape, const Tensor& d_real, const Tensor& d_fake) {
    if (d_real.size() == 0 || d_fake.size() == 0)
        throw ShapeError("hinge: empty score batch");
    if (d_real.shape() != d_fake.shape())
        throw ShapeError("hinge: real/fake score batches differ: " + shape_str(d_real.shape()) +
                         " vs " + shape_str(d_fake.shape()));
    HingeLosses out;
    Tensor real_term = tape.reduce_mean(tape.min_const(tape.add_const(d_real, -1.0), 0.0));
    Tensor fake_term =
        tape.reduce_mean(tape.min_const(tape.add_const(tape.scale(d_fake, -1.0), -1.0), 0.0));
    out.d_loss = tape.sub(tape.scale(real_term, -1.0), fake_term);
    out.g_loss = tape.scale(tape.reduce_mean(d_fake), -1.0);
    return out;
}

HingeLosses wasserstein_losses(Tape& tape, const Tensor& d_real, const Tensor& d_fake) {
    if (d_real.size() == 0 || d_fake.size() == 0)
        throw ShapeError("wasserstein: empty score batch");
    HingeLosses out;
    out.d_loss = tape.sub(tape.reduce_mean(d_fake), tape.reduce_mean(d_real));
    out.g_loss = tape.scale(tape.reduce_mean(d_fake), -1.0);
    return out;
}

Tensor cycle_loss(Tape& tape, const Tensor& x, const Tensor& z, const NetFn& g, const NetFn& e) {
    Tensor x_rec = g(e(x));
    Tensor z_rec = e(g(z));
    Tensor lx = tape.mean_abs(tape.sub(x, x_rec));
    Tensor lz = tape.mean_abs(tape.sub(z, z_rec));
    return tape.add(lx, lz);
}

Tensor gradient_penalty(Tape& tape, const NetFn& d, const Tensor& x_real, const Tensor& x_fake,
                        double lambda, Rng& rng) {
    if (x_real.shape() != x_fake.shape())
        throw ShapeError("gradient-penalty: real/fake batches differ: " +
                         shape_str(x_real.shape()) + " vs " + shape_str(x_fake.shape()));
    const int batch = x_real.shape()[0];
    const int dim = x_real.shape()[1];
    Tensor mix(x_real.shape());
    for (int r = 0; r < batch; ++r) {
        const double eps = rng.uniform();
        for (int c = 0; c < dim; ++c)
            mix.data()[static_cast<std::size_t>(r) * dim + c] =
                eps * x_real.at(r * dim + c) + (1.0 - eps) * x_fake.at(r * dim + c);
    }
    Tensor xhat = tape.watch(mix);
    Tensor scores = d(xhat);
    tape.backward(tape.reduce_sum(scores));
    // grad() is zero when D is constant; the penalty then evaluates to lambda.
    Tensor g = tape.grad(xhat);
    Tensor norms = tape.row_l2(g);
    Tensor excess = tape.add_const(norms, -1.0);
    return tape.scale(tape.reduce_mean(tape.mul(excess, excess)), lambda);
}

}  // namespace scengen
