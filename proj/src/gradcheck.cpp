#include "scengen/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace scengen {

namespace {

double loss_value(Network& net, const std::vector<Tensor>& inputs,
                  const std::vector<double>& sigmas) {
    Tape tape;
    BindOptions opts;
    opts.requires_grad = false;
    opts.mode = Mode::Infer;
    opts.sn_sigma_fixed = sigmas;
    Binding b = net.bind(tape, opts);
    Tensor out = net.forward(b, inputs);
    return tape.reduce_sum(out).value();
}

std::vector<Tensor> duplicate_rows(const std::vector<Tensor>& inputs) {
    std::vector<Tensor> out;
    for (const Tensor& t : inputs) {
        const int r = t.shape()[0], c = t.shape()[1];
        Tensor d({2 * r, c});
        for (int i = 0; i < 2 * r; ++i)
            std::copy(t.data() + (i % r) * c, t.data() + (i % r) * c + c, d.data() + i * c);
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace

FdReport finite_difference_check(Network& net, const std::vector<Tensor>& inputs,
                                 const FdOptions& opts) {
    // Batchnorm inference needs populated running statistics.
    if (net.has_batchnorm()) {
        bool uninit = false;
        for (const BnStats& s : net.bn_stats()) uninit = uninit || !s.initialized;
        if (uninit) {
            std::vector<Tensor> warm =
                inputs.at(0).shape()[0] >= 2 ? inputs : duplicate_rows(inputs);
            Tape tape;
            BindOptions bo;
            bo.requires_grad = false;
            bo.mode = Mode::Train;
            bo.sn_frozen = true;
            Binding b = net.bind(tape, bo);
            net.forward(b, warm);
        }
    }
    const std::vector<double> sigmas = net.current_sn_sigmas();

    // Analytic gradients of the summed output.
    Tape tape;
    BindOptions bo;
    bo.requires_grad = true;
    bo.mode = Mode::Infer;
    bo.sn_sigma_fixed = sigmas;
    Binding b = net.bind(tape, bo);
    Tensor loss = tape.reduce_sum(net.forward(b, inputs));
    tape.backward(loss);
    std::vector<Tensor> grads = net.grads(b);

    FdReport report;
    Rng rng(opts.seed);
    for (std::size_t p = 0; p < net.params().size(); ++p) {
        Tensor& param = net.params()[p];
        const int n = param.size();
        std::vector<int> indices;
        if (opts.max_per_tensor <= 0 || opts.max_per_tensor >= n) {
            indices.resize(n);
            for (int i = 0; i < n; ++i) indices[i] = i;
        } else {
            Rng r = rng.split(p);
            std::vector<int> pool(n);
            for (int i = 0; i < n; ++i) pool[i] = i;
            for (int i = 0; i < opts.max_per_tensor; ++i) {
                const int j = i + static_cast<int>(r.below(n - i));
                std::swap(pool[i], pool[j]);
                indices.push_back(pool[i]);
            }
        }
        for (int i : indices) {
            const double analytic = grads[p].at(i);
            double last_numeric = 0.0;
            auto rel_at = [&](double h) {
                const double keep = param.at(i);
                param.data()[i] = keep + h;
                const double up = loss_value(net, inputs, sigmas);
                param.data()[i] = keep - h;
                const double down = loss_value(net, inputs, sigmas);
                param.data()[i] = keep;
                last_numeric = (up - down) / (2.0 * h);
                // Floor the denominator: below it the comparison is absolute,
                // which keeps finite-difference rounding noise out of the score.
                return std::fabs(analytic - last_numeric) /
                       std::max({std::fabs(analytic), std::fabs(last_numeric), 1e-3});
            };
            double rel = rel_at(opts.step);
            // A perturbation that crosses an activation kink makes the central
            // difference average two slopes; shrinking h separates that from a
            // genuinely wrong gradient, which stays wrong as h -> 0. The ladder
            // goes deep enough to escape activations sitting ~1e-6 from a kink
            // while staying above the f64 rounding floor.
            for (double div : {8.0, 64.0, 512.0, 4096.0}) {
                if (rel <= opts.tolerance) break;
                rel = std::min(rel, rel_at(opts.step / div));
            }
            ++report.checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = net.param_names()[p];
                report.worst_index = i;
            }
            if (rel > opts.tolerance) {
                report.passed = false;
                if (report.failures.size() < 32)
                    report.failures.push_back(
                        {net.param_names()[p], i, analytic, last_numeric, rel});
            }
        }
    }
    return report;
}

}  // namespace scengen
