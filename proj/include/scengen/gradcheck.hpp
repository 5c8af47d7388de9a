#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scengen/network.hpp"

namespace scengen {

struct FdOptions {
    double tolerance = 1e-4;
    double step = 1e-5;
    // 0 checks every component; otherwise a seeded sample per parameter tensor.
    int max_per_tensor = 0;
    std::uint64_t seed = 7;
};

struct FdEntry {
    std::string param;
    int index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct FdReport {
    bool passed = true;
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_index = -1;
    int checked = 0;
    std::vector<FdEntry> failures;
};

// Central-difference audit of every (or a sampled subset of) parameter
// gradient against the tape's reverse pass. Forward runs in inference mode
// with spectral scales pinned, so the loss is a smooth function of the
// parameters.
FdReport finite_difference_check(Network& net, const std::vector<Tensor>& inputs,
                                 const FdOptions& opts = {});

}  // namespace scengen
