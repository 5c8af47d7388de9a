#pragma once

#include <stdexcept>

namespace scengen {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InfeasibleScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace scengen
