#pragma once

#include <string>
#include <vector>

namespace scengen {

// Raw command-line surface; flag values override config-file fields.
struct CliOptions {
    std::string command;
    std::string config_path;
    std::string out_dir;
    std::string bundle_path;
    std::string data_path;
    std::string input_dir;
    std::string real_path;
    std::string generated_path;
    std::string network;  // grad-check target: one id or "all"
    std::vector<std::string> box_flags;  // e.g. stv3=[-0.5,0.5]
    long long seed = -1;                 // -1 = not set on the command line
    int steps = -1;
    int trajectories = -1;
    int depth = -1;
};

// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure,
// 5 infeasible scenario.
int run_command(const CliOptions& opts);

}  // namespace scengen
