#include <CLI11.hpp>

#include "scengen/runcmd.hpp"

int main(int argc, char** argv) {
    CLI::App app{"scengen: adversarial generation and scenario-conditioned simulation of "
                 "tabular financial transitions"};
    app.require_subcommand(0, 1);

    scengen::CliOptions opts;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "JSON run configuration");
        cmd->add_option("--seed", opts.seed, "RNG seed (overrides the config)");
        cmd->add_option("--out", opts.out_dir, "output directory");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate the synthetic market feeds");
    add_common(synth);

    CLI::App* prepare = app.add_subcommand("prepare", "assemble training datasets from feeds");
    add_common(prepare);
    prepare->add_option("--in", opts.input_dir, "directory with instruments.csv and state.csv");

    CLI::App* train_state =
        app.add_subcommand("train-state", "train the coupled generator/encoder on state "
                                          "transitions");
    add_common(train_state);
    train_state->add_option("--data", opts.data_path, "d_s csv (7 columns)");
    train_state->add_option("--bundle", opts.bundle_path, "existing bundle to extend");
    train_state->add_option("--steps", opts.steps, "training steps (overrides the config)");

    CLI::App* train_equity =
        app.add_subcommand("train-equity", "train the conditional generator on instrument "
                                           "transitions");
    add_common(train_equity);
    train_equity->add_option("--data", opts.data_path, "dataset csv (29 columns)");
    train_equity->add_option("--bundle", opts.bundle_path, "bundle from train-state");
    train_equity->add_option("--steps", opts.steps, "training steps (overrides the config)");

    CLI::App* sample = app.add_subcommand("sample", "scenario-conditioned state transitions");
    add_common(sample);
    sample->add_option("--bundle", opts.bundle_path, "trained bundle");
    sample->add_option("--box", opts.box_flags, "interval per dimension, e.g. stv3=[-0.5,0.5]");

    CLI::App* simulate = app.add_subcommand("simulate", "recursive portfolio simulation");
    add_common(simulate);
    simulate->add_option("--bundle", opts.bundle_path, "trained bundle");
    simulate->add_option("--box", opts.box_flags, "interval per dimension, e.g. stv3=[-0.5,0.5]");
    simulate->add_option("--trajectories", opts.trajectories,
                         "trajectory count (latent draws x state draws)");
    simulate->add_option("--depth", opts.depth, "time steps");

    CLI::App* evaluate = app.add_subcommand("evaluate", "quality scores and triangle-plot data");
    add_common(evaluate);
    evaluate->add_option("--real", opts.real_path, "reference csv");
    evaluate->add_option("--generated", opts.generated_path, "generated csv");

    CLI::App* grad = app.add_subcommand("grad-check", "finite-difference gradient audit");
    add_common(grad);
    grad->add_option("--network", opts.network, "gen_S|enc_Z|disc_SZ|gen_E|disc_E|all");

    CLI11_PARSE(app, argc, argv);

    if (app.get_subcommands().empty()) {
        std::cout << app.help();
        return 2;
    }
    opts.command = app.get_subcommands().front()->get_name();
    return scengen::run_command(opts);
}
