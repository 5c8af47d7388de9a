#include "scengen/runcmd.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>

#include "scengen/rng.hpp"

#include <json.hpp>

#include "scengen/bundle.hpp"
#include "scengen/csv.hpp"
#include "scengen/dataset.hpp"
#include "scengen/evalkit.hpp"
#include "scengen/gradcheck.hpp"
#include "scengen/oracle.hpp"
#include "scengen/sampler.hpp"
#include "scengen/simulator.hpp"
#include "scengen/trainer.hpp"

namespace scengen {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
}

// Resolved options: config file fields with command-line overrides applied.
struct Resolved {
    json cfg;
    std::string out_dir;
    std::uint64_t seed = 0;

    json section(const std::string& name) const {
        return cfg.contains(name) ? cfg.at(name) : json::object();
    }
};

Resolved resolve(const CliOptions& opts) {
    Resolved r;
    r.cfg = load_config(opts.config_path);
    if (opts.seed >= 0) r.cfg["seed"] = static_cast<std::uint64_t>(opts.seed);
    if (!r.cfg.contains("seed"))
        throw ConfigError("a seed is required (config \"seed\" or --seed); wall-clock seeding is "
                          "not supported");
    r.seed = r.cfg.at("seed").get<std::uint64_t>();
    r.out_dir = !opts.out_dir.empty() ? opts.out_dir
               : r.cfg.contains("out") ? r.cfg.at("out").get<std::string>()
                                       : "";
    if (r.out_dir.empty()) throw ConfigError("an output directory is required (--out)");
    return r;
}

void write_manifest(const std::string& dir, const std::string& command, const Resolved& r,
                    const json& inputs, const std::vector<std::string>& outputs) {
    json m;
    m["command"] = command;
    m["schema_version"] = ModelBundle::kSchemaVersion;
    m["seed"] = r.seed;
    m["config"] = r.cfg;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw DataError("cannot write manifest in " + dir);
    f << m.dump(2) << '\n';
}

std::string hash_config(const json& cfg) {
    const std::string s = cfg.dump();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(s.data(), s.size())));
    return buf;
}

OracleModel oracle_from_config(const json& j) {
    OracleModel o = default_oracle();
    if (j.contains("state_cov")) {
        const auto& rows = j.at("state_cov");
        o.state_cov = Mat(7, 7);
        for (int i = 0; i < 7; ++i)
            for (int c = 0; c < 7; ++c) o.state_cov.at(i, c) = rows.at(i).at(c).get<double>();
    }
    if (j.contains("response")) {
        const auto& rows = j.at("response");
        o.response = Mat(11, 7);
        for (int i = 0; i < 11; ++i)
            for (int c = 0; c < 7; ++c) o.response.at(i, c) = rows.at(i).at(c).get<double>();
    }
    auto vec = [&](const char* key, std::vector<double>& dst) {
        if (j.contains(key)) dst = j.at(key).get<std::vector<double>>();
    };
    vec("mean_reversion", o.mean_reversion);
    vec("level_target", o.level_target);
    vec("noise_scale", o.noise_scale);
    vec("init_level", o.init_level);
    vec("state_init", o.state_init);
    if (j.contains("missing_rate")) o.missing_rate = j.at("missing_rate").get<double>();
    o.validate();
    return o;
}

TrainConfig train_config_from(const json& j, std::uint64_t seed, int steps_override) {
    TrainConfig cfg;
    cfg.seed = seed;
    if (j.contains("loss_mode")) {
        const std::string m = j.at("loss_mode").get<std::string>();
        if (m == "hinge")
            cfg.loss_mode = LossMode::Hinge;
        else if (m == "wgan-gp")
            cfg.loss_mode = LossMode::WganGp;
        else
            throw ConfigError("unknown loss_mode '" + m + "' (hinge | wgan-gp)");
    }
    auto get = [&](const char* key, auto& dst) {
        if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
    };
    get("steps", cfg.steps);
    get("batch", cfg.batch);
    get("lr_d", cfg.lr_d);
    get("lr_g", cfg.lr_g);
    get("beta1", cfg.beta1);
    get("beta2", cfg.beta2);
    get("cycle_alpha", cfg.cycle_alpha);
    get("gp_lambda", cfg.gp_lambda);
    get("d_steps_per_g", cfg.d_steps_per_g);
    get("checkpoint_every", cfg.checkpoint_every);
    get("grad_clip", cfg.grad_clip);
    if (steps_override > 0) cfg.steps = steps_override;
    cfg.validate();
    return cfg;
}

ChainConfig chain_config_from(const json& j, std::uint64_t seed) {
    ChainConfig c;
    c.seed = seed;
    auto get = [&](const char* key, auto& dst) {
        if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
    };
    get("proposal_sigma", c.proposal_sigma);
    get("burn_in", c.burn_in);
    get("thinning", c.thinning);
    get("chains", c.chains);
    get("max_init_attempts", c.max_init_attempts);
    c.validate();
    return c;
}

double bound_from_json(const json& v, bool lower) {
    if (v.is_null())
        return lower ? -std::numeric_limits<double>::infinity()
                     : std::numeric_limits<double>::infinity();
    return v.get<double>();
}

ScenarioBox box_from_json(const json& j) {
    ScenarioBox box = ScenarioBox::unbounded(7);
    for (const auto& [key, value] : j.items()) {
        if (key.rfind("stv", 0) != 0)
            throw ConfigError("scenario box keys look like stv1..stv7, got '" + key + "'");
        const int idx = std::stoi(key.substr(3)) - 1;
        if (idx < 0 || idx >= 7) throw ConfigError("scenario box key out of range: " + key);
        box.lo[idx] = bound_from_json(value.at(0), true);
        box.hi[idx] = bound_from_json(value.at(1), false);
    }
    box.validate();
    return box;
}

// --box stv3=[-0.5,0.5]; an empty side is unbounded: stv3=[,0.5]
void apply_box_flag(ScenarioBox& box, const std::string& flag) {
    const auto eq = flag.find('=');
    if (eq == std::string::npos || flag.rfind("stv", 0) != 0)
        throw ConfigError("box flag syntax: stvK=[lo,hi], got '" + flag + "'");
    const int idx = std::stoi(flag.substr(3, eq - 3)) - 1;
    if (idx < 0 || idx >= 7) throw ConfigError("box flag dimension out of range: " + flag);
    std::string body = flag.substr(eq + 1);
    if (body.size() < 3 || body.front() != '[' || body.back() != ']')
        throw ConfigError("box flag syntax: stvK=[lo,hi], got '" + flag + "'");
    body = body.substr(1, body.size() - 2);
    const auto comma = body.find(',');
    if (comma == std::string::npos)
        throw ConfigError("box flag syntax: stvK=[lo,hi], got '" + flag + "'");
    const std::string lo = body.substr(0, comma), hi = body.substr(comma + 1);
    box.lo[idx] = lo.empty() ? -std::numeric_limits<double>::infinity() : std::stod(lo);
    box.hi[idx] = hi.empty() ? std::numeric_limits<double>::infinity() : std::stod(hi);
    if (box.lo[idx] > box.hi[idx])
        throw ConfigError("box flag defines an empty interval: " + flag);
}

Mat holdout_split(const Mat& all, double fraction, std::uint64_t seed, Mat& train) {
    Mat hold;
    hold.cols = all.cols;
    train.cols = all.cols;
    Rng rng = Rng(seed).split(0x401d);
    for (int r = 0; r < all.rows; ++r) {
        if (rng.uniform() < fraction)
            hold.push_row(all.row_vec(r));
        else
            train.push_row(all.row_vec(r));
    }
    return hold;
}

// ---- commands ------------------------------------------------------------

int cmd_synth(const CliOptions& opts) {
    Resolved r = resolve(opts);
    const json sc = r.section("synth");
    OracleModel oracle =
        sc.contains("oracle") ? oracle_from_config(sc.at("oracle")) : default_oracle();
    const int n_inst = sc.contains("instruments") ? sc.at("instruments").get<int>() : 4;
    const int n_dates = sc.contains("dates") ? sc.at("dates").get<int>() : 1000;
    RawSeries raw = synth_generate(oracle, n_inst, n_dates, r.seed);
    fs::create_directories(r.out_dir);
    const std::string fi = (fs::path(r.out_dir) / "instruments.csv").string();
    const std::string fsv = (fs::path(r.out_dir) / "state.csv").string();
    write_raw_series(raw, fi, fsv);
    write_manifest(r.out_dir, "synth", r, json::object(), {"instruments.csv", "state.csv"});
    std::cout << "synth: " << n_inst << " instruments x " << n_dates << " dates -> " << r.out_dir
              << "\n";
    return 0;
}

int cmd_prepare(const CliOptions& opts) {
    Resolved r = resolve(opts);
    const json pc = r.section("prepare");
    std::string in_dir = !opts.input_dir.empty()
                             ? opts.input_dir
                             : (pc.contains("in") ? pc.at("in").get<std::string>() : "");
    if (in_dir.empty()) throw ConfigError("prepare: --in directory required");
    AssembleConfig cfg;
    cfg.seed = r.seed;
    auto get = [&](const char* key, auto& dst) {
        if (pc.contains(key)) dst = pc.at(key).get<std::decay_t<decltype(dst)>>();
    };
    get("batches", cfg.n_batches);
    get("layers_per_batch", cfg.layers_per_batch);
    get("instruments_per_layer", cfg.n_instruments);
    get("horizon", cfg.transition_rows);
    get("max_layer_retries", cfg.max_layer_retries);
    double holdout = 0.0;
    if (pc.contains("holdout_fraction")) holdout = pc.at("holdout_fraction").get<double>();

    RawSeries raw = read_raw_series((fs::path(in_dir) / "instruments.csv").string(),
                                    (fs::path(in_dir) / "state.csv").string());
    AssembledData data = assemble_dataset(raw, cfg);

    fs::create_directories(r.out_dir);
    std::vector<std::string> outputs = {"dataset.csv", "d_s.csv", "features.json"};
    write_csv((fs::path(r.out_dir) / "dataset.csv").string(), dataset_header(), data.matrix);
    std::vector<std::string> ds_header;
    for (int i = 1; i <= 7; ++i) ds_header.push_back("dSTV_" + std::to_string(i));
    write_csv((fs::path(r.out_dir) / "d_s.csv").string(), ds_header, data.d_s);
    {
        json feats = json::array();
        for (const FeatureSpec& f : data.features) {
            feats.push_back(json{{"name", f.name},
                                 {"group", f.group == FeatureGroup::Eqv ? "eqv" : "stv"},
                                 {"transition", f.transition == TransitionKind::Relative
                                                    ? "relative"
                                                    : "absolute"},
                                 {"scaled", f.scaled},
                                 {"scale_min", f.scale_min},
                                 {"scale_max", f.scale_max}});
        }
        std::ofstream f(fs::path(r.out_dir) / "features.json");
        f << feats.dump(2) << '\n';
    }
    if (holdout > 0.0) {
        Mat ds_train, de_train;
        Mat ds_hold = holdout_split(data.d_s, holdout, r.seed + 1, ds_train);
        Mat de_hold = holdout_split(data.matrix, holdout, r.seed + 2, de_train);
        write_csv((fs::path(r.out_dir) / "d_s_train.csv").string(), ds_header, ds_train);
        write_csv((fs::path(r.out_dir) / "d_s_holdout.csv").string(), ds_header, ds_hold);
        write_csv((fs::path(r.out_dir) / "dataset_train.csv").string(), dataset_header(),
                  de_train);
        write_csv((fs::path(r.out_dir) / "dataset_holdout.csv").string(), dataset_header(),
                  de_hold);
        outputs.insert(outputs.end(), {"d_s_train.csv", "d_s_holdout.csv", "dataset_train.csv",
                                       "dataset_holdout.csv"});
    }
    write_manifest(r.out_dir, "prepare", r, json{{"in", in_dir}}, outputs);
    std::cout << "prepare: " << data.matrix.rows << " rows, " << data.d_s.rows
              << " unique state rows, " << data.redrawn_layers << " layer redraws -> " << r.out_dir
              << "\n";
    return 0;
}

int cmd_train_state(const CliOptions& opts) {
    Resolved r = resolve(opts);
    if (opts.data_path.empty()) throw ConfigError("train-state: --data d_s.csv required");
    Mat d_s = read_mat_csv(opts.data_path, 7);
    TrainConfig cfg = train_config_from(r.section("train_state"), r.seed, opts.steps);
    fs::create_directories(r.out_dir);

    ModelBundle bundle;
    if (!opts.bundle_path.empty()) bundle = load_bundle(opts.bundle_path);

    BiganTrainer trainer(d_s, cfg);
    const std::string bundle_dir = (fs::path(r.out_dir) / "bundle").string();
    trainer.on_checkpoint = [&](int step) {
        ModelBundle ck = bundle;
        ck.nets.insert_or_assign("gen_S", trainer.gen_s().clone());
        ck.nets.insert_or_assign("enc_Z", trainer.enc_z().clone());
        ck.nets.insert_or_assign("disc_SZ", trainer.disc_sz().clone());
        ck.state_affine = trainer.state_affine();
        ck.fingerprint.config_hash = hash_config(r.cfg);
        ck.fingerprint.bigan_steps = step;
        save_bundle(ck, (fs::path(r.out_dir) / ("checkpoint_" + std::to_string(step))).string());
    };
    trainer.run();

    bundle.nets.insert_or_assign("gen_S", trainer.gen_s().clone());
    bundle.nets.insert_or_assign("enc_Z", trainer.enc_z().clone());
    bundle.nets.insert_or_assign("disc_SZ", trainer.disc_sz().clone());
    bundle.state_affine = trainer.state_affine();
    if (bundle.features.empty() && r.cfg.contains("features_path")) {
        // optional: adopt fitted feature metadata from prepare
    }
    bundle.fingerprint.config_hash = hash_config(r.cfg);
    bundle.fingerprint.bigan_steps = cfg.steps;
    save_bundle(bundle, bundle_dir);
    export_loss_history(trainer.state(), (fs::path(r.out_dir) / "loss_state.csv").string());
    write_manifest(r.out_dir, "train-state", r, json{{"data", opts.data_path}},
                   {"bundle", "loss_state.csv"});
    std::cout << "train-state: " << cfg.steps << " steps -> " << bundle_dir << "\n";
    return 0;
}

int cmd_train_equity(const CliOptions& opts) {
    Resolved r = resolve(opts);
    if (opts.data_path.empty()) throw ConfigError("train-equity: --data dataset.csv required");
    if (opts.bundle_path.empty())
        throw ConfigError("train-equity: --bundle from train-state required");
    Mat d_e = read_mat_csv(opts.data_path, 29);
    TrainConfig cfg = train_config_from(r.section("train_equity"), r.seed, opts.steps);
    ModelBundle bundle = load_bundle(opts.bundle_path);
    fs::create_directories(r.out_dir);

    CganTrainer trainer(d_e, cfg);
    trainer.on_checkpoint = [&](int step) {
        ModelBundle ck = bundle;
        ck.nets.insert_or_assign("gen_E", trainer.gen_e().clone());
        ck.nets.insert_or_assign("disc_E", trainer.disc_e().clone());
        ck.cond_affine = trainer.cond_affine();
        ck.target_affine = trainer.target_affine();
        ck.fingerprint.cgan_steps = step;
        save_bundle(ck, (fs::path(r.out_dir) / ("checkpoint_" + std::to_string(step))).string());
    };
    trainer.run();

    bundle.nets.insert_or_assign("gen_E", trainer.gen_e().clone());
    bundle.nets.insert_or_assign("disc_E", trainer.disc_e().clone());
    bundle.cond_affine = trainer.cond_affine();
    bundle.target_affine = trainer.target_affine();
    bundle.fingerprint.cgan_steps = cfg.steps;
    const std::string bundle_dir = (fs::path(r.out_dir) / "bundle").string();
    save_bundle(bundle, bundle_dir);
    export_loss_history(trainer.state(), (fs::path(r.out_dir) / "loss_equity.csv").string());
    write_manifest(r.out_dir, "train-equity", r,
                   json{{"data", opts.data_path}, {"bundle", opts.bundle_path}},
                   {"bundle", "loss_equity.csv"});
    std::cout << "train-equity: " << cfg.steps << " steps -> " << bundle_dir << "\n";
    return 0;
}

ScenarioBox resolve_box(const Resolved& r, const CliOptions& opts, const json& section) {
    ScenarioBox box = ScenarioBox::unbounded(7);
    if (section.contains("box")) box = box_from_json(section.at("box"));
    for (const std::string& flag : opts.box_flags) apply_box_flag(box, flag);
    box.validate();
    return box;
}

int cmd_sample(const CliOptions& opts) {
    Resolved r = resolve(opts);
    if (opts.bundle_path.empty()) throw ConfigError("sample: --bundle required");
    ModelBundle bundle = load_bundle(opts.bundle_path);
    const json sc = r.section("sample");
    const int n = sc.contains("n") ? sc.at("n").get<int>() : 1000;
    ScenarioBox box = resolve_box(r, opts, sc);
    ChainConfig chain = chain_config_from(r.section("chain"), r.seed);

    NetworkStateGenerator gen(&bundle.net("gen_S"), bundle.state_affine);
    NetworkLatentEncoder enc(&bundle.net("enc_Z"), bundle.state_affine);
    McmcResult res = mh_sample_conditioned(gen, box, n, chain, &enc, nullptr);

    fs::create_directories(r.out_dir);
    std::vector<std::string> header;
    for (int i = 1; i <= 7; ++i) header.push_back("dSTV_" + std::to_string(i));
    write_csv((fs::path(r.out_dir) / "samples.csv").string(), header, res.samples);
    write_manifest(r.out_dir, "sample", r, json{{"bundle", opts.bundle_path}}, {"samples.csv"});
    std::cout << "sample: " << n << " draws, acceptance "
              << format_double(res.diag.acceptance_rate) << " -> " << r.out_dir << "\n";
    if (res.diag.low_acceptance) std::cout << "warning: " << res.diag.warning << "\n";
    return 0;
}

int cmd_simulate(const CliOptions& opts) {
    Resolved r = resolve(opts);
    if (opts.bundle_path.empty()) throw ConfigError("simulate: --bundle required");
    ModelBundle bundle = load_bundle(opts.bundle_path);
    const json sc = r.section("simulate");

    SimConfig cfg;
    cfg.seed = r.seed;
    cfg.chain = chain_config_from(r.section("chain"), r.seed);
    auto get = [&](const char* key, auto& dst) {
        if (sc.contains(key)) dst = sc.at(key).get<std::decay_t<decltype(dst)>>();
    };
    get("latent_count", cfg.latent_count);
    get("state_count", cfg.state_count);
    get("depth", cfg.depth);
    get("share_pairs", cfg.share_pairs_across_instruments);
    if (opts.depth >= 0) cfg.depth = opts.depth;
    if (opts.trajectories > 0) {
        if (opts.trajectories % cfg.state_count != 0)
            throw ConfigError("--trajectories must be divisible by the state draw count");
        cfg.latent_count = opts.trajectories / cfg.state_count;
    }

    std::vector<std::vector<double>> init;
    if (!sc.contains("init_levels"))
        throw ConfigError("simulate: config needs simulate.init_levels (one 11-vector per "
                          "instrument)");
    for (const auto& row : sc.at("init_levels")) {
        std::vector<double> lv = row.get<std::vector<double>>();
        if (lv.size() != 11) throw ConfigError("simulate: each init_levels row needs 11 entries");
        init.push_back(std::move(lv));
    }

    std::vector<ScenarioBox> boxes;
    if (sc.contains("boxes"))
        for (const auto& jb : sc.at("boxes")) boxes.push_back(box_from_json(jb));
    if (boxes.empty()) boxes.push_back(resolve_box(r, opts, sc));
    while (static_cast<int>(boxes.size()) < cfg.depth) boxes.push_back(boxes.back());
    boxes.resize(cfg.depth);

    NetworkStateGenerator sgen(&bundle.net("gen_S"), bundle.state_affine);
    NetworkLatentEncoder enc(&bundle.net("enc_Z"), bundle.state_affine);
    NetworkEquityGenerator egen(&bundle.net("gen_E"), bundle.cond_affine, bundle.target_affine);
    std::vector<FeatureSpec> eqv(bundle.features.begin(),
                                 bundle.features.begin() + (bundle.features.empty() ? 0 : 11));
    if (eqv.size() != 11) eqv = default_eqv_features();

    PortfolioRun run = portfolio_simulate(init, boxes, sgen, egen, eqv, cfg, &enc, nullptr);

    fs::create_directories(r.out_dir);
    std::vector<std::string> outputs;
    std::vector<std::string> header = {"t", "m"};
    for (int i = 1; i <= 11; ++i) header.push_back("EQV_" + std::to_string(i));
    bool any_scaled = false;
    for (const FeatureSpec& f : eqv) any_scaled = any_scaled || f.scaled;
    for (std::size_t k = 0; k < run.trajectories.size(); ++k) {
        Mat table;
        table.cols = 13;
        for (int m = 0; m < run.n_t; ++m) {
            const Trajectory& tr = run.trajectories[k][m];
            const int last = tr.aborted ? tr.abort_step : cfg.depth;
            for (int t = 0; t <= last; ++t) {
                std::vector<double> row = {static_cast<double>(t), static_cast<double>(m)};
                for (int c = 0; c < 11; ++c) row.push_back(tr.states.at(t, c));
                table.push_row(row);
            }
        }
        const std::string name = "instrument_" + std::to_string(k + 1) + ".csv";
        write_csv((fs::path(r.out_dir) / name).string(), header, table);
        outputs.push_back(name);
        if (any_scaled) {
            // undo the [0,100] preparation scaling using the stored bounds
            Mat denorm = table;
            for (int rrow = 0; rrow < denorm.rows; ++rrow)
                for (int c = 0; c < 11; ++c)
                    if (eqv[c].scaled)
                        denorm.at(rrow, 2 + c) = affine_scale_invert(
                            denorm.at(rrow, 2 + c), eqv[c].scale_min, eqv[c].scale_max);
            const std::string dname = "instrument_" + std::to_string(k + 1) + "_denorm.csv";
            write_csv((fs::path(r.out_dir) / dname).string(), header, denorm);
            outputs.push_back(dname);
        }
    }
    // binned marginal estimates for every generated transition feature at each step
    {
        Mat table;
        table.cols = 6;
        for (int t = 0; t < cfg.depth; ++t)
            for (int c = 0; c < 10; ++c) {
                BinnedEstimate be =
                    binned_estimate(run, c, t, default_bin_edges(run, c, t), 0);
                for (std::size_t b = 0; b + 1 < be.edges.size(); ++b)
                    table.push_row({static_cast<double>(c), static_cast<double>(t), be.edges[b],
                                    be.edges[b + 1], be.mean[b], be.stderr_[b]});
            }
        write_csv((fs::path(r.out_dir) / "binned_estimates.csv").string(),
                  {"feature", "t", "bin_lo", "bin_hi", "mean", "stderr"}, table);
        outputs.push_back("binned_estimates.csv");
    }
    write_manifest(r.out_dir, "simulate", r, json{{"bundle", opts.bundle_path}}, outputs);
    std::cout << "simulate: " << run.trajectories.size() << " instruments x " << run.n_t
              << " trajectories x depth " << cfg.depth << ", " << run.aborted_count
              << " aborted, " << run.mcmc_passes << " mcmc passes -> " << r.out_dir << "\n";
    return 0;
}

int cmd_evaluate(const CliOptions& opts) {
    Resolved r = resolve(opts);
    if (opts.real_path.empty() || opts.generated_path.empty())
        throw ConfigError("evaluate: --real and --generated csv files required");
    Mat real = read_mat_csv(opts.real_path);
    Mat gen = read_mat_csv(opts.generated_path, real.cols);
    ScoreReport rep = evaluate_datasets(real, gen);
    const json ec = r.section("evaluate");
    const int bins = ec.contains("bins") ? ec.at("bins").get<int>() : 60;
    TrianglePlotData tri = triangle_export(real, gen, bins);

    fs::create_directories(r.out_dir);
    json out;
    out["ks"] = json{{"score", rep.ks.score}, {"one_minus_d", rep.ks.one_minus_d}};
    out["pca"] = json{{"score", rep.pca.score},
                      {"retained", rep.pca.retained},
                      {"real_eigenvalues", rep.pca.real_eigenvalues},
                      {"gen_eigenvalues", rep.pca.gen_eigenvalues},
                      {"clipped_rel_errors", rep.pca.clipped_rel_errors}};
    out["n_real"] = rep.n_real;
    out["n_gen"] = rep.n_gen;
    {
        std::ofstream f(fs::path(r.out_dir) / "score_report.json");
        f << out.dump(2) << '\n';
    }
    auto dump_diag = [&](const std::vector<Hist1D>& hs, const std::string& name) {
        Mat table;
        table.cols = 4;
        for (const Hist1D& h : hs) {
            const double w = (h.hi - h.lo) / static_cast<double>(h.counts.size());
            for (std::size_t b = 0; b < h.counts.size(); ++b)
                table.push_row({static_cast<double>(h.feature), h.lo + b * w, h.lo + (b + 1) * w,
                                h.counts[b]});
        }
        write_csv((fs::path(r.out_dir) / name).string(), {"feature", "bin_lo", "bin_hi", "count"},
                  table);
    };
    dump_diag(tri.real_diag, "triangle_real_1d.csv");
    dump_diag(tri.gen_diag, "triangle_gen_1d.csv");
    auto dump_pairs = [&](const std::vector<Hist2D>& hs, const std::string& name,
                          const std::string& levels_name) {
        Mat table;
        table.cols = 7;
        Mat levels;
        levels.cols = 4;
        for (const Hist2D& h : hs) {
            const double w1 = (h.hi1 - h.lo1) / h.bins;
            const double w2 = (h.hi2 - h.lo2) / h.bins;
            for (int b1 = 0; b1 < h.bins; ++b1)
                for (int b2 = 0; b2 < h.bins; ++b2) {
                    const double c = h.counts[static_cast<std::size_t>(b1) * h.bins + b2];
                    if (c == 0.0) continue;  // sparse export
                    table.push_row({static_cast<double>(h.f1), static_cast<double>(h.f2),
                                    h.lo1 + b1 * w1, h.lo1 + (b1 + 1) * w1, h.lo2 + b2 * w2,
                                    h.lo2 + (b2 + 1) * w2, c});
                }
            levels.push_row({static_cast<double>(h.f1), static_cast<double>(h.f2), h.level68,
                             h.level95});
        }
        write_csv((fs::path(r.out_dir) / name).string(),
                  {"f1", "f2", "b1_lo", "b1_hi", "b2_lo", "b2_hi", "count"}, table);
        write_csv((fs::path(r.out_dir) / levels_name).string(), {"f1", "f2", "level68", "level95"},
                  levels);
    };
    dump_pairs(tri.real_pairs, "triangle_real_2d.csv", "triangle_real_levels.csv");
    dump_pairs(tri.gen_pairs, "triangle_gen_2d.csv", "triangle_gen_levels.csv");
    write_manifest(r.out_dir, "evaluate", r,
                   json{{"real", opts.real_path}, {"generated", opts.generated_path}},
                   {"score_report.json", "triangle_real_1d.csv", "triangle_gen_1d.csv",
                    "triangle_real_2d.csv", "triangle_gen_2d.csv"});
    std::cout << "evaluate: S_ks " << format_double(rep.ks.score) << ", S_pca "
              << format_double(rep.pca.score) << " -> " << r.out_dir << "\n";
    return 0;
}

int cmd_grad_check(const CliOptions& opts) {
    Resolved r = resolve(opts);
    const json gc = r.section("grad_check");
    FdOptions fd;
    fd.seed = r.seed;
    if (gc.contains("tolerance")) fd.tolerance = gc.at("tolerance").get<double>();
    if (gc.contains("max_per_tensor")) fd.max_per_tensor = gc.at("max_per_tensor").get<int>();
    const int batch = gc.contains("batch") ? gc.at("batch").get<int>() : 3;
    std::vector<std::string> ids;
    const std::string which = opts.network.empty() ? "all" : opts.network;
    if (which == "all")
        ids = {"gen_S", "enc_Z", "disc_SZ", "gen_E", "disc_E"};
    else
        ids = {which};

    fs::create_directories(r.out_dir);
    json report = json::array();
    bool all_passed = true;
    Rng rng(r.seed);
    for (const std::string& id : ids) {
        Network net = build_network(spec_by_id(id), r.seed + 17);
        std::vector<Tensor> inputs;
        Rng ri = rng.split(std::hash<std::string>{}(id));
        for (const auto& sh : net.spec().input_shapes) {
            Tensor t({batch, sh[0] * sh[1]});
            for (int i = 0; i < t.size(); ++i) t.data()[i] = ri.normal();
            inputs.push_back(std::move(t));
        }
        FdReport rep = finite_difference_check(net, inputs, fd);
        all_passed = all_passed && rep.passed;
        report.push_back(json{{"network", id},
                              {"passed", rep.passed},
                              {"checked", rep.checked},
                              {"max_rel_err", rep.max_rel_err},
                              {"worst_param", rep.worst_param},
                              {"worst_index", rep.worst_index}});
        std::cout << "grad-check " << id << ": " << (rep.passed ? "pass" : "FAIL")
                  << ", max rel err " << format_double(rep.max_rel_err) << " (" << rep.checked
                  << " components)\n";
    }
    {
        std::ofstream f(fs::path(r.out_dir) / "grad_check.json");
        f << report.dump(2) << '\n';
    }
    write_manifest(r.out_dir, "grad-check", r, json::object(), {"grad_check.json"});
    if (!all_passed) throw NumericError("gradient check failed");
    return 0;
}

}  // namespace

int run_command(const CliOptions& opts) {
    try {
        if (opts.command == "synth") return cmd_synth(opts);
        if (opts.command == "prepare") return cmd_prepare(opts);
        if (opts.command == "train-state") return cmd_train_state(opts);
        if (opts.command == "train-equity") return cmd_train_equity(opts);
        if (opts.command == "sample") return cmd_sample(opts);
        if (opts.command == "simulate") return cmd_simulate(opts);
        if (opts.command == "evaluate") return cmd_evaluate(opts);
        if (opts.command == "grad-check") return cmd_grad_check(opts);
        std::cerr << "error: unknown command '" << opts.command << "'\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const InfeasibleScenarioError& e) {
        std::cerr << "infeasible scenario: " << e.what() << "\n";
        return 5;
    } catch (const ShapeError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace scengen
