#include "scengen/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "scengen/csv.hpp"
#include "scengen/evalkit.hpp"
#include "scengen/rng.hpp"

namespace scengen {

void OracleModel::validate() const {
    if (static_cast<int>(eqv.size()) != 11 || static_cast<int>(stv.size()) != 7)
        throw ConfigError("oracle: expected 11 instrument features and 7 state features");
    if (state_cov.rows != 7 || state_cov.cols != 7)
        throw ConfigError("oracle: state covariance must be 7x7");
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) {
            if (!std::isfinite(state_cov.at(i, j)))
                throw ConfigError("oracle: non-finite covariance entry");
            if (std::fabs(state_cov.at(i, j) - state_cov.at(j, i)) > 1e-12)
                throw ConfigError("oracle: covariance must be symmetric");
        }
    EigenResult e = jacobi_eigen(state_cov);
    if (e.values.back() <= 0.0)
        throw ConfigError("oracle: covariance must be positive definite");
    if (response.rows != 11 || response.cols != 7)
        throw ConfigError("oracle: response matrix must be 11x7");
    auto need11 = [](const std::vector<double>& v, const char* what) {
        if (v.size() != 11) throw ConfigError(std::string("oracle: ") + what + " must have 11 entries");
    };
    need11(mean_reversion, "mean_reversion");
    need11(level_target, "level_target");
    need11(noise_scale, "noise_scale");
    need11(init_level, "init_level");
    if (state_init.size() != 7) throw ConfigError("oracle: state_init must have 7 entries");
    for (int f = 0; f < 11; ++f)
        if (eqv[f].transition == TransitionKind::Relative && init_level[f] <= 0.0)
            throw ConfigError("oracle: relative-kind feature needs a positive initial level");
    for (int f = 0; f < 7; ++f)
        if (stv[f].transition == TransitionKind::Relative && state_init[f] <= 0.0)
            throw ConfigError("oracle: relative-kind state needs a positive initial level");
    if (missing_rate < 0.0 || missing_rate >= 1.0)
        throw ConfigError("oracle: missing_rate must lie in [0,1)");
}

OracleModel default_oracle() {
    OracleModel o;
    o.eqv = default_eqv_features();
    o.stv = default_stv_features();

    // daily transition scales: returns for relative features, level units for
    // absolute ones
    const std::vector<double> sd = {0.011, 0.9, 0.02, 0.016, 0.005, 2.5, 0.009};
    Mat corr(7, 7, 0.0);
    for (int i = 0; i < 7; ++i) corr.at(i, i) = 1.0;
    auto set = [&](int i, int j, double r) { corr.at(i, j) = corr.at(j, i) = r; };
    set(0, 1, -0.55);  // equity index vs vix
    set(0, 3, 0.30);   // equity vs oil
    set(0, 5, -0.30);  // equity vs sovereign risk
    set(0, 6, -0.15);  // equity vs gold
    set(1, 5, 0.25);
    set(2, 5, 0.35);   // swap spread vs sovereign risk
    set(3, 6, 0.20);
    set(4, 6, 0.25);   // fx vs gold
    o.state_cov = Mat(7, 7);
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) o.state_cov.at(i, j) = corr.at(i, j) * sd[i] * sd[j];

    o.response = Mat(11, 7, 0.0);
    auto a = [&](int c, int d, double v) { o.response.at(c, d) = v; };
    a(0, 0, 0.90);    // price return follows the index
    a(0, 1, -0.0020); // and softens when vix jumps
    a(1, 0, 0.85);    // market cap tracks price
    a(1, 1, -0.0015);
    a(4, 0, 0.05);    // correlation features drift mildly with the market
    a(5, 3, 0.10);    // energy correlation follows oil
    a(6, 5, -0.0008);
    a(7, 0, 0.06);
    a(8, 0, 9.0);     // one-month trend is index-driven
    a(8, 1, -0.02);
    a(9, 0, 4.0);     // one-year trend, slower
    a(10, 1, 0.012);  // volatility follows vix

    o.mean_reversion = {0.0, 0.0, 0.010, 0.020, 0.010, 0.010, 0.010, 0.010, 0.002, 0.002, 0.005};
    o.level_target = {100.0, 5000.0, 55.0, 3.0, 0.25, 0.30, 0.35, 0.40, 0.0, 0.0, 0.22};
    o.noise_scale = {0.006, 0.007, 0.15, 0.10, 0.004, 0.004, 0.004, 0.004, 0.05, 0.04, 0.004};
    o.init_level = o.level_target;
    o.init_level[0] = 100.0;
    o.init_level[1] = 5000.0;
    o.state_init = {4000.0, 20.0, 0.5, 75.0, 1.08, 120.0, 1900.0};
    o.missing_rate = 0.01;
    return o;
}

std::vector<std::pair<int, int>> oracle_dominant_entries() {
    return {{0, 0}, {1, 0}, {8, 0}, {9, 0}};
}

Mat cholesky(const Mat& spd) {
    const int n = spd.rows;
    if (n != spd.cols) throw ConfigError("cholesky: matrix not square");
    Mat l(n, n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = spd.at(i, j);
            for (int k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
            if (i == j) {
                if (s <= 0.0) throw ConfigError("cholesky: matrix not positive definite");
                l.at(i, i) = std::sqrt(s);
            } else {
                l.at(i, j) = s / l.at(j, j);
            }
        }
    }
    return l;
}

namespace {

// One multivariate normal draw; positivity of the evolved levels is handled
// where transitions are applied, so the raw law stays exactly Gaussian.
void draw_ds(const OracleModel& o, const Mat& l, Rng& rng, double* out) {
    (void)o;
    double eta[7];
    for (int i = 0; i < 7; ++i) eta[i] = rng.normal();
    for (int i = 0; i < 7; ++i) {
        double acc = 0.0;
        for (int j = 0; j <= i; ++j) acc += l.at(i, j) * eta[j];
        out[i] = acc;
    }
}

double clamp_level(const OracleModel& o, int f, double v) {
    const std::string& name = o.eqv[f].name;
    if (o.eqv[f].transition == TransitionKind::Relative) return v;  // positivity via the floor
    if (name.rfind("corr_", 0) == 0) return std::clamp(v, -0.99, 0.99);
    if (name == "esg_score" || name == "controversy") return std::clamp(v, 0.5, 99.5);
    if (name == "volatility_1y") return std::max(v, 0.01);
    return v;
}

}  // namespace

Mat draw_state_transitions(const OracleModel& oracle, int n, std::uint64_t seed) {
    oracle.validate();
    const Mat l = cholesky(oracle.state_cov);
    Rng rng = Rng(seed).split(0xd5);
    Mat out(n, 7);
    for (int r = 0; r < n; ++r) draw_ds(oracle, l, rng, out.row(r));
    return out;
}

RawSeries synth_generate(const OracleModel& oracle, int n_instruments, int n_dates,
                         std::uint64_t seed) {
    oracle.validate();
    if (n_instruments < 1 || n_dates < 2) throw ConfigError("synth: need instruments and dates");
    const Mat l = cholesky(oracle.state_cov);
    Rng root(seed);

    RawSeries raw;
    raw.eqv = oracle.eqv;
    raw.stv = oracle.stv;
    raw.dates = business_days(days_from_civil(2012, 1, 2), n_dates);
    raw.instruments.reserve(n_instruments);
    for (int k = 0; k < n_instruments; ++k)
        raw.instruments.push_back("INST_" + std::to_string(k + 1));

    // state path
    Rng rs = root.split(0x57a7e);
    raw.stv_values.assign(7, std::vector<double>(n_dates, missing_value()));
    std::vector<double> s = oracle.state_init;
    for (int d = 0; d < n_dates; ++d) {
        for (int f = 0; f < 7; ++f) raw.stv_values[f][d] = s[f];
        if (d + 1 == n_dates) break;
        double ds[7];
        draw_ds(oracle, l, rs, ds);
        for (int f = 0; f < 7; ++f) {
            double delta = ds[f];
            if (oracle.stv[f].transition == TransitionKind::Relative && delta < -0.95)
                delta = -0.95;  // keep the level positive
            s[f] = apply_transition(s[f], delta, oracle.stv[f].transition);
        }
    }
    // recompute per-day ds from the stored levels for the instrument response
    // (identical by construction, but keeps the two paths consistent)
    Mat ds_path(n_dates - 1, 7);
    for (int d = 0; d + 1 < n_dates; ++d)
        for (int f = 0; f < 7; ++f)
            ds_path.at(d, f) = compute_transition(raw.stv_values[f][d], raw.stv_values[f][d + 1],
                                                  oracle.stv[f].transition);

    raw.eqv_values.assign(n_instruments, std::vector<std::vector<double>>(
                                             11, std::vector<double>(n_dates, missing_value())));
    for (int k = 0; k < n_instruments; ++k) {
        Rng rk = root.split(0x1000 + k);
        std::vector<double> lev(11);
        for (int f = 0; f < 11; ++f) {
            if (oracle.eqv[f].transition == TransitionKind::Relative)
                lev[f] = oracle.init_level[f] * std::exp(0.25 * rk.normal());
            else
                lev[f] = clamp_level(oracle, f,
                                     oracle.init_level[f] +
                                         0.15 * std::fabs(oracle.level_target[f] + 1.0) *
                                             rk.normal());
        }
        for (int d = 0; d < n_dates; ++d) {
            for (int f = 0; f < 11; ++f) raw.eqv_values[k][f][d] = lev[f];
            if (d + 1 == n_dates) break;
            for (int f = 0; f < 11; ++f) {
                double delta = 0.0;
                for (int j = 0; j < 7; ++j) delta += oracle.response.at(f, j) * ds_path.at(d, j);
                if (oracle.mean_reversion[f] != 0.0) {
                    if (oracle.eqv[f].transition == TransitionKind::Relative)
                        delta += oracle.mean_reversion[f] *
                                 (std::log(oracle.level_target[f]) - std::log(lev[f]));
                    else
                        delta += oracle.mean_reversion[f] * (oracle.level_target[f] - lev[f]);
                }
                delta += oracle.noise_scale[f] * rk.normal();
                if (oracle.eqv[f].transition == TransitionKind::Relative && delta < -0.95)
                    delta = -0.95;
                lev[f] = clamp_level(oracle, f,
                                     apply_transition(lev[f], delta, oracle.eqv[f].transition));
            }
        }
    }

    if (oracle.missing_rate > 0.0) {
        Rng rm = root.split(0x9a9);
        for (int k = 0; k < n_instruments; ++k)
            for (int f = 0; f < 11; ++f)
                for (int d = 1; d < n_dates; ++d)
                    if (rm.uniform() < oracle.missing_rate)
                        raw.eqv_values[k][f][d] = missing_value();
    }
    return raw;
}

}  // namespace scengen
