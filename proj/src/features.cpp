#include "scengen/features.hpp"

#include <cmath>

namespace scengen {

std::vector<FeatureSpec> default_eqv_features() {
    using G = FeatureGroup;
    using T = TransitionKind;
    return {
        {"price", G::Eqv, T::Relative, false, 0, 100},
        {"market_cap", G::Eqv, T::Relative, false, 0, 100},
        {"esg_score", G::Eqv, T::Absolute, true, 0, 100},
        {"controversy", G::Eqv, T::Absolute, true, 0, 100},
        {"corr_staples", G::Eqv, T::Absolute, false, 0, 100},
        {"corr_energy", G::Eqv, T::Absolute, false, 0, 100},
        {"corr_financials", G::Eqv, T::Absolute, false, 0, 100},
        {"corr_it", G::Eqv, T::Absolute, false, 0, 100},
        {"trend_1m", G::Eqv, T::Absolute, false, 0, 100},
        {"trend_12m", G::Eqv, T::Absolute, false, 0, 100},
        {"volatility_1y", G::Eqv, T::Absolute, false, 0, 100},
    };
}

std::vector<FeatureSpec> default_stv_features() {
    using G = FeatureGroup;
    using T = TransitionKind;
    return {
        {"equity_index", G::Stv, T::Relative, false, 0, 100},
        {"vix", G::Stv, T::Absolute, false, 0, 100},
        {"swap_spread", G::Stv, T::Absolute, false, 0, 100},
        {"oil", G::Stv, T::Relative, false, 0, 100},
        {"eurusd", G::Stv, T::Relative, false, 0, 100},
        {"sovereign_cds", G::Stv, T::Absolute, false, 0, 100},
        {"gold", G::Stv, T::Relative, false, 0, 100},
    };
}

std::vector<double> forward_fill(const std::vector<double>& series, const std::string& name) {
    if (series.empty()) return {};
    if (std::isnan(series.front()))
        throw DataError("forward_fill: series '" + name + "' starts with a gap");
    std::vector<double> out(series.size());
    double last = series.front();
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (!std::isnan(series[i])) last = series[i];
        out[i] = last;
    }
    return out;
}

double affine_scale_apply(double v, double lo, double hi) {
    if (!(lo < hi)) throw DataError("affine scale: min must be strictly below max");
    return 100.0 * (v - lo) / (hi - lo);
}

double affine_scale_invert(double s, double lo, double hi) {
    if (!(lo < hi)) throw DataError("affine scale: min must be strictly below max");
    return lo + s * (hi - lo) / 100.0;
}

void fit_affine_scale(const std::vector<double>& values, double& lo, double& hi) {
    if (values.empty()) throw DataError("affine scale: no values to fit");
    lo = values[0];
    hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(lo < hi)) throw DataError("affine scale: constant series cannot be rescaled");
}

double compute_transition(double v_t, double v_next, TransitionKind kind) {
    if (kind == TransitionKind::Relative) {
        if (v_t <= 0.0)
            throw DataError("relative transition requires a strictly positive base value");
        return v_next / v_t - 1.0;
    }
    return v_next - v_t;
}

double apply_transition(double v_t, double delta, TransitionKind kind) {
    if (kind == TransitionKind::Relative) return v_t * (1.0 + delta);
    return v_t + delta;
}

}  // namespace scengen
