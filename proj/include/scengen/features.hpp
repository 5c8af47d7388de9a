#pragma once

#include <limits>
#include <string>
#include <vector>

#include "scengen/errors.hpp"

namespace scengen {

enum class FeatureGroup { Eqv, Stv };
enum class TransitionKind { Absolute, Relative };

struct FeatureSpec {
    std::string name;
    FeatureGroup group = FeatureGroup::Eqv;
    TransitionKind transition = TransitionKind::Absolute;
    bool scaled = false;       // affine normalization into [0,100] during preparation
    double scale_min = 0.0;    // fitted metadata, persisted with the model
    double scale_max = 100.0;
};

// Instrument features per the reference tables: price, market cap, ESG score,
// controversy, four sector correlations, two normalized trends, volatility.
std::vector<FeatureSpec> default_eqv_features();
// State features: equity index, vix, swap spread, oil, fx, sovereign risk, gold.
std::vector<FeatureSpec> default_stv_features();

inline double missing_value() { return std::numeric_limits<double>::quiet_NaN(); }

// Gap fill with the latest known value; a leading gap is an error naming the
// series.
std::vector<double> forward_fill(const std::vector<double>& series, const std::string& name);

// v -> 100 (v - min) / (max - min)
double affine_scale_apply(double v, double lo, double hi);
double affine_scale_invert(double s, double lo, double hi);
void fit_affine_scale(const std::vector<double>& values, double& lo, double& hi);

double compute_transition(double v_t, double v_next, TransitionKind kind);
// Exact inverse of compute_transition.
double apply_transition(double v_t, double delta, TransitionKind kind);

}  // namespace scengen
