#pragma once

#include <string>
#include <vector>

#include "scengen/mat.hpp"

namespace scengen {

struct EigenResult {
    std::vector<double> values;  // descending
    Mat vectors;                 // column i pairs with values[i]
};

// Cyclic Jacobi for dense symmetric matrices. Rejects non-symmetric or
// non-finite input.
EigenResult jacobi_eigen(const Mat& sym, double off_tol = 1e-10, int max_sweeps = 100);

// Largest singular value via the Gram-matrix eigendecomposition.
double exact_sigma_max(const Mat& w);

// Two-sample Kolmogorov-Smirnov D statistic.
double ks_distance(std::vector<double> a, std::vector<double> b);

struct KsReport {
    double score = 0.0;                    // mean over features of (1 - D)
    std::vector<double> one_minus_d;       // per feature
};

struct PcaReport {
    double score = 0.0;
    int retained = 0;  // eigenvalue count explaining >= 99% of real variance
    std::vector<double> real_eigenvalues;
    std::vector<double> gen_eigenvalues;
    std::vector<double> clipped_rel_errors;  // length == retained
};

struct ScoreReport {
    KsReport ks;
    PcaReport pca;
    int n_real = 0;
    int n_gen = 0;
};

KsReport ks_score(const Mat& real, const Mat& gen);
Mat correlation_matrix(const Mat& m);
PcaReport pca_score(const Mat& real, const Mat& gen);
ScoreReport evaluate_datasets(const Mat& real, const Mat& gen);

struct Hist1D {
    int feature = 0;
    double lo = 0.0, hi = 0.0;
    std::vector<double> counts;
};

struct Hist2D {
    int f1 = 0, f2 = 0;
    double lo1 = 0.0, hi1 = 0.0, lo2 = 0.0, hi2 = 0.0;
    int bins = 0;
    std::vector<double> counts;  // row-major [bins x bins], f1 on the first axis
    double level68 = 0.0;        // count thresholds whose enclosing mass is >= 68% / 95%
    double level95 = 0.0;
};

struct TrianglePlotData {
    int bins = 0;
    std::vector<Hist1D> real_diag, gen_diag;
    std::vector<Hist2D> real_pairs, gen_pairs;
};

// Highest-density count threshold enclosing at least `mass` of the total.
double hdr_level(const std::vector<double>& counts, double mass);

TrianglePlotData triangle_export(const Mat& real, const Mat& gen, int bins = 60);

}  // namespace scengen
