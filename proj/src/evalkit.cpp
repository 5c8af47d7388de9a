#include "scengen/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace scengen {

EigenResult jacobi_eigen(const Mat& sym, double off_tol, int max_sweeps) {
    const int n = sym.rows;
    if (n != sym.cols) throw std::runtime_error("jacobi: matrix is not square");
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (!std::isfinite(sym.at(i, j)))
                throw std::runtime_error("jacobi: non-finite entry");
            if (std::fabs(sym.at(i, j) - sym.at(j, i)) > 1e-9)
                throw std::runtime_error("jacobi: matrix is not symmetric");
        }

    Mat a = sym;
    Mat v(n, n, 0.0);
    for (int i = 0; i < n; ++i) v.at(i, i) = 1.0;

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
        if (std::sqrt(off) < off_tol) break;

        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double sign = theta >= 0.0 ? 1.0 : -1.0;
                const double t = sign / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const double tau = s / (1.0 + c);

                const double app = a.at(p, p), aqq = a.at(q, q);
                a.at(p, p) = app - t * apq;
                a.at(q, q) = aqq + t * apq;
                a.at(p, q) = 0.0;
                a.at(q, p) = 0.0;
                for (int r = 0; r < n; ++r) {
                    const double vrp = v.at(r, p), vrq = v.at(r, q);
                    v.at(r, p) = vrp - s * (vrq + tau * vrp);
                    v.at(r, q) = vrq + s * (vrp - tau * vrq);
                    if (r == p || r == q) continue;
                    const double arp = a.at(r, p), arq = a.at(r, q);
                    a.at(r, p) = a.at(p, r) = arp - s * (arq + tau * arp);
                    a.at(r, q) = a.at(q, r) = arq + s * (arp - tau * arq);
                }
            }
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int i, int j) { return a.at(i, i) > a.at(j, j); });

    EigenResult res;
    res.values.resize(n);
    res.vectors = Mat(n, n);
    for (int k = 0; k < n; ++k) {
        res.values[k] = a.at(order[k], order[k]);
        for (int r = 0; r < n; ++r) res.vectors.at(r, k) = v.at(r, order[k]);
    }
    return res;
}

double exact_sigma_max(const Mat& w) {
    const int r = w.rows, c = w.cols;
    // Gram matrix on the smaller side.
    const int n = std::min(r, c);
    Mat g(n, n, 0.0);
    if (c <= r) {
        for (int i = 0; i < c; ++i)
            for (int j = i; j < c; ++j) {
                double acc = 0.0;
                for (int k = 0; k < r; ++k) acc += w.at(k, i) * w.at(k, j);
                g.at(i, j) = g.at(j, i) = acc;
            }
    } else {
        for (int i = 0; i < r; ++i)
            for (int j = i; j < r; ++j) {
                double acc = 0.0;
                for (int k = 0; k < c; ++k) acc += w.at(i, k) * w.at(j, k);
                g.at(i, j) = g.at(j, i) = acc;
            }
    }
    EigenResult e = jacobi_eigen(g, 1e-12 * std::max(1.0, std::fabs(g.at(0, 0))), 100);
    return std::sqrt(std::max(0.0, e.values.front()));
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
    if (a.size() < 1 || b.size() < 1) throw std::runtime_error("ks: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

KsReport ks_score(const Mat& real, const Mat& gen) {
    if (real.cols != gen.cols) throw std::runtime_error("ks_score: feature count mismatch");
    if (real.rows < 2 || gen.rows < 2) throw std::runtime_error("ks_score: need >= 2 samples");
    KsReport rep;
    rep.one_minus_d.reserve(real.cols);
    double acc = 0.0;
    for (int c = 0; c < real.cols; ++c) {
        const double d = ks_distance(real.column(c), gen.column(c));
        rep.one_minus_d.push_back(1.0 - d);
        acc += 1.0 - d;
    }
    rep.score = acc / real.cols;
    return rep;
}

Mat correlation_matrix(const Mat& m) {
    const int n = m.rows, f = m.cols;
    if (n < 2) throw std::runtime_error("correlation: need >= 2 rows");
    std::vector<double> mean(f, 0.0), sd(f, 0.0);
    for (int c = 0; c < f; ++c) {
        double s = 0.0;
        for (int r = 0; r < n; ++r) s += m.at(r, c);
        mean[c] = s / n;
        double q = 0.0;
        for (int r = 0; r < n; ++r) {
            const double d = m.at(r, c) - mean[c];
            q += d * d;
        }
        sd[c] = std::sqrt(q / n);
    }
    Mat corr(f, f, 0.0);
    for (int i = 0; i < f; ++i) {
        corr.at(i, i) = 1.0;
        for (int j = i + 1; j < f; ++j) {
            if (sd[i] < 1e-15 || sd[j] < 1e-15) {
                corr.at(i, j) = corr.at(j, i) = 0.0;
                continue;
            }
            double s = 0.0;
            for (int r = 0; r < n; ++r) s += (m.at(r, i) - mean[i]) * (m.at(r, j) - mean[j]);
            corr.at(i, j) = corr.at(j, i) = s / (n * sd[i] * sd[j]);
        }
    }
    return corr;
}

PcaReport pca_score(const Mat& real, const Mat& gen) {
    if (real.cols != gen.cols) throw std::runtime_error("pca_score: feature count mismatch");
    if (real.cols < 2) throw std::runtime_error("pca_score: need >= 2 features");
    PcaReport rep;
    rep.real_eigenvalues = jacobi_eigen(correlation_matrix(real)).values;
    rep.gen_eigenvalues = jacobi_eigen(correlation_matrix(gen)).values;

    const double total =
        std::accumulate(rep.real_eigenvalues.begin(), rep.real_eigenvalues.end(), 0.0);
    double cum = 0.0;
    int n_keep = static_cast<int>(rep.real_eigenvalues.size());
    for (int i = 0; i < static_cast<int>(rep.real_eigenvalues.size()); ++i) {
        cum += rep.real_eigenvalues[i];
        if (cum >= 0.99 * total) {
            n_keep = i + 1;
            break;
        }
    }
    rep.retained = n_keep;
    double acc = 0.0;
    for (int i = 0; i < n_keep; ++i) {
        const double e = rep.real_eigenvalues[i];
        const double eg =
            i < static_cast<int>(rep.gen_eigenvalues.size()) ? rep.gen_eigenvalues[i] : 0.0;
        double term;
        if (e <= 1e-12)
            term = eg <= 1e-12 ? 0.0 : 1.0;
        else
            term = std::min(1.0, std::fabs(e - eg) / e);
        rep.clipped_rel_errors.push_back(term);
        acc += term;
    }
    rep.score = 1.0 - acc / n_keep;
    return rep;
}

ScoreReport evaluate_datasets(const Mat& real, const Mat& gen) {
    ScoreReport rep;
    rep.ks = ks_score(real, gen);
    rep.pca = pca_score(real, gen);
    rep.n_real = real.rows;
    rep.n_gen = gen.rows;
    return rep;
}

namespace {

void feature_range(const Mat& a, const Mat& b, int c, double& lo, double& hi) {
    lo = a.at(0, c);
    hi = lo;
    for (int r = 0; r < a.rows; ++r) {
        lo = std::min(lo, a.at(r, c));
        hi = std::max(hi, a.at(r, c));
    }
    for (int r = 0; r < b.rows; ++r) {
        lo = std::min(lo, b.at(r, c));
        hi = std::max(hi, b.at(r, c));
    }
    if (hi <= lo) {
        lo -= 0.5;
        hi += 0.5;
    }
}

int bin_of(double v, double lo, double hi, int bins) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    return std::clamp(b, 0, bins - 1);
}

Hist1D hist1d(const Mat& m, int c, double lo, double hi, int bins) {
    Hist1D h;
    h.feature = c;
    h.lo = lo;
    h.hi = hi;
    h.counts.assign(bins, 0.0);
    for (int r = 0; r < m.rows; ++r) h.counts[bin_of(m.at(r, c), lo, hi, bins)] += 1.0;
    return h;
}

Hist2D hist2d(const Mat& m, int f1, int f2, double lo1, double hi1, double lo2, double hi2,
              int bins) {
    Hist2D h;
    h.f1 = f1;
    h.f2 = f2;
    h.lo1 = lo1;
    h.hi1 = hi1;
    h.lo2 = lo2;
    h.hi2 = hi2;
    h.bins = bins;
    h.counts.assign(static_cast<std::size_t>(bins) * bins, 0.0);
    for (int r = 0; r < m.rows; ++r) {
        const int b1 = bin_of(m.at(r, f1), lo1, hi1, bins);
        const int b2 = bin_of(m.at(r, f2), lo2, hi2, bins);
        h.counts[static_cast<std::size_t>(b1) * bins + b2] += 1.0;
    }
    h.level68 = hdr_level(h.counts, 0.68);
    h.level95 = hdr_level(h.counts, 0.95);
    return h;
}

}  // namespace

double hdr_level(const std::vector<double>& counts, double mass) {
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    if (total <= 0.0) return 0.0;
    std::vector<double> sorted(counts);
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double cum = 0.0;
    for (double c : sorted) {
        cum += c;
        if (cum >= mass * total) return c;
    }
    return sorted.back();
}

TrianglePlotData triangle_export(const Mat& real, const Mat& gen, int bins) {
    if (real.cols != gen.cols) throw std::runtime_error("triangle: feature count mismatch");
    if (real.rows < 2 || gen.rows < 2) throw std::runtime_error("triangle: need >= 2 samples");
    TrianglePlotData out;
    out.bins = bins;
    const int f = real.cols;
    std::vector<double> lo(f), hi(f);
    for (int c = 0; c < f; ++c) feature_range(real, gen, c, lo[c], hi[c]);
    for (int c = 0; c < f; ++c) {
        out.real_diag.push_back(hist1d(real, c, lo[c], hi[c], bins));
        out.gen_diag.push_back(hist1d(gen, c, lo[c], hi[c], bins));
    }
    for (int i = 0; i < f; ++i)
        for (int j = i + 1; j < f; ++j) {
            out.real_pairs.push_back(hist2d(real, i, j, lo[i], hi[i], lo[j], hi[j], bins));
            out.gen_pairs.push_back(hist2d(gen, i, j, lo[i], hi[i], lo[j], hi[j], bins));
        }
    return out;
}

}  // namespace scengen
