#include "scengen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "scengen/csv.hpp"
#include "scengen/rng.hpp"

namespace scengen {

namespace {

// Lenient fill for assembly: cells before the first observation stay missing
// and make the (instrument, date) cell unfillable, which triggers a redraw.
std::vector<double> fill_from_first(const std::vector<double>& series) {
    std::vector<double> out(series.size(), missing_value());
    double last = missing_value();
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (!std::isnan(series[i])) last = series[i];
        out[i] = last;
    }
    return out;
}

}  // namespace

std::vector<std::string> dataset_header() {
    std::vector<std::string> h;
    for (int i = 1; i <= 11; ++i) h.push_back("EQV_" + std::to_string(i));
    for (int i = 1; i <= 11; ++i) h.push_back("dEQV_" + std::to_string(i));
    for (int i = 1; i <= 7; ++i) h.push_back("dSTV_" + std::to_string(i));
    return h;
}

RawSeries read_raw_series(const std::string& instruments_csv, const std::string& state_csv) {
    RawSeries raw;
    raw.eqv = default_eqv_features();
    raw.stv = default_stv_features();

    CsvTable inst = read_csv(instruments_csv);
    CsvTable state = read_csv(state_csv);
    if (inst.header.size() < 2 || inst.header[0] != "date" || inst.header[1] != "instrument")
        throw DataError(instruments_csv + ": header must start with date,instrument");
    if (state.header.size() < 2 || state.header[0] != "date" || state.header[1] != "instrument")
        throw DataError(state_csv + ": header must start with date,instrument");

    std::vector<int> eqv_cols, stv_cols;
    for (const FeatureSpec& f : raw.eqv) {
        const int c = inst.col(f.name);
        if (c < 0) throw DataError(instruments_csv + ": missing feature column " + f.name);
        eqv_cols.push_back(c);
    }
    for (const FeatureSpec& f : raw.stv) {
        const int c = state.col(f.name);
        if (c < 0) throw DataError(state_csv + ": missing feature column " + f.name);
        stv_cols.push_back(c);
    }

    std::map<long long, int> date_index;
    for (const auto& row : inst.rows) date_index.emplace(parse_iso_date(row.at(0)), 0);
    for (const auto& row : state.rows) date_index.emplace(parse_iso_date(row.at(0)), 0);
    for (auto& [d, idx] : date_index) {
        idx = static_cast<int>(raw.dates.size());
        raw.dates.push_back(d);
    }

    std::map<std::string, int> inst_index;
    for (const auto& row : inst.rows) {
        const std::string& id = row.at(1);
        if (!inst_index.count(id)) {
            inst_index[id] = static_cast<int>(raw.instruments.size());
            raw.instruments.push_back(id);
        }
    }

    const int nd = static_cast<int>(raw.dates.size());
    raw.eqv_values.assign(raw.instruments.size(),
                          std::vector<std::vector<double>>(
                              raw.eqv.size(), std::vector<double>(nd, missing_value())));
    raw.stv_values.assign(raw.stv.size(), std::vector<double>(nd, missing_value()));

    auto parse_cell = [](const std::string& s) {
        if (s.empty()) return missing_value();
        return std::stod(s);
    };
    for (const auto& row : inst.rows) {
        const int d = date_index.at(parse_iso_date(row.at(0)));
        const int k = inst_index.at(row.at(1));
        for (std::size_t f = 0; f < eqv_cols.size(); ++f)
            raw.eqv_values[k][f][d] = parse_cell(row.at(eqv_cols[f]));
    }
    for (const auto& row : state.rows) {
        const int d = date_index.at(parse_iso_date(row.at(0)));
        for (std::size_t f = 0; f < stv_cols.size(); ++f)
            raw.stv_values[f][d] = parse_cell(row.at(stv_cols[f]));
    }
    return raw;
}

void write_raw_series(const RawSeries& raw, const std::string& instruments_csv,
                      const std::string& state_csv) {
    {
        std::vector<std::string> header = {"date", "instrument"};
        for (const FeatureSpec& f : raw.eqv) header.push_back(f.name);
        std::ofstream fo(instruments_csv);
        if (!fo) throw DataError("cannot write " + instruments_csv);
        for (std::size_t i = 0; i < header.size(); ++i) fo << (i ? "," : "") << header[i];
        fo << '\n';
        for (std::size_t k = 0; k < raw.instruments.size(); ++k)
            for (std::size_t d = 0; d < raw.dates.size(); ++d) {
                fo << iso_date(raw.dates[d]) << ',' << raw.instruments[k];
                for (std::size_t f = 0; f < raw.eqv.size(); ++f) {
                    const double v = raw.eqv_values[k][f][d];
                    fo << ',';
                    if (!std::isnan(v)) fo << format_double(v);
                }
                fo << '\n';
            }
    }
    {
        std::vector<std::string> header = {"date", "instrument"};
        for (const FeatureSpec& f : raw.stv) header.push_back(f.name);
        std::ofstream fo(state_csv);
        if (!fo) throw DataError("cannot write " + state_csv);
        for (std::size_t i = 0; i < header.size(); ++i) fo << (i ? "," : "") << header[i];
        fo << '\n';
        for (std::size_t d = 0; d < raw.dates.size(); ++d) {
            fo << iso_date(raw.dates[d]) << ",STATE";
            for (std::size_t f = 0; f < raw.stv.size(); ++f) {
                const double v = raw.stv_values[f][d];
                fo << ',';
                if (!std::isnan(v)) fo << format_double(v);
            }
            fo << '\n';
        }
    }
}

AssembledData assemble_dataset(const RawSeries& raw, const AssembleConfig& cfg) {
    const int n_eqv = static_cast<int>(raw.eqv.size());
    const int n_stv = static_cast<int>(raw.stv.size());
    if (n_eqv != 11 || n_stv != 7)
        throw DataError("assemble: expected 11 instrument features and 7 state features");
    const int nd = static_cast<int>(raw.dates.size());
    const int ni = static_cast<int>(raw.instruments.size());
    const int H = cfg.transition_rows;
    if (nd <= H) throw DataError("assemble: series shorter than the transition horizon");
    if (ni < cfg.n_instruments)
        throw DataError("assemble: fewer instruments than requested per layer");

    AssembledData out;
    out.features = raw.eqv;
    out.features.insert(out.features.end(), raw.stv.begin(), raw.stv.end());

    // forward fill
    std::vector<std::vector<std::vector<double>>> eqv(ni);
    for (int k = 0; k < ni; ++k) {
        eqv[k].resize(n_eqv);
        for (int f = 0; f < n_eqv; ++f) eqv[k][f] = fill_from_first(raw.eqv_values[k][f]);
    }
    std::vector<std::vector<double>> stv(n_stv);
    for (int f = 0; f < n_stv; ++f) stv[f] = fill_from_first(raw.stv_values[f]);

    // affine normalization of the flagged features, fitted on observed values
    for (int f = 0; f < n_eqv; ++f) {
        if (!out.features[f].scaled) continue;
        std::vector<double> pool;
        for (int k = 0; k < ni; ++k)
            for (double v : eqv[k][f])
                if (!std::isnan(v)) pool.push_back(v);
        double lo, hi;
        fit_affine_scale(pool, lo, hi);
        out.features[f].scale_min = lo;
        out.features[f].scale_max = hi;
        for (int k = 0; k < ni; ++k)
            for (double& v : eqv[k][f])
                if (!std::isnan(v)) v = affine_scale_apply(v, lo, hi);
    }

    // state transitions per date (NaN where not computable)
    Mat ds_by_date(nd, n_stv, missing_value());
    for (int d = 0; d + H < nd; ++d) {
        bool ok = true;
        for (int f = 0; f < n_stv && ok; ++f) {
            const double a = stv[f][d], b = stv[f][d + H];
            if (std::isnan(a) || std::isnan(b)) ok = false;
            else if (raw.stv[f].transition == TransitionKind::Relative && a <= 0.0) ok = false;
        }
        if (!ok) continue;
        for (int f = 0; f < n_stv; ++f)
            ds_by_date.at(d, f) =
                compute_transition(stv[f][d], stv[f][d + H], raw.stv[f].transition);
    }

    std::vector<int> valid_dates;
    for (int d = 0; d + H < nd; ++d)
        if (!std::isnan(ds_by_date.at(d, 0))) valid_dates.push_back(d);
    if (valid_dates.empty()) throw DataError("assemble: no dates with computable state transitions");

    auto instrument_ok = [&](int k, int d) {
        for (int f = 0; f < n_eqv; ++f) {
            const double a = eqv[k][f][d], b = eqv[k][f][d + H];
            if (std::isnan(a) || std::isnan(b)) return false;
            if (raw.eqv[f].transition == TransitionKind::Relative && a <= 0.0) return false;
        }
        return true;
    };

    const long long total_layers =
        static_cast<long long>(cfg.n_batches) * cfg.layers_per_batch;
    const int n_s = cfg.n_instruments;
    out.matrix = Mat(static_cast<int>(total_layers) * n_s, 29);
    out.row_dates.resize(out.matrix.rows);

    Rng root = Rng(cfg.seed).split(0xa55e);
    std::map<int, int> ds_seen;  // date index -> d_s row
    int row = 0;
    std::vector<int> picks(n_s);
    for (long long layer = 0; layer < total_layers; ++layer) {
        Rng lr = root.split(static_cast<std::uint64_t>(layer));
        bool placed = false;
        for (int attempt = 0; attempt < cfg.max_layer_retries && !placed; ++attempt) {
            if (attempt > 0) ++out.redrawn_layers;
            const int d = valid_dates[lr.below(valid_dates.size())];
            // draw n_s distinct instruments
            std::vector<int> pool(ni);
            for (int i = 0; i < ni; ++i) pool[i] = i;
            bool ok = true;
            for (int i = 0; i < n_s; ++i) {
                const int j = i + static_cast<int>(lr.below(static_cast<std::uint64_t>(ni - i)));
                std::swap(pool[i], pool[j]);
                picks[i] = pool[i];
                if (!instrument_ok(pool[i], d)) {
                    ok = false;
                    break;
                }
            }
            if (!ok) continue;
            for (int i = 0; i < n_s; ++i) {
                const int k = picks[i];
                double* r = out.matrix.row(row);
                for (int f = 0; f < n_eqv; ++f) r[f] = eqv[k][f][d];
                for (int f = 0; f < n_eqv; ++f)
                    r[11 + f] =
                        compute_transition(eqv[k][f][d], eqv[k][f][d + H], raw.eqv[f].transition);
                for (int f = 0; f < n_stv; ++f) r[22 + f] = ds_by_date.at(d, f);
                out.row_dates[row] = raw.dates[d];
                ++row;
            }
            ds_seen.emplace(d, 0);
            placed = true;
        }
        if (!placed)
            throw DataError("assemble: layer " + std::to_string(layer) +
                            " could not be populated after " +
                            std::to_string(cfg.max_layer_retries) + " retries");
    }

    out.d_s = Mat(static_cast<int>(ds_seen.size()), n_stv);
    out.d_s_dates.reserve(ds_seen.size());
    int i = 0;
    for (auto& [d, slot] : ds_seen) {
        slot = i;
        for (int f = 0; f < n_stv; ++f) out.d_s.at(i, f) = ds_by_date.at(d, f);
        out.d_s_dates.push_back(raw.dates[d]);
        ++i;
    }
    return out;
}

Mat read_mat_csv(const std::string& path, int expect_cols) {
    CsvTable t = read_csv(path);
    const int cols = static_cast<int>(t.header.size());
    if (expect_cols > 0 && cols != expect_cols)
        throw DataError(path + ": expected " + std::to_string(expect_cols) + " columns, found " +
                        std::to_string(cols));
    Mat m(static_cast<int>(t.rows.size()), cols);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (static_cast<int>(t.rows[r].size()) != cols)
            throw DataError(path + ": ragged row " + std::to_string(r + 2));
        for (int c = 0; c < cols; ++c) m.at(static_cast<int>(r), c) = std::stod(t.rows[r][c]);
    }
    return m;
}

}  // namespace scengen
