#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scengen/features.hpp"
#include "scengen/mat.hpp"

namespace scengen {

// Ingested time series: instrument features per (instrument, date) plus one
// global set of state-variable series. NaN marks a missing cell.
struct RawSeries {
    std::vector<long long> dates;  // business-day numbers, ascending
    std::vector<std::string> instruments;
    std::vector<FeatureSpec> eqv;
    std::vector<FeatureSpec> stv;
    std::vector<std::vector<std::vector<double>>> eqv_values;  // [inst][feature][date]
    std::vector<std::vector<double>> stv_values;               // [feature][date]
};

RawSeries read_raw_series(const std::string& instruments_csv, const std::string& state_csv);
void write_raw_series(const RawSeries& raw, const std::string& instruments_csv,
                      const std::string& state_csv);

struct AssembleConfig {
    int n_batches = 10;
    int layers_per_batch = 10000;
    int n_instruments = 10;   // instruments per layer
    int transition_rows = 20; // horizon H in business days
    int max_layer_retries = 100;
    std::uint64_t seed = 1;
};

struct AssembledData {
    Mat matrix;                         // [rows, 29] in table order
    Mat d_s;                            // deduplicated per-date state transitions [dates, 7]
    std::vector<long long> d_s_dates;   // date per d_s row
    std::vector<long long> row_dates;   // date per matrix row
    std::vector<FeatureSpec> features;  // 11 eqv + 7 stv with fitted scale metadata
    int redrawn_layers = 0;
};

AssembledData assemble_dataset(const RawSeries& raw, const AssembleConfig& cfg);

// Table-order header: EQV_1..EQV_11,dEQV_1..dEQV_11,dSTV_1..dSTV_7
std::vector<std::string> dataset_header();

Mat read_mat_csv(const std::string& path, int expect_cols = -1);

}  // namespace scengen
