#pragma once

#include <stdexcept>
#include <vector>

namespace scengen {

// Plain row-major matrix for dataset-level math (no autodiff).
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
    double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }

    std::vector<double> column(int c) const {
        std::vector<double> v(rows);
        for (int r = 0; r < rows; ++r) v[r] = at(r, c);
        return v;
    }

    std::vector<double> row_vec(int r) const {
        return std::vector<double>(row(r), row(r) + cols);
    }

    void push_row(const std::vector<double>& v) {
        if (cols == 0 && rows == 0) cols = static_cast<int>(v.size());
        if (static_cast<int>(v.size()) != cols)
            throw std::runtime_error("push_row: width mismatch");
        data.insert(data.end(), v.begin(), v.end());
        ++rows;
    }
};

}  // namespace scengen
