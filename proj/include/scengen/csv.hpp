#pragma once

#include <string>
#include <vector>

#include "scengen/mat.hpp"

namespace scengen {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int col(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::string& path);

// Numeric CSV writer; doubles are printed with 17 significant digits so a
// rerun with the same seed is byte-identical.
void write_csv(const std::string& path, const std::vector<std::string>& header, const Mat& data);
std::string format_double(double v);

// ISO-8601 civil-date helpers (weekday calendar for the synthetic feeds).
long long days_from_civil(int y, int m, int d);
void civil_from_days(long long z, int& y, int& m, int& d);
std::string iso_date(long long day_number);
long long parse_iso_date(const std::string& s);
bool is_weekend(long long day_number);
// n consecutive business days starting at (or after) the given day.
std::vector<long long> business_days(long long start, int n);

}  // namespace scengen
