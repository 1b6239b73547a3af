#pragma once

#include <string>
#include <vector>

namespace fmatch {

/// Shortest decimal representation that round-trips the double exactly.
/// Used for all CSV/JSON emission so identical runs produce identical bytes.
std::string format_double(double v);

/// RFC-4180 quoting when the field contains a comma, quote, or newline.
std::string csv_escape(const std::string& field);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

/// Median of a sample (linear-interpolation convention). Input copied.
double median(std::vector<double> values);

/// Interpolated quantile (R type-7) of a sample, prob in [0,1].
double quantile(std::vector<double> values, double prob);

}  // namespace fmatch
