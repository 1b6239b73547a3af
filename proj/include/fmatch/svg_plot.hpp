#pragma once

#include <string>
#include <vector>

namespace fmatch {

/// Self-contained SVG 1.1 box-and-whisker chart, one box per labeled sample
/// (median, quartile box, whiskers at the most extreme points within 1.5 IQR
/// of the box). Values are drawn on a log10 axis when every value is
/// positive, linearly otherwise.
std::string render_boxplot_svg(const std::vector<std::string>& labels,
                               const std::vector<std::vector<double>>& samples,
                               const std::string& title);

}  // namespace fmatch
