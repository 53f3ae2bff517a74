#pragma once

// Minimal standalone SVG charts for result files.

#include <string>
#include <vector>

namespace tabpfn::eval {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  // optional symmetric error bars
};

std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series, const std::vector<double>& vertical_markers = {});

/// Groups along the x axis, one bar per series in each group.
std::string bar_plot(const std::string& title, const std::vector<std::string>& groups, const std::string& y_label,
                     const std::vector<Series>& series);

}  // namespace tabpfn::eval
