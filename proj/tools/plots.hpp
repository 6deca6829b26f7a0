#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "upstage/trace.hpp"

namespace upstage::tools {

struct Series {
    std::string label;
    std::vector<double> y;
};

/// Static line chart as a standalone SVG document.
std::string svg_line_chart(const std::string& title, const std::string& y_label, const std::vector<double>& x,
                           const std::vector<Series>& series);

/// rates.svg, attitude.svg, tank.svg under dir.
void write_standard_plots(const Trace& trace, const std::filesystem::path& dir);

}  // namespace upstage::tools
