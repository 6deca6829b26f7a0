#include "plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "upstage/error.hpp"
#include "upstage/math.hpp"

namespace upstage::tools {

namespace {

constexpr double kW = 900, kH = 420, kLeft = 80, kRight = 150, kTop = 40, kBottom = 50;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& y_label, const std::vector<double>& x,
                           const std::vector<Series>& series) {
    double x0 = x.empty() ? 0.0 : x.front(), x1 = x.empty() ? 1.0 : x.back();
    double y0 = HUGE_VAL, y1 = -HUGE_VAL;
    for (const auto& s : series)
        for (double v : s.y)
            if (std::isfinite(v)) {
                y0 = std::min(y0, v);
                y1 = std::max(y1, v);
            }
    if (!(y0 <= y1)) y0 = 0.0, y1 = 1.0;
    if (y1 - y0 < 1e-12 * std::max(1.0, std::abs(y1))) y0 -= 0.5, y1 += 0.5;
    if (x1 <= x0) x1 = x0 + 1.0;
    const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
    auto px = [&](double v) { return kLeft + (v - x0) / (x1 - x0) * pw; };
    auto py = [&](double v) { return kTop + (1.0 - (v - y0) / (y1 - y0)) * ph; };

    std::ostringstream os;
    os << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">)", kW, kH)
       << '\n';
    os << fmt::format(R"(<rect width="{}" height="{}" fill="white"/>)", kW, kH) << '\n';
    os << fmt::format(R"(<text x="{}" y="22" font-size="15" text-anchor="middle">{}</text>)", kW / 2, escape(title)) << '\n';
    os << fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>)", kLeft, kTop, pw, ph) << '\n';
    for (int i = 0; i <= 4; ++i) {
        const double yv = y0 + (y1 - y0) * i / 4.0, xv = x0 + (x1 - x0) * i / 4.0;
        os << fmt::format(R"(<line x1="{}" x2="{}" y1="{:.1f}" y2="{:.1f}" stroke="#ddd"/>)", kLeft, kLeft + pw, py(yv), py(yv))
           << fmt::format(R"(<text x="{}" y="{:.1f}" text-anchor="end">{:.4g}</text>)", kLeft - 6, py(yv) + 4, yv)
           << fmt::format(R"(<text x="{:.1f}" y="{}" text-anchor="middle">{:.4g}</text>)", px(xv), kTop + ph + 18, xv) << '\n';
    }
    os << fmt::format(R"(<text x="{}" y="{}" text-anchor="middle">t [s]</text>)", kLeft + pw / 2, kH - 10) << '\n';
    os << fmt::format(R"svg(<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>)svg", kTop + ph / 2,
                      kTop + ph / 2, escape(y_label))
       << '\n';

    // At most ~2000 vertices per series keeps files small.
    const std::size_t stride = std::max<std::size_t>(1, x.size() / 2000);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* color = kColors[k % std::size(kColors)];
        os << R"(<polyline fill="none" stroke-width="1.2" stroke=")" << color << R"(" points=")";
        for (std::size_t i = 0; i < x.size() && i < series[k].y.size(); i += stride)
            if (std::isfinite(series[k].y[i])) os << fmt::format("{:.1f},{:.1f} ", px(x[i]), py(series[k].y[i]));
        os << "\"/>\n";
        os << fmt::format(R"(<text x="{}" y="{}" fill="{}">{}</text>)", kW - kRight + 12, kTop + 16 + 18 * k, color,
                          escape(series[k].label))
           << '\n';
    }
    os << "</svg>\n";
    return os.str();
}

void write_standard_plots(const Trace& trace, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto& t = trace.column("t");
    auto deg = [&](const char* name) {
        std::vector<double> v = trace.column(name);
        for (auto& x : v) x /= kDeg;
        return v;
    };
    auto write = [&](const char* file, const std::string& svg) {
        std::ofstream os(dir / file, std::ios::binary);
        if (!os) throw IoError("cannot write " + (dir / file).string());
        os << svg;
    };
    write("rates.svg", svg_line_chart("Angular rate (body)", "deg/s", t,
                                      {{"w_x", deg("w_x")}, {"w_y", deg("w_y")}, {"w_z", deg("w_z")}}));
    write("attitude.svg", svg_line_chart("Nutation and spin-axis error", "deg", t,
                                         {{"nutation", deg("nutation")}, {"att_err", deg("att_err")}}));
    std::vector<double> p = trace.column("p_tank");
    for (auto& x : p) x *= 1e-5;
    write("tank.svg", svg_line_chart("Tank pressure", "bar", t, {{"p_tank", p}}));
}

}  // namespace upstage::tools
