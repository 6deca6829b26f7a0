#include "upstage/trace.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "upstage/error.hpp"

namespace upstage {

const char* unit_text(ColumnUnit u) {
    switch (u) {
        case ColumnUnit::None: return "-";
        case ColumnUnit::Second: return "s";
        case ColumnUnit::Rad: return "rad";
        case ColumnUnit::RadPerSec: return "rad/s";
        case ColumnUnit::Kg: return "kg";
        case ColumnUnit::KgPerSec: return "kg/s";
        case ColumnUnit::Pa: return "Pa";
        case ColumnUnit::Kelvin: return "K";
        case ColumnUnit::Newton: return "N";
        case ColumnUnit::NewtonMeter: return "N m";
        case ColumnUnit::MeterPerSec: return "m/s";
        case ColumnUnit::KgM2: return "kg m^2";
    }
    return "?";
}

std::vector<TraceColumn> trace_columns(const std::vector<std::string>& devices) {
    using U = ColumnUnit;
    std::vector<TraceColumn> c = {
        {"t", U::Second, "simulation time"},
        {"fsw_tick", U::None, "flight-software tick applied"},
        {"q_w", U::None, "attitude quaternion body->inertial, scalar"},
        {"q_x", U::None, ""},
        {"q_y", U::None, ""},
        {"q_z", U::None, ""},
        {"w_x", U::RadPerSec, "body rate"},
        {"w_y", U::RadPerSec, ""},
        {"w_z", U::RadPerSec, ""},
        {"w_norm", U::RadPerSec, "body rate magnitude"},
        {"w_transverse", U::RadPerSec, "rate magnitude in the body x-y plane"},
        {"h_x", U::NewtonMeter, "inertial angular momentum, N m s"},
        {"h_y", U::NewtonMeter, ""},
        {"h_z", U::NewtonMeter, ""},
        {"nutation", U::Rad, "half-cone angle between momentum and spin principal axis"},
        {"att_err", U::Rad, "spin principal axis vs initial momentum direction"},
        {"phi", U::Rad, "slosh bulge azimuth"},
        {"phi_dot", U::RadPerSec, ""},
        {"m_prop", U::Kg, "propellant mass"},
        {"mass", U::Kg, "total stage mass including attached payloads"},
        {"p_tank", U::Pa, "tank pressure"},
        {"T_tank", U::Kelvin, "pressurant temperature"},
        {"J_xx", U::KgM2, "effective inertia"},
        {"J_yy", U::KgM2, ""},
        {"J_zz", U::KgM2, ""},
        {"J_xy", U::KgM2, ""},
        {"J_xz", U::KgM2, ""},
        {"J_yz", U::KgM2, ""},
        {"dv_x", U::MeterPerSec, "accumulated body delta-v"},
        {"dv_y", U::MeterPerSec, ""},
        {"dv_z", U::MeterPerSec, ""},
        {"tau_x", U::NewtonMeter, "thruster torque, step average"},
        {"tau_y", U::NewtonMeter, ""},
        {"tau_z", U::NewtonMeter, ""},
        {"mdot", U::KgPerSec, "propellant outflow, step average"},
        {"firing", U::None, "thrusters producing thrust"},
        {"pulses", U::None, "cumulative accepted pulses"},
        {"state", U::None, "sequencer state index"},
        {"mode", U::None, "controller mode (0 phase-plane, 1 mpc, 2 adaptive)"},
        {"flags", U::None, "packed flag word"},
    };
    for (const auto& d : devices) c.push_back({"phase_" + d, U::None, "separation chain phase"});
    return c;
}

Trace::Trace(std::vector<TraceColumn> columns) : columns_(std::move(columns)), data_(columns_.size()) {}

std::optional<std::size_t> Trace::find(std::string_view name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i)
        if (columns_[i].name == name) return i;
    return std::nullopt;
}

const std::vector<double>& Trace::column(std::string_view name) const {
    const auto i = find(name);
    if (!i) throw UnknownSignal(std::string(name));
    return data_[*i];
}

void Trace::append(const std::vector<double>& row) {
    if (row.size() != columns_.size()) throw std::invalid_argument("trace row width");
    for (std::size_t i = 0; i < row.size(); ++i) data_[i].push_back(row[i]);
}

std::vector<double> Trace::row(std::size_t r) const {
    std::vector<double> out(columns_.size());
    for (std::size_t i = 0; i < columns_.size(); ++i) out[i] = data_[i][r];
    return out;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_csv_header(std::ostream& os, const std::vector<TraceColumn>& columns) {
    for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i].name;
    os << '\n';
}

void write_csv_row(std::ostream& os, const std::vector<double>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_double(row[i]);
    os << '\n';
}

void Trace::write_csv(std::ostream& os) const {
    write_csv_header(os, columns_);
    for (std::size_t r = 0; r < rows(); ++r) write_csv_row(os, row(r));
}

Trace Trace::read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw IoError("empty trace");
    std::vector<TraceColumn> cols;
    {
        std::stringstream ss(line);
        std::string name;
        while (std::getline(ss, name, ',')) cols.push_back({name, ColumnUnit::None, ""});
    }
    const auto known = trace_columns({});
    for (auto& c : cols)
        for (const auto& k : known)
            if (k.name == c.name) c.unit = k.unit;
    Trace t(cols);
    std::vector<double> row(cols.size());
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::size_t start = 0;
        for (std::size_t i = 0; i < cols.size(); ++i) {
            const std::size_t end = line.find(',', start);
            const std::string_view cell(line.data() + start, (end == std::string::npos ? line.size() : end) - start);
            if (cell == "nan") row[i] = std::nan("");
            else if (cell == "inf") row[i] = HUGE_VAL;
            else if (cell == "-inf") row[i] = -HUGE_VAL;
            else {
                const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), row[i]);
                if (res.ec != std::errc{}) throw IoError("trace line " + std::to_string(lineno));
            }
            if (end == std::string::npos && i + 1 < cols.size()) throw IoError("trace line " + std::to_string(lineno));
            start = end + 1;
        }
        t.append(row);
    }
    return t;
}

std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> out(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                out.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                out.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back();
        } else if (c != '\r') {
            out.back() += c;
        }
    }
    return out;
}

}  // namespace upstage
