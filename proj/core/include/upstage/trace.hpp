#pragma once

// Telemetry trace: one row per plant tick with a fixed column dictionary,
// written as comma-separated text with round-trip precision.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace upstage {

enum class ColumnUnit { None, Second, Rad, RadPerSec, Kg, KgPerSec, Pa, Kelvin, Newton, NewtonMeter, MeterPerSec, KgM2 };

struct TraceColumn {
    std::string name;
    ColumnUnit unit = ColumnUnit::None;
    const char* description = "";

    bool angular() const { return unit == ColumnUnit::Rad || unit == ColumnUnit::RadPerSec; }
};

const char* unit_text(ColumnUnit u);

/// Column dictionary; one "phase_<id>" column per separation device.
std::vector<TraceColumn> trace_columns(const std::vector<std::string>& devices);

/// In-memory trace, column-major access by name.
class Trace {
public:
    Trace() = default;
    explicit Trace(std::vector<TraceColumn> columns);

    const std::vector<TraceColumn>& columns() const { return columns_; }
    std::size_t rows() const { return data_.empty() ? 0 : data_.front().size(); }
    std::optional<std::size_t> find(std::string_view name) const;
    /// Throws UnknownSignal.
    const std::vector<double>& column(std::string_view name) const;
    const std::vector<double>& column(std::size_t index) const { return data_[index]; }

    void append(const std::vector<double>& row);
    std::vector<double> row(std::size_t i) const;

    void write_csv(std::ostream& os) const;
    /// Parses a trace previously written by write_csv. Throws IoError.
    static Trace read_csv(std::istream& is);

private:
    std::vector<TraceColumn> columns_;
    std::vector<std::vector<double>> data_;
};

/// Writes a header row followed by the row; used for streaming output.
void write_csv_header(std::ostream& os, const std::vector<TraceColumn>& columns);
void write_csv_row(std::ostream& os, const std::vector<double>& row);

/// Shortest text that parses back to the same binary64 value.
std::string format_double(double v);

/// Double-quoted CSV field with embedded quotes doubled.
std::string csv_quote(const std::string& s);

/// Splits one CSV record, honouring double-quoted fields.
std::vector<std::string> csv_split(const std::string& line);

}  // namespace upstage
