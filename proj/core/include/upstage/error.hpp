#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace upstage {

/// Base of every error raised by the library. what() reads "Kind: detail".
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& detail)
        : std::runtime_error(kind + ": " + detail), kind_(std::move(kind)), detail_(detail) {}

    const std::string& kind() const noexcept { return kind_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string kind_;
    std::string detail_;
};

#define UPSTAGE_DEFINE_ERROR(Name)                                                   \
    class Name : public Error {                                                      \
    public:                                                                          \
        explicit Name(const std::string& detail) : Error(#Name, detail) {}           \
    }

// configuration
UPSTAGE_DEFINE_ERROR(ConfigInvalid);
UPSTAGE_DEFINE_ERROR(IoError);

// plant / actuation
UPSTAGE_DEFINE_ERROR(NumericalDivergence);
UPSTAGE_DEFINE_ERROR(MassUnderflow);
UPSTAGE_DEFINE_ERROR(InertiaNotSPD);
UPSTAGE_DEFINE_ERROR(UnknownThrusterId);

// sequencer
UPSTAGE_DEFINE_ERROR(UnknownState);
UPSTAGE_DEFINE_ERROR(UnknownSignal);
UPSTAGE_DEFINE_ERROR(UnknownDevice);
UPSTAGE_DEFINE_ERROR(DuplicateState);
UPSTAGE_DEFINE_ERROR(MissingSignal);

// pil
UPSTAGE_DEFINE_ERROR(MagicMismatch);
UPSTAGE_DEFINE_ERROR(VersionUnsupported);
UPSTAGE_DEFINE_ERROR(CrcMismatch);
UPSTAGE_DEFINE_ERROR(Truncated);
UPSTAGE_DEFINE_ERROR(Timeout);
UPSTAGE_DEFINE_ERROR(ProtocolViolation);
UPSTAGE_DEFINE_ERROR(LinkError);

// vnv
UPSTAGE_DEFINE_ERROR(CycleDetected);
UPSTAGE_DEFINE_ERROR(DanglingMonitorRef);
UPSTAGE_DEFINE_ERROR(DuplicateId);

#undef UPSTAGE_DEFINE_ERROR

/// Parse failure with a source position (1-based line and column).
class SyntaxError : public Error {
public:
    SyntaxError(std::size_t line, std::size_t col, const std::string& expected)
        : Error("SyntaxError", std::to_string(line) + ":" + std::to_string(col) + ": expected " + expected),
          line_(line), col_(col), expected_(expected) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return col_; }
    const std::string& expected() const noexcept { return expected_; }

private:
    std::size_t line_;
    std::size_t col_;
    std::string expected_;
};

}  // namespace upstage
