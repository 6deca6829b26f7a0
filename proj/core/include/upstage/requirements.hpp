#pragma once

// Requirement trees (.req files), verdict aggregation and report output.
//
// .req format (TOML):
//   [[requirement]]
//   id = "SYS-1"
//   parent = "SYS"          # optional
//   text = "..."
//   verify_by = ["M1"]      # monitor ids

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "upstage/monitors.hpp"

namespace upstage::vnv {

struct Requirement {
    std::string id;
    std::optional<std::string> parent;
    std::string text;
    std::vector<std::string> verify_by;
};

class RequirementTree {
public:
    /// Throws DuplicateId, CycleDetected, ConfigInvalid (unknown parent).
    explicit RequirementTree(std::vector<Requirement> nodes);
    RequirementTree() = default;

    const std::vector<Requirement>& nodes() const { return nodes_; }
    std::vector<std::size_t> roots() const;
    const std::vector<std::size_t>& children(std::size_t i) const { return children_[i]; }
    std::optional<std::size_t> find(const std::string& id) const;

private:
    std::vector<Requirement> nodes_;
    std::vector<std::vector<std::size_t>> children_;
};

RequirementTree parse_requirements_text(const std::string& text);
RequirementTree parse_requirements(const std::filesystem::path& path);

/// Campaign-level verdict of one monitor: fail if any sample failed, pass
/// if at least one passed and none failed.
struct MonitorSummary {
    std::string id;
    std::vector<std::string> requirements;
    VerdictStatus status = VerdictStatus::NoData;
    std::size_t passes = 0;
    std::size_t fails = 0;
    std::size_t samples = 0;
};

/// Reads verdicts.csv from a run or campaign output directory.
std::vector<MonitorSummary> read_results(const std::filesystem::path& dir);

enum class ReqStatus { Pass, Fail, Unverified };
const char* req_status_name(ReqStatus s);

/// A node passes only if all its verify_by monitors pass and all its
/// children pass. Any failure below or in its own monitors fails it. A
/// leaf with no monitors, or a monitor without a pass/fail verdict, leaves
/// it unverified.
std::vector<ReqStatus> aggregate(const RequirementTree& tree, const std::map<std::string, VerdictStatus>& monitors);

struct Report {
    std::vector<ReqStatus> status;  // per tree node
    std::string markdown;
    std::string requirements_csv;
    std::string coverage_csv;       // one row per monitor
    std::vector<std::string> gaps;
    std::vector<std::string> link_mismatches;
};

/// Throws DanglingMonitorRef when verify_by names a monitor absent from
/// the results.
Report generate_report(const RequirementTree& tree, const std::vector<MonitorSummary>& monitors);

/// report.md, requirements.csv, coverage.csv.
void write_report(const Report& report, const std::filesystem::path& dir);

}  // namespace upstage::vnv
