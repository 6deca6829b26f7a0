#pragma once

// Monitor and campaign definitions shared by the scenario file and the
// verification layer.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "upstage/sequencer.hpp"

namespace upstage {
class Trace;
}

namespace upstage::vnv {

struct ThresholdMonitor {
    std::string signal;
    seq::Comparator cmp = seq::Comparator::Greater;
    double limit = 0.0;
    double persistence = 0.0;  // s
};

struct StatsMonitor {
    std::string signal;
    double window = 10.0;  // s, sliding
    // Optional pass criteria on the whole-run values.
    std::optional<double> max_limit;
    std::optional<double> mean_limit;
    std::optional<double> rms_limit;
};

struct Monitor {
    std::string id;
    std::variant<ThresholdMonitor, StatsMonitor> kind;
    bool enabled = true;
    std::vector<std::string> requirements;
    double t_start = 0.0;  // samples before this time are ignored

    const std::string& signal() const;
};

enum class Distribution { Uniform, Gaussian };

struct ParamDef {
    std::string name;
    std::string path;  // scenario key, e.g. "tank.m_gas" or "thruster[2].F_ref"
    double lower = 0.0;
    double upper = 1.0;
    Distribution dist = Distribution::Uniform;
    double mu = 0.0;
    double sigma = 1.0;
};

struct CeOptions {
    int population = 50;
    double elite_fraction = 0.1;
    double alpha = 0.7;
    int max_iterations = 30;
    double sigma_min = 1e-3;
};

struct CampaignConfig {
    std::string kind = "mc";
    int n = 10;
    std::uint64_t master_seed = 1;
    std::string objective = "max_nutation";
    std::vector<ParamDef> params;
    CeOptions ce;
    unsigned threads = 0;  // 0: hardware concurrency
    std::optional<double> duration;
};

// -------------------------------------------------------------- verdicts

/// Threshold monitors flag `value cmp limit` held for at least the
/// persistence time. Each holding sample adds its sample spacing to the
/// hold; the violation opens at the sample that completes the hold.
struct Violation {
    double t_open = 0.0;
    double t_close = 0.0;  // first clear sample, or the last sample if still open
    double peak = 0.0;     // most extreme value in the violating direction
    bool open_at_end = false;
};

struct StatsWindow {
    double t_end = 0.0;
    double mean = 0.0;
    double max = 0.0;
    double rms = 0.0;
};

struct StatsRecord {
    // Whole run.
    double mean = 0.0;
    double max = 0.0;
    double rms = 0.0;
    // Worst sliding-window values and one snapshot per elapsed window length.
    double window_mean_max = 0.0;
    double window_rms_max = 0.0;
    std::vector<StatsWindow> snapshots;
};

enum class VerdictStatus { Pass, Fail, Disabled, NoData };

const char* verdict_name(VerdictStatus s);
VerdictStatus parse_verdict(const std::string& s);

struct Verdict {
    std::string monitor_id;
    VerdictStatus status = VerdictStatus::Pass;
    std::vector<Violation> violations;
    std::optional<StatsRecord> stats;
};

/// Pure function of the trace. Throws UnknownSignal.
Verdict eval_monitor(const Monitor& monitor, const Trace& trace);
std::vector<Verdict> eval_monitors(const std::vector<Monitor>& monitors, const Trace& trace);

}  // namespace upstage::vnv
