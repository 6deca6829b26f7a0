#pragma once

// Monte Carlo and cross-entropy campaigns over a parameter space.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "upstage/config.hpp"
#include "upstage/monitors.hpp"
#include "upstage/runner.hpp"

namespace upstage::vnv {

/// SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed of sample i: splitmix64(master + 0x9E3779B97F4A7C15 * (i + 1)).
std::uint64_t split_seed(std::uint64_t master, std::uint64_t index);

/// Draws from the truncated Gaussian on [lower, upper] by rejection. Falls
/// back to a uniform draw after 10000 rejections.
double truncated_gaussian(std::mt19937_64& rng, double mu, double sigma, double lower, double upper);
double uniform_in(std::mt19937_64& rng, double lower, double upper);

/// Parameter vector for one Monte Carlo sample.
std::vector<double> sample_params(const std::vector<ParamDef>& space, std::uint64_t seed);

struct MonitorOutcome {
    std::string id;
    std::vector<std::string> requirements;
    VerdictStatus status = VerdictStatus::Pass;
    std::vector<Violation> violations;
    std::optional<StatsRecord> stats;
};

struct SampleOutcome {
    double objective = NAN;
    RunStatus status = RunStatus::Ok;
    std::string error;
    std::vector<MonitorOutcome> monitors;
};

using Evaluator = std::function<SampleOutcome(const std::vector<double>& params, std::uint64_t seed)>;

// ------------------------------------------------------------ objectives

struct Objective {
    std::string name;
    bool needs_run = true;
    std::string description;
};

const std::vector<Objective>& objective_registry();
const Objective& find_objective(const std::string& name);  // throws ConfigInvalid

/// Toy objectives over normalized coordinates u_i = (x_i - lower_i) / range_i:
///   toy_linear     sum u_i
///   toy_quadratic  -sum (u_i - c_i)^2, c_i = 0.25 + 0.25 (i mod 3)
double toy_objective(const std::string& name, const std::vector<ParamDef>& space, const std::vector<double>& x);
double run_objective(const std::string& name, const RunMetrics& m);

MonitorOutcome summarize(const Monitor& m, const Verdict& v);

/// Applies params via scenario overrides, runs in-process with the sample
/// seed, evaluates the scenario monitors. Config errors and divergence are
/// recorded in the outcome.
Evaluator scenario_evaluator(const ScenarioSource& source, const CampaignConfig& cfg);
Evaluator toy_evaluator(const CampaignConfig& cfg);

// -------------------------------------------------------------- campaigns

struct SampleRecord {
    std::size_t index = 0;
    int iteration = 0;  // CE iteration, 0 for Monte Carlo
    std::uint64_t seed = 0;
    std::vector<double> params;
    SampleOutcome outcome;
};

struct CeIteration {
    int iteration = 0;
    std::vector<double> mu;
    std::vector<double> sigma;
    double best_in_iteration = NAN;
    double best_ever = NAN;
    double elite_threshold = NAN;
};

struct CampaignResult {
    std::string kind;
    std::string objective;
    std::uint64_t master_seed = 0;
    std::vector<std::string> param_names;
    std::vector<SampleRecord> samples;
    std::vector<CeIteration> iterations;
    std::optional<std::size_t> best;  // index into samples
    bool converged = false;
};

/// Evaluates fn(i) for i in [0, n) on up to `threads` workers (0: hardware
/// concurrency). Results land in index order.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

CampaignResult run_monte_carlo(const CampaignConfig& cfg, const Evaluator& eval);
CampaignResult ce_search(const CampaignConfig& cfg, const Evaluator& eval);

/// samples.csv, verdicts.csv, violations.csv, iterations.csv (ce) and
/// campaign.json.
void write_campaign(const CampaignResult& r, const std::filesystem::path& dir);

void write_verdict_header(std::ostream& verdicts, std::ostream& violations);
void write_verdict_rows(std::ostream& verdicts, std::ostream& violations, std::size_t sample,
                        const std::vector<MonitorOutcome>& monitors);
/// verdicts.csv and violations.csv for a single run (sample 0).
void write_run_verdicts(const std::vector<MonitorOutcome>& monitors, const std::filesystem::path& dir);

std::vector<MonitorOutcome> evaluate(const std::vector<Monitor>& monitors, const Trace& trace);

}  // namespace upstage::vnv
