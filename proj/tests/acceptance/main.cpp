// Acceptance suite: one PASS/FAIL line per primary criterion. Exits 1 if
// any criterion fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fixtures.hpp"
#include "upstage/campaign.hpp"
#include "upstage/config.hpp"
#include "upstage/fsw.hpp"
#include "upstage/plant.hpp"
#include "upstage/requirements.hpp"
#include "upstage/runner.hpp"

using namespace upstage;
namespace fs = std::filesystem;

namespace tol {
constexpr double kPilDiff = 1e-12;
constexpr double kPilSeconds = 120.0;
constexpr double kMomentumDrift = 1e-7;
constexpr double kMomentumSeconds = 60.0;
constexpr int kMpcInstances = 1000;
constexpr double kMpcSeconds = 60.0;
constexpr double kSysidAbs = 1e-6;
constexpr double kSysidRel = 0.02;
constexpr double kCeRel = 0.02;
constexpr double kCeSeconds = 30.0;
}  // namespace tol

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Scenario demo(double duration) {
    ScenarioSource s = upstage::testing::demo_source();
    s.set("sim.duration", duration);
    return s.build();
}

// ------------------------------------------------------------------ PIL

Outcome pil_equivalence() {
    const auto t0 = Clock::now();
    const Scenario sc = demo(1000.0);  // 10^4 flight-software ticks
    const EquivalenceResult eq = run_equivalence(sc);
    const double secs = since(t0);
    const bool ok = eq.in_process.ticks == 10000 && eq.remote.ticks == 10000 && eq.max_abs_diff <= tol::kPilDiff &&
                    secs < tol::kPilSeconds;
    return {ok, fmt::format("ticks {} / {}, max |diff| {:.3g} ({}), {:.1f} s", eq.in_process.ticks, eq.remote.ticks,
                            eq.max_abs_diff, eq.worst_signal.empty() ? "-" : eq.worst_signal, secs)};
}

// ------------------------------------------------------------- momentum

Outcome momentum_conservation() {
    const auto t0 = Clock::now();
    plant::PlantConfig c;
    c.m_dry = 900.0;
    c.J_dry = Vec3(1100.0, 1150.0, 1500.0).asDiagonal();
    c.w0 = Vec3(0.004, -0.003, 3.0 * kDeg);
    c.m_prop = 300.0;
    c.params.fill_coefficient = 0.2;
    c.R_t = 0.8;
    c.z_b = -0.3;
    c.zeta = 0.1;
    c.phi0 = 0.7;
    c.m_gas = 2.0;
    c.V_tank = 0.5;
    plant::VehicleState s = plant::make_initial_state(c);
    const Vec3 H0 = plant::inertial_momentum(s);
    const int steps = static_cast<int>(std::lround(5.0 * 3600.0 / 0.1));
    for (int i = 0; i < steps; ++i) s = plant::step_dynamics(s, {}, 0.1, c.params);
    const double drift = (plant::inertial_momentum(s) - H0).norm() / H0.norm();
    const double secs = since(t0);
    return {drift < tol::kMomentumDrift && secs < tol::kMomentumSeconds,
            fmt::format("{} steps, relative drift {:.3g}, {:.1f} s", steps, drift, secs)};
}

// ------------------------------------------------------------- barbecue

Outcome barbecue_comparison() {
    auto run = [](const std::string& mode) {
        ScenarioSource s = upstage::testing::demo_source();
        s.set("sim.duration", 600.0);
        s.set_assignment("fsw.controller_override=" + mode);
        return run_in_process(s.build());
    };
    const RunResult pp = run("phase_plane"), ad = run("adaptive");
    const bool ok = pp.status == RunStatus::Ok && ad.status == RunStatus::Ok && ad.metrics.pulses < pp.metrics.pulses &&
                    ad.metrics.max_nutation < pp.metrics.max_nutation;
    return {ok, fmt::format("pulses phase_plane {} adaptive {}, max nutation phase_plane {:.4f} deg adaptive {:.4f} deg",
                            pp.metrics.pulses, ad.metrics.pulses, pp.metrics.max_nutation / kDeg,
                            ad.metrics.max_nutation / kDeg)};
}

// ------------------------------------------------------------------ MPC

double enumerate_cost(const fsw::MpcAxisProblem& p) {
    const double err = std::abs(p.rate_ref - p.rate);
    const double kgain = p.authority / p.inertia;
    double best = std::numeric_limits<double>::infinity();
    for (unsigned pat = 0; pat < (1u << p.horizon); ++pat) {
        const int n = std::popcount(pat);
        const double U = std::clamp(err / kgain, n * p.mib, n * p.period);
        const double r = err - kgain * U;
        best = std::min(best, p.weights.w_count * n + p.weights.w_term * r * r);
    }
    return best;
}

Outcome mpc_optimality() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    auto u = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
    int mismatches = 0;
    for (int i = 0; i < tol::kMpcInstances; ++i) {
        fsw::MpcAxisProblem p;
        p.inertia = u(200.0, 3000.0);
        p.authority = u(5.0, 80.0);
        p.mib = u(0.01, 0.05);
        p.period = 0.1;
        p.horizon = 1 + static_cast<int>(rng() % 6);
        p.rate = u(-0.02, 0.02);
        p.rate_ref = rng() % 2 ? 0.0 : u(-0.02, 0.02);
        p.weights.w_count = u(0.1, 5.0);
        p.weights.w_term = std::pow(10.0, u(4.0, 9.0));
        if (fsw::mpc_plan_axis(p).cost != enumerate_cost(p)) ++mismatches;
    }
    const double secs = since(t0);
    return {mismatches == 0 && secs < tol::kMpcSeconds,
            fmt::format("{} instances, {} cost mismatches, {:.2f} s", tol::kMpcInstances, mismatches, secs)};
}

// ---------------------------------------------------------------- sysid

double relative_error(const fsw::Vec6& est, const fsw::Vec6& truth, double scale) {
    double worst = 0.0;
    for (int i = 0; i < 6; ++i) {
        const double d = std::abs(truth[i]) > 0.0 ? std::abs(truth[i]) : scale;
        worst = std::max(worst, std::abs(est[i] - truth[i]) / d);
    }
    return worst;
}

double sysid_noise_free() {
    const Mat3 J = Vec3(1000.0, 1000.0, 800.0).asDiagonal();
    std::mt19937_64 rng(21);
    auto u = [&](double a) { return std::uniform_real_distribution<double>(-a, a)(rng); };
    fsw::InertiaEstimate e;
    e.theta = fsw::theta_from_inertia(Vec3(900.0, 900.0, 900.0).asDiagonal());
    fsw::RlsConfig c;
    c.p0 = 1e10;
    c.cond_limit = 1e30;
    e.P = c.p0 * fsw::Mat6::Identity();
    for (int i = 0; i < 200; ++i) {
        const Vec3 w(u(0.1), u(0.1), u(0.1)), wd(u(0.05), u(0.05), u(0.05));
        e = fsw::rls_update(e, w, wd, J * wd + w.cross(J * w), c).estimate;
    }
    return (e.theta - fsw::theta_from_inertia(J)).cwiseAbs().maxCoeff();
}

// 60 s of random bang-zero-bang torques on a plant with a product of
// inertia; gyro noise sigma is 1% of the 0.05 rad/s reference rate.
double sysid_noisy() {
    plant::PlantConfig c;
    c.m_dry = 1000.0;
    c.m_gas = 1.0;
    c.J_dry << 1000, 0, -50, 0, 1000, 0, -50, 0, 800;
    c.params.slosh_model = plant::SloshModel::None;
    c.w0 = Vec3(0.02, -0.01, 0.05);
    plant::VehicleState s = plant::make_initial_state(c);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_int_distribution<int> level(-1, 1);
    fsw::Navigator nav({0.1, 1.0});
    fsw::RlsConfig rc;
    rc.p0 = 1e4;
    fsw::InertiaEstimate est;
    est.theta = fsw::theta_from_inertia(Vec3(900.0, 900.0, 900.0).asDiagonal());
    est.P = rc.p0 * fsw::Mat6::Identity();
    const double sigma = 0.01 * 0.05;
    Vec3 tau_f = Vec3::Zero(), tau_prev = Vec3::Zero();
    for (int k = 0; k < 600; ++k) {
        fsw::SensorFrame f;
        f.tick = static_cast<std::uint64_t>(k);
        f.t = 0.1 * k;
        f.w_meas = s.w + sigma * Vec3(noise(rng), noise(rng), noise(rng));
        const auto o = nav.update(f);
        if (k > 0) {
            tau_f += nav.alpha() * (tau_prev - tau_f);
            est = fsw::rls_update(est, 0.5 * (o.w_hat + o.w_hat_prev), o.w_dot_hat, tau_f, rc).estimate;
        }
        Vec3 tau;
        for (int i = 0; i < 3; ++i) tau[i] = 100.0 * level(rng);
        for (int j = 0; j < 10; ++j) s = plant::step_dynamics(s, {tau, Vec3::Zero(), 0.0}, 0.01, c.params);
        tau_prev = tau;
    }
    return relative_error(est.theta, fsw::theta_from_inertia(c.J_dry), 1000.0);
}

Outcome sysid_recovery() {
    const double abs_err = sysid_noise_free(), rel_err = sysid_noisy();
    return {abs_err < tol::kSysidAbs && rel_err < tol::kSysidRel,
            fmt::format("noise-free max |err| {:.3g}, 1% noise max relative err {:.3g}", abs_err, rel_err)};
}

// ------------------------------------------------------------ sequencer

std::vector<std::string> of_kind(const sim::EventLog& log, const std::string& kind) {
    std::vector<std::string> out;
    for (const auto& e : log.events())
        if (e.kind == kind) out.push_back(e.detail.substr(0, e.detail.find(' ')));
    return out;
}

Outcome sequencer_mission() {
    const RunResult nominal = run_in_process(demo(640.0));
    const auto rel = of_kind(nominal.events, "release");
    const bool order = rel == std::vector<std::string>{"PL1", "STRUCT", "PL2"};

    ScenarioSource s = upstage::testing::demo_with(
        "[[fault]]\nthruster = \"XP1\"\nkind = \"Leak\"\nmdot = 0.5\nthrust_fraction = 0.05\nt_onset = 100.0\n");
    s.set("sim.duration", 120.0);
    const RunResult leak = run_in_process(s.build());
    const auto tr = of_kind(leak.events, "transition");
    const bool emergency = tr.size() >= 3 && tr[1] == "COAST" && tr[2] == "EMERGENCY_RELEASE" &&
                           of_kind(leak.events, "release").size() == 3;
    std::string seq;
    for (const auto& r : rel) seq += (seq.empty() ? "" : "->") + r;
    std::string path;
    for (const auto& t : tr) path += (path.empty() ? "" : "->") + t;
    return {order && emergency, fmt::format("nominal releases {}; leak path {}", seq, path)};
}

// ------------------------------------------------------------------- CE

Outcome ce_worst_case() {
    const auto t0 = Clock::now();
    const CampaignFile cf = load_campaign_file(upstage::testing::scenario_dir() / "toy_ce.toml");
    const auto& cfg = cf.campaign;
    const auto r = vnv::ce_search(cfg, vnv::toy_evaluator(cfg));
    const double secs = since(t0);

    constexpr int kGrid = 50;
    std::vector<double> grid_best;
    double grid_val = -std::numeric_limits<double>::infinity();
    std::vector<double> x(3);
    for (int i = 0; i < kGrid; ++i)
        for (int j = 0; j < kGrid; ++j)
            for (int k = 0; k < kGrid; ++k) {
                const int idx[3] = {i, j, k};
                for (int d = 0; d < 3; ++d) {
                    const auto& p = cfg.params[d];
                    x[d] = p.lower + (p.upper - p.lower) * idx[d] / (kGrid - 1.0);
                }
                const double v = vnv::toy_objective(cfg.objective, cfg.params, x);
                if (v > grid_val) grid_val = v, grid_best = x;
            }

    if (!r.best) return {false, "no best sample"};
    const auto& best = r.samples[*r.best].params;
    double worst = 0.0;
    for (int d = 0; d < 3; ++d)
        worst = std::max(worst, std::abs(best[d] - grid_best[d]) / (cfg.params[d].upper - cfg.params[d].lower));
    bool monotone = true;
    for (std::size_t k = 1; k < r.iterations.size(); ++k)
        monotone = monotone && r.iterations[k].best_ever >= r.iterations[k - 1].best_ever;
    return {worst <= tol::kCeRel && monotone && secs < tol::kCeSeconds,
            fmt::format("best ({:.4f}, {:.4f}, {:.4f}) vs grid ({:.4f}, {:.4f}, {:.4f}), max offset {:.4f} of range, "
                        "{} iterations, best-ever monotone {}, {:.2f} s",
                        best[0], best[1], best[2], grid_best[0], grid_best[1], grid_best[2], worst,
                        r.iterations.size(), monotone ? "yes" : "no", secs)};
}

// ---------------------------------------------------------- determinism

std::string first_difference(const fs::path& a, const fs::path& b, std::initializer_list<const char*> files) {
    for (const char* f : files)
        if (read_text_file(a / f) != read_text_file(b / f)) return f;
    return "";
}

Outcome determinism() {
    const Scenario sc = demo(120.0);
    const auto ra = upstage::testing::temp_dir("acc_run_a"), rb = upstage::testing::temp_dir("acc_run_b");
    for (const auto& d : {ra, rb}) {
        const RunResult r = run_in_process(sc);
        write_artifacts(r, sc, d);
        vnv::write_run_verdicts(vnv::evaluate(sc.monitors, r.trace), d);
    }
    const std::string run_diff =
        first_difference(ra, rb, {"trace.csv", "events.csv", "summary.json", "verdicts.csv", "violations.csv"});

    const CampaignFile cf = load_campaign_file(upstage::testing::scenario_dir() / "demo_mc.toml");
    vnv::CampaignConfig cfg = cf.campaign;
    cfg.n = 8;
    cfg.duration = 30.0;
    const ScenarioSource src = ScenarioSource::from_file(*cf.scenario);
    const auto ca = upstage::testing::temp_dir("acc_mc_a"), cb = upstage::testing::temp_dir("acc_mc_b");
    cfg.threads = 1;
    vnv::write_campaign(vnv::run_monte_carlo(cfg, vnv::scenario_evaluator(src, cfg)), ca);
    cfg.threads = 4;
    vnv::write_campaign(vnv::run_monte_carlo(cfg, vnv::scenario_evaluator(src, cfg)), cb);
    const std::string mc_diff =
        first_difference(ca, cb, {"samples.csv", "verdicts.csv", "violations.csv", "campaign.json"});

    return {run_diff.empty() && mc_diff.empty(),
            fmt::format("run artifacts {}, Monte Carlo artifacts (1 vs 4 threads) {}",
                        run_diff.empty() ? "identical" : "differ in " + run_diff,
                        mc_diff.empty() ? "identical" : "differ in " + mc_diff)};
}

// --------------------------------------------------------- requirements

Outcome requirement_report() {
    const auto tree = vnv::parse_requirements(upstage::testing::scenario_dir() / "demo.req");
    const Scenario sc = upstage::testing::demo_source().build();
    std::vector<vnv::MonitorSummary> ms;
    for (const auto& m : sc.monitors) {
        vnv::MonitorSummary s;
        s.id = m.id;
        s.requirements = m.requirements;
        s.status = vnv::VerdictStatus::Pass;
        s.samples = s.passes = 1;
        ms.push_back(s);
    }
    const auto rep = vnv::generate_report(tree, ms);
    std::istringstream is(rep.coverage_csv);
    std::string line;
    std::getline(is, line);
    std::map<std::string, int> seen;
    while (std::getline(is, line))
        if (!line.empty()) ++seen[csv_split(line)[0]];
    bool once = seen.size() == sc.monitors.size();
    for (const auto& [id, n] : seen) once = once && n == 1;

    // Crafted combinations on ROOT <- {A <- A1, B}: expected statuses by hand.
    const auto crafted = vnv::parse_requirements_text(R"(
[[requirement]]
id = "ROOT"
text = ""
verify_by = ["MR"]
[[requirement]]
id = "A"
parent = "ROOT"
text = ""
verify_by = ["MA"]
[[requirement]]
id = "A1"
parent = "A"
text = ""
verify_by = ["MA1"]
[[requirement]]
id = "B"
parent = "ROOT"
text = ""
verify_by = ["MB"]
)");
    using V = vnv::VerdictStatus;
    using R = vnv::ReqStatus;
    struct Case {
        std::map<std::string, V> monitors;
        std::map<std::string, R> expect;
    };
    const std::vector<Case> cases = {
        {{{"MR", V::Pass}, {"MA", V::Pass}, {"MA1", V::Pass}, {"MB", V::Pass}},
         {{"ROOT", R::Pass}, {"A", R::Pass}, {"A1", R::Pass}, {"B", R::Pass}}},
        {{{"MR", V::Pass}, {"MA", V::Pass}, {"MA1", V::Fail}, {"MB", V::Pass}},
         {{"ROOT", R::Fail}, {"A", R::Fail}, {"A1", R::Fail}, {"B", R::Pass}}},
        {{{"MR", V::Fail}, {"MA", V::Pass}, {"MA1", V::Pass}, {"MB", V::Pass}},
         {{"ROOT", R::Fail}, {"A", R::Pass}, {"A1", R::Pass}, {"B", R::Pass}}},
        {{{"MR", V::Pass}, {"MA", V::Pass}, {"MA1", V::NoData}, {"MB", V::Pass}},
         {{"ROOT", R::Unverified}, {"A", R::Unverified}, {"A1", R::Unverified}, {"B", R::Pass}}},
        {{{"MR", V::Pass}, {"MA", V::Pass}, {"MA1", V::NoData}, {"MB", V::Fail}},
         {{"ROOT", R::Fail}, {"A", R::Unverified}, {"A1", R::Unverified}, {"B", R::Fail}}},
    };
    int wrong = 0;
    for (const auto& c : cases) {
        const auto st = vnv::aggregate(crafted, c.monitors);
        for (const auto& [id, want] : c.expect)
            if (st[*crafted.find(id)] != want) ++wrong;
    }
    return {once && wrong == 0, fmt::format("{} monitors in coverage ({}), {} crafted cases, {} wrong statuses",
                                            seen.size(), once ? "each once" : "duplicates or gaps", cases.size(), wrong)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"pil_equivalence", pil_equivalence},       {"momentum_conservation", momentum_conservation},
        {"barbecue_comparison", barbecue_comparison}, {"mpc_optimality", mpc_optimality},
        {"sysid_recovery", sysid_recovery},         {"sequencer_mission", sequencer_mission},
        {"ce_worst_case", ce_worst_case},           {"determinism", determinism},
        {"requirement_report", requirement_report},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %-22s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
