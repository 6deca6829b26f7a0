// upstage: scenario runs, PIL sessions, campaigns and reports.
//
// Exit codes: 0 ok, 1 configuration/I/O/link error, 2 monitor violation
// (with --strict), 3 numerical divergence.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "plots.hpp"
#include "upstage/campaign.hpp"
#include "upstage/config.hpp"
#include "upstage/error.hpp"
#include "upstage/flight_software.hpp"
#include "upstage/pil.hpp"
#include "upstage/requirements.hpp"
#include "upstage/runner.hpp"
#include "upstage/sequencer.hpp"
#include "upstage/service.hpp"

namespace fs = std::filesystem;
using namespace upstage;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitViolation = 2;
constexpr int kExitDivergence = 3;

struct ScenarioArgs {
    std::string path;
    std::vector<std::string> sets;
    std::optional<double> duration;
    std::optional<std::uint64_t> seed;
};

void add_scenario_flags(CLI::App* app, ScenarioArgs& a, bool with_run_flags = true) {
    app->add_option("--set", a.sets, "Override a scenario key (key=value), repeatable");
    if (with_run_flags) {
        app->add_option("--duration", a.duration, "Simulated duration, s");
        app->add_option("--seed", a.seed, "Random seed");
    }
}

ScenarioSource make_source(const ScenarioArgs& a) {
    ScenarioSource src = ScenarioSource::from_file(a.path);
    for (const auto& s : a.sets) src.set_assignment(s);
    if (a.duration) src.set("sim.duration", *a.duration);
    return src;
}

Scenario load(const ScenarioArgs& a) {
    Scenario sc = make_source(a).build();
    if (a.seed) sc.sim.seed = *a.seed;
    return sc;
}

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("upstage");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(spdlog::level::info);
    if (const char* env = std::getenv("UPSTAGE_LOG")) {
        const std::string v = env;
        const auto lvl = spdlog::level::from_str(v);
        if (lvl == spdlog::level::off && v != "off")
            spdlog::warn("UPSTAGE_LOG={} not recognized, using info", v);
        else
            spdlog::set_level(lvl);
    }
}

bool any_failed(const std::vector<vnv::MonitorOutcome>& m) {
    for (const auto& o : m)
        if (o.status == vnv::VerdictStatus::Fail) return true;
    return false;
}

int finish_run(const RunResult& r, const Scenario& sc, const fs::path& out, bool strict, bool plots) {
    write_artifacts(r, sc, out);
    const auto monitors = vnv::evaluate(sc.monitors, r.trace);
    vnv::write_run_verdicts(monitors, out);
    if (plots && r.trace.rows() > 0) tools::write_standard_plots(r.trace, out / "plots");
    spdlog::info("{} ticks, {} rows, {} pulses, max nutation {:.4f} deg, propellant {:.4f} kg", r.ticks, r.trace.rows(),
                 r.metrics.pulses, r.metrics.max_nutation / kDeg, r.metrics.propellant_consumed);
    for (const auto& m : monitors)
        if (m.status == vnv::VerdictStatus::Fail)
            spdlog::warn("monitor {} failed ({} violations)", m.id, m.violations.size());
    spdlog::info("artifacts in {}", out.string());
    if (r.status == RunStatus::Diverged) {
        spdlog::error("{}", r.error);
        return kExitDivergence;
    }
    if (strict && any_failed(monitors)) return kExitViolation;
    return kExitOk;
}

// ---------------------------------------------------------------- verbs

int cmd_run(const ScenarioArgs& a, const fs::path& out, bool strict, bool plots) {
    const Scenario sc = load(a);
    spdlog::info("running {} for {} s (seed {})", a.path, sc.sim.duration, sc.sim.seed);
    return finish_run(run_in_process(sc), sc, out, strict, plots);
}

struct ServeArgs {
    std::string pil_listen;
    std::string telemetry_listen;
    bool local_fsw = false;
    double accept_timeout = 60.0;
    unsigned wait_clients = 0;
    double wait_timeout = 30.0;
    double speed = 0.0;
};

int cmd_serve(const ScenarioArgs& a, const ServeArgs& s, const fs::path& out, bool strict, bool plots) {
    const Scenario sc = load(a);
    service::TelemetryServer telemetry(
        pil::parse_endpoint(s.telemetry_listen.empty() ? sc.telemetry.listen : s.telemetry_listen),
        sc.telemetry.stream_decimation);
    std::cout << "telemetry listening on 127.0.0.1:" << telemetry.port() << std::endl;

    std::optional<fsw::FlightSoftware> local;
    std::unique_ptr<pil::FswLink> link;
    std::unique_ptr<pil::TcpStream> stream;
    std::optional<pil::TcpListener> listener;
    if (s.local_fsw) {
        local.emplace(make_flight_software(sc));
        link = std::make_unique<pil::InProcessLink>(*local);
    } else {
        const auto ep = pil::parse_endpoint(s.pil_listen.empty() ? sc.pil.listen : s.pil_listen);
        listener.emplace(ep);
        std::cout << "pil listening on " << ep.host << ':' << listener->port() << std::endl;
        stream = listener->accept(s.accept_timeout);
        auto sl = std::make_unique<pil::StreamLink>(*stream, sc.pil.timeout);
        sl->handshake(pil::session_info(sc));
        spdlog::info("flight software connected");
        link = std::move(sl);
    }

    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(s.wait_timeout);
    while (telemetry.client_count() < s.wait_clients && std::chrono::steady_clock::now() < deadline)
        std::this_thread::sleep_for(std::chrono::milliseconds(10));

    const auto start = std::chrono::steady_clock::now();
    DriveHooks hooks;
    hooks.before_tick = [&](sim::PlantSide& plant) {
        if (s.speed > 0.0) {
            const double wall = static_cast<double>(plant.tick()) * sc.fsw.dt / s.speed;
            std::this_thread::sleep_until(start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                      std::chrono::duration<double>(wall)));
        }
        return telemetry.before_tick(plant);
    };
    hooks.after_tick = [&](sim::PlantSide& plant) { telemetry.after_tick(plant); };
    const RunResult r = drive(sc, sc.sim.seed, *link, hooks);
    telemetry.finish(nullptr, status_name(r.status));
    return finish_run(r, sc, out, strict, plots);
}

int cmd_fsw(const std::string& connect, const ScenarioArgs& a, const std::optional<std::string>& out,
            double connect_timeout) {
    const Scenario sc = load(a);
    auto stream = pil::tcp_connect(pil::parse_endpoint(connect), connect_timeout);
    fsw::FlightSoftware f = make_flight_software(sc);
    std::ofstream log;
    if (out) {
        fs::create_directories(*out);
        log.open(fs::path(*out) / "fsw.csv", std::ios::binary);
        if (!log) throw IoError("cannot write " + (fs::path(*out) / "fsw.csv").string());
        write_fsw_log_header(log);
    }
    const auto served = pil::serve_fsw(*stream, f, pil::session_info(sc),
                                       [&](const fsw::SensorFrame& frame, const fsw::FlightSoftware& fsw) {
                                           if (log.is_open()) write_fsw_log_row(log, frame, fsw);
                                       });
    spdlog::info("SHUTDOWN after {} frames", served);
    return kExitOk;
}

struct CampaignArgs {
    std::string file;
    std::vector<std::string> sets;
    std::optional<int> n;
    std::optional<std::uint64_t> master_seed;
    std::optional<unsigned> threads;
    std::optional<double> duration;
};

int cmd_campaign(const std::string& kind, const CampaignArgs& a, const fs::path& out) {
    const auto cf = load_campaign_file(a.file);
    vnv::CampaignConfig cfg = cf.campaign;
    cfg.kind = kind;
    if (a.n) cfg.n = *a.n;
    if (a.master_seed) cfg.master_seed = *a.master_seed;
    if (a.threads) cfg.threads = *a.threads;
    if (a.duration) cfg.duration = *a.duration;
    if (cfg.n < 1) throw ConfigInvalid("campaign.n");
    const auto& objective = vnv::find_objective(cfg.objective);

    vnv::Evaluator eval;
    if (objective.needs_run) {
        ScenarioSource src = ScenarioSource::from_file(cf.scenario ? *cf.scenario : fs::path(a.file));
        for (const auto& s : a.sets) src.set_assignment(s);
        // Fail fast on a bad base scenario or unresolvable parameter paths.
        ScenarioSource probe = src;
        for (const auto& p : cfg.params) probe.set(p.path, 0.5 * (p.lower + p.upper));
        (void)probe.build();
        eval = vnv::scenario_evaluator(src, cfg);
    } else {
        eval = vnv::toy_evaluator(cfg);
    }

    const auto t0 = std::chrono::steady_clock::now();
    const auto r = kind == "mc" ? vnv::run_monte_carlo(cfg, eval) : vnv::ce_search(cfg, eval);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    vnv::write_campaign(r, out);
    std::size_t failed = 0;
    for (const auto& s : r.samples) failed += s.outcome.status != RunStatus::Ok;
    spdlog::info("{} campaign: {} samples ({} failed), {:.2f} s", kind, r.samples.size(), failed, elapsed);
    if (r.best) {
        const auto& b = r.samples[*r.best];
        std::string params;
        for (std::size_t k = 0; k < b.params.size(); ++k)
            params += fmt::format("{}{}={:.6g}", k ? ", " : "", r.param_names[k], b.params[k]);
        std::cout << fmt::format("best {} = {:.6g} at sample {} ({})", cfg.objective, b.outcome.objective, b.index, params)
                  << std::endl;
    }
    if (kind == "ce") {
        for (const auto& it : r.iterations)
            spdlog::info("iteration {}: best {:.6g}, best ever {:.6g}", it.iteration, it.best_in_iteration, it.best_ever);
    }
    return kExitOk;
}

int cmd_report(const std::string& req, const std::string& results, const fs::path& out, bool strict) {
    const auto tree = vnv::parse_requirements(req);
    const auto monitors = vnv::read_results(results);
    const auto rep = vnv::generate_report(tree, monitors);
    vnv::write_report(rep, out);
    bool fail = false;
    for (std::size_t i = 0; i < rep.status.size(); ++i) {
        spdlog::info("{:<16} {}", tree.nodes()[i].id, vnv::req_status_name(rep.status[i]));
        fail = fail || rep.status[i] == vnv::ReqStatus::Fail;
    }
    for (const auto& m : rep.link_mismatches) spdlog::warn("{}", m);
    return strict && fail ? kExitViolation : kExitOk;
}

int cmd_validate(const std::vector<std::string>& files, const ScenarioArgs& ctx) {
    for (const auto& f : files) {
        const auto ext = fs::path(f).extension().string();
        if (ext == ".req") {
            const auto tree = vnv::parse_requirements(f);
            std::cout << "ok: " << f << " (" << tree.nodes().size() << " requirements)" << std::endl;
        } else if (ext == ".seq") {
            std::vector<std::string> devices;
            if (!ctx.path.empty()) devices = load(ctx).device_ids();
            seq::ParseContext pc{seq::telemetry_dictionary(devices), devices};
            const auto prog = seq::parse_sequence(read_text_file(f), pc);
            std::cout << "ok: " << f << " (" << prog.states.size() << " states, " << prog.globals.size()
                      << " globals)" << std::endl;
        } else {
            ScenarioArgs a = ctx;
            a.path = f;
            const Scenario sc = load(a);
            std::cout << "ok: " << f << " (" << sc.thrusters.size() << " thrusters, " << sc.devices.size()
                      << " separation devices, " << sc.monitors.size() << " monitors)" << std::endl;
        }
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"upstage: upper-stage GNC closed-loop simulation and verification"};
    app.require_subcommand(1);

    ScenarioArgs run_args;
    std::string out = "upstage-out";
    bool strict = false, plots = false;
    auto* run = app.add_subcommand("run", "Run a scenario in-process");
    run->add_option("scenario", run_args.path, "Scenario file")->required()->check(CLI::ExistingFile);
    add_scenario_flags(run, run_args);
    run->add_option("--out", out, "Output directory");
    run->add_flag("--strict", strict, "Exit 2 when a monitor fails");
    run->add_flag("--plots", plots, "Write SVG plots");

    ScenarioArgs serve_args;
    ServeArgs serve_opts;
    auto* serve = app.add_subcommand("serve", "Host the plant, the PIL endpoint and the telemetry/command stream");
    serve->add_option("scenario", serve_args.path, "Scenario file")->required()->check(CLI::ExistingFile);
    add_scenario_flags(serve, serve_args);
    serve->add_option("--pil-listen", serve_opts.pil_listen, "host:port for the flight-software link");
    serve->add_option("--telemetry-listen", serve_opts.telemetry_listen, "host:port for telemetry and commands");
    serve->add_flag("--local-fsw", serve_opts.local_fsw, "Run the flight software in this process");
    serve->add_option("--accept-timeout", serve_opts.accept_timeout, "Seconds to wait for the flight software");
    serve->add_option("--wait-clients", serve_opts.wait_clients, "Telemetry clients to wait for before starting");
    serve->add_option("--wait-timeout", serve_opts.wait_timeout, "Seconds to wait for telemetry clients");
    serve->add_option("--speed", serve_opts.speed, "Pace the run at this multiple of real time (0: unpaced)");
    serve->add_option("--out", out, "Output directory");
    serve->add_flag("--strict", strict, "Exit 2 when a monitor fails");
    serve->add_flag("--plots", plots, "Write SVG plots");

    ScenarioArgs fsw_args;
    std::string connect;
    std::optional<std::string> fsw_out;
    double connect_timeout = 10.0;
    auto* fswc = app.add_subcommand("fsw", "Run the flight software as the remote PIL peer");
    fswc->add_option("--connect", connect, "host:port of the serving plant")->required();
    fswc->add_option("--fsw-config", fsw_args.path, "Scenario file configuring the flight software")
        ->required()
        ->check(CLI::ExistingFile);
    add_scenario_flags(fswc, fsw_args, false);
    fswc->add_option("--connect-timeout", connect_timeout, "Seconds to keep retrying the connection");
    fswc->add_option("--out", fsw_out, "Output directory for the flight-software log");

    CampaignArgs camp_args;
    auto* campaign = app.add_subcommand("campaign", "Monte Carlo or cross-entropy campaign");
    campaign->require_subcommand(1);
    std::string camp_kind;
    for (const char* kind : {"mc", "ce"}) {
        auto* c = campaign->add_subcommand(kind, kind == std::string("mc") ? "Monte Carlo" : "Cross-entropy worst case");
        c->add_option("config", camp_args.file, "Campaign or scenario file")->required()->check(CLI::ExistingFile);
        c->add_option("--set", camp_args.sets, "Override a scenario key (key=value), repeatable");
        c->add_option("--n", camp_args.n, "Monte Carlo sample count");
        c->add_option("--seed", camp_args.master_seed, "Master seed");
        c->add_option("--threads", camp_args.threads, "Worker threads (0: all cores)");
        c->add_option("--duration", camp_args.duration, "Per-sample simulated duration, s");
        c->add_option("--out", out, "Output directory");
        c->callback([&camp_kind, kind] { camp_kind = kind; });
    }

    std::string req_file, results_dir;
    auto* report = app.add_subcommand("report", "Requirement coverage and verdict report");
    report->add_option("--requirements", req_file, "Requirement file (.req)")->required()->check(CLI::ExistingFile);
    report->add_option("--results", results_dir, "Run or campaign output directory")->required();
    report->add_option("--out", out, "Output directory");
    report->add_flag("--strict", strict, "Exit 2 when a requirement fails");

    std::vector<std::string> validate_files;
    ScenarioArgs validate_ctx;
    auto* validate = app.add_subcommand("validate", "Validate scenario, sequence or requirement files");
    validate->add_option("files", validate_files, "Files (.toml, .seq, .req)")->required()->check(CLI::ExistingFile);
    validate->add_option("--scenario", validate_ctx.path, "Scenario giving device ids for .seq files");
    validate->add_option("--set", validate_ctx.sets, "Override a scenario key (key=value), repeatable");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run) return cmd_run(run_args, out, strict, plots);
        if (*serve) return cmd_serve(serve_args, serve_opts, out, strict, plots);
        if (*fswc) return cmd_fsw(connect, fsw_args, fsw_out, connect_timeout);
        if (*campaign) return cmd_campaign(camp_kind, camp_args, out);
        if (*report) return cmd_report(req_file, results_dir, out, strict);
        if (*validate) return cmd_validate(validate_files, validate_ctx);
    } catch (const NumericalDivergence& e) {
        spdlog::error("{}", e.what());
        return kExitDivergence;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitConfig;
    }
    return kExitConfig;
}
