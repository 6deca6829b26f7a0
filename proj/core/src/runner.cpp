#include "upstage/runner.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <fstream>
#include <ostream>

#include "json.hpp"
#include "upstage/error.hpp"
#include "upstage/flight_software.hpp"

namespace upstage {

const char* status_name(RunStatus s) {
    switch (s) {
        case RunStatus::Ok: return "ok";
        case RunStatus::Diverged: return "diverged";
        case RunStatus::Failed: return "failed";
    }
    return "?";
}

fsw::FlightSoftware make_flight_software(const Scenario& sc) {
    return {sc.fsw, sc.thruster_geometry(), sc.device_ids(), sc.parse_program()};
}

void write_fsw_log_header(std::ostream& os) {
    os << "tick,t,state,mode,w_hat_x,w_hat_y,w_hat_z,w_ref_x,w_ref_y,w_ref_z,J_xx,J_yy,J_zz,J_xy,J_xz,J_yz,"
          "depletion_rate,infeasible,covariance_reset\n";
}

void write_fsw_log_row(std::ostream& os, const fsw::SensorFrame& f, const fsw::FlightSoftware& fsw) {
    const auto& s = fsw.status();
    const auto& states = fsw.program().states;
    os << f.tick << ',' << format_double(f.t) << ',' << (s.state < states.size() ? states[s.state].name : "") << ','
       << static_cast<unsigned>(s.mode);
    for (int i = 0; i < 3; ++i) os << ',' << format_double(s.nav.w_hat[i]);
    for (int i = 0; i < 3; ++i) os << ',' << format_double(s.w_ref[i]);
    const double J[6] = {s.J_hat(0, 0), s.J_hat(1, 1), s.J_hat(2, 2), s.J_hat(0, 1), s.J_hat(0, 2), s.J_hat(1, 2)};
    for (double v : J) os << ',' << format_double(v);
    os << ',' << format_double(s.depletion_rate) << ',' << s.infeasible << ',' << s.covariance_reset << '\n';
}

RunResult drive(const Scenario& sc, std::uint64_t seed, pil::FswLink& link, const DriveHooks& hooks) {
    RunResult out;
    sim::PlantSide plant(sc, seed);
    plant.on_row = hooks.on_row;
    pil::Lockstep lockstep(link, sc.pil.delay, sc.thrusters.size(), sc.pil.on_timeout);
    bool link_down = false;
    try {
        while (!plant.done()) {
            if (hooks.before_tick && !hooks.before_tick(plant)) break;
            const fsw::SensorFrame s = plant.sense();
            const auto r = lockstep.tick(s);
            if (r.timed_out) {
                plant.note_link_timeout();
                if (!link_down)
                    plant.events().add(s.t, "link", "no reply for tick " + std::to_string(s.tick) + ", holding last command");
            } else if (link_down) {
                plant.events().add(s.t, "link", "replies resumed at tick " + std::to_string(s.tick));
            }
            link_down = r.timed_out;
            plant.advance(r.applied);
            if (hooks.after_tick) hooks.after_tick(plant);
        }
    } catch (const NumericalDivergence& e) {
        out.status = RunStatus::Diverged;
        out.error = e.what();
        plant.events().add(plant.t(), "error", e.what());
    }
    try {
        link.shutdown();
    } catch (const Error& e) {
        plant.events().add(plant.t(), "link", std::string("shutdown failed: ") + e.what());
    }
    out.ticks = plant.tick();
    out.trace = plant.trace();
    out.events = plant.events();
    out.metrics = compute_metrics(out.trace, sc);
    return out;
}

RunResult run_in_process(const Scenario& sc) {
    fsw::FlightSoftware fsw = make_flight_software(sc);
    pil::InProcessLink link(fsw);
    return drive(sc, sc.sim.seed, link);
}

RunMetrics compute_metrics(const Trace& trace, const Scenario& sc) {
    RunMetrics m;
    m.propellant_consumed = 0.0;
    if (trace.rows() == 0) return m;
    const auto& t = trace.column("t");
    const auto& nut = trace.column("nutation");
    const auto& att = trace.column("att_err");
    for (std::size_t i = 0; i < trace.rows(); ++i) {
        if (t[i] >= sc.sim.settle_time) m.max_nutation = std::max(m.max_nutation, nut[i]);
        m.max_att_err = std::max(m.max_att_err, att[i]);
    }
    m.pulses = trace.column("pulses").back();
    m.propellant_consumed = sc.plant.m_prop - trace.column("m_prop").back();
    m.final_time = t.back();
    return m;
}

void write_artifacts(const RunResult& r, const Scenario& sc, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "trace.csv", std::ios::binary);
        if (!os) throw IoError("cannot write " + (dir / "trace.csv").string());
        r.trace.write_csv(os);
    }
    {
        std::ofstream os(dir / "events.csv", std::ios::binary);
        if (!os) throw IoError("cannot write " + (dir / "events.csv").string());
        r.events.write_csv(os);
    }
    nlohmann::ordered_json j;
    j["status"] = status_name(r.status);
    if (!r.error.empty()) j["error"] = r.error;
    j["seed"] = sc.sim.seed;
    j["ticks"] = r.ticks;
    j["rows"] = r.trace.rows();
    j["metrics"] = {{"pulse_count", r.metrics.pulses},
                    {"max_nutation_deg", r.metrics.max_nutation / kDeg},
                    {"max_att_err_deg", r.metrics.max_att_err / kDeg},
                    {"propellant_consumed_kg", r.metrics.propellant_consumed},
                    {"final_time_s", r.metrics.final_time}};
    std::ofstream os(dir / "summary.json", std::ios::binary);
    if (!os) throw IoError("cannot write " + (dir / "summary.json").string());
    os << j.dump(2) << '\n';
}

double max_trace_difference(const Trace& a, const Trace& b, std::string* worst) {
    double best = 0.0;
    if (a.rows() != b.rows() || a.columns().size() != b.columns().size()) {
        if (worst) *worst = "<shape>";
        return HUGE_VAL;
    }
    for (std::size_t c = 0; c < a.columns().size(); ++c) {
        const auto& x = a.column(c);
        const auto& y = b.column(c);
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (std::isnan(x[i]) && std::isnan(y[i])) continue;
            const double d = std::abs(x[i] - y[i]);
            if (!(d <= best)) {
                best = std::isnan(d) ? HUGE_VAL : d;
                if (worst) *worst = a.columns()[c].name;
            }
        }
    }
    return best;
}

EquivalenceResult run_equivalence(const Scenario& sc, std::optional<Scenario> fsw_sc) {
    EquivalenceResult out;
    out.in_process = run_in_process(sc);

    const Scenario peer_sc = fsw_sc ? *fsw_sc : sc;
    pil::TcpListener listener({"127.0.0.1", 0});
    const int port = listener.port();
    const pid_t pid = ::fork();
    if (pid < 0) throw LinkError("fork failed");
    if (pid == 0) {
        int code = 0;
        try {
            auto stream = pil::tcp_connect({"127.0.0.1", port}, 10.0);
            fsw::FlightSoftware fsw = make_flight_software(peer_sc);
            pil::serve_fsw(*stream, fsw, pil::session_info(peer_sc));
        } catch (const std::exception&) {
            code = 1;
        }
        ::_exit(code);
    }

    std::exception_ptr failure;
    try {
        auto stream = listener.accept(30.0);
        pil::StreamLink link(*stream, sc.pil.timeout);
        link.handshake(pil::session_info(sc));
        out.remote = drive(sc, sc.sim.seed, link);
    } catch (...) {
        failure = std::current_exception();
    }
    int status = 0;
    ::waitpid(pid, &status, 0);
    if (failure) std::rethrow_exception(failure);

    out.rows = out.in_process.trace.rows();
    out.max_abs_diff = max_trace_difference(out.in_process.trace, out.remote.trace, &out.worst_signal);
    return out;
}

}  // namespace upstage
