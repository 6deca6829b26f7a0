#include "upstage/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "toml.hpp"
#include "upstage/error.hpp"
#include "upstage/trace.hpp"

namespace upstage {

namespace {

std::string node_path(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

// A TOML table that remembers which keys were read, so leftovers can be
// rejected as unknown.
class Section {
public:
    Section(const toml::table* table, std::string prefix) : table_(table), prefix_(std::move(prefix)) {}

    bool present() const { return table_ != nullptr; }
    bool has(const std::string& key) const { return table_ && table_->contains(key); }
    std::string field(const std::string& key) const { return node_path(prefix_, key); }

    const toml::node* node(const std::string& key) {
        if (!table_) return nullptr;
        used_.insert(key);
        return table_->get(key);
    }

    double num(const std::string& key, double def) {
        const toml::node* n = node(key);
        if (!n) return def;
        if (auto v = n->value<double>()) return *v;
        throw ConfigInvalid(field(key));
    }
    double deg(const std::string& key, double def_rad) {
        return has(key) ? num(key, 0.0) * kDeg : (node(key), def_rad);
    }
    std::int64_t integer(const std::string& key, std::int64_t def) {
        const toml::node* n = node(key);
        if (!n) return def;
        if (auto v = n->value_exact<std::int64_t>()) return *v;
        throw ConfigInvalid(field(key));
    }
    std::uint64_t count(const std::string& key, std::uint64_t def) {
        const std::int64_t v = integer(key, static_cast<std::int64_t>(def));
        if (v < 0) throw ConfigInvalid(field(key));
        return static_cast<std::uint64_t>(v);
    }
    bool flag(const std::string& key, bool def) {
        const toml::node* n = node(key);
        if (!n) return def;
        if (auto v = n->value_exact<bool>()) return *v;
        throw ConfigInvalid(field(key));
    }
    std::string str(const std::string& key, const std::string& def) {
        const toml::node* n = node(key);
        if (!n) return def;
        if (auto v = n->value_exact<std::string>()) return *v;
        throw ConfigInvalid(field(key));
    }
    std::vector<double> list(const std::string& key, std::size_t n_expected) {
        const toml::node* n = node(key);
        const toml::array* a = n ? n->as_array() : nullptr;
        if (!a || a->size() != n_expected) throw ConfigInvalid(field(key));
        std::vector<double> out;
        for (const auto& el : *a) {
            auto v = el.value<double>();
            if (!v) throw ConfigInvalid(field(key));
            out.push_back(*v);
        }
        return out;
    }
    Vec3 vec3(const std::string& key, const Vec3& def, double scale = 1.0) {
        if (!has(key)) return (node(key), def);
        const auto v = list(key, 3);
        return Vec3(v[0], v[1], v[2]) * scale;
    }
    Eigen::Vector2d vec2(const std::string& key, const Eigen::Vector2d& def) {
        if (!has(key)) return (node(key), def);
        const auto v = list(key, 2);
        return {v[0], v[1]};
    }
    Mat3 mat3(const std::string& key, const Mat3& def) {
        const toml::node* n = node(key);
        if (!n) return def;
        const toml::array* a = n->as_array();
        if (!a) throw ConfigInvalid(field(key));
        Mat3 m;
        if (a->size() == 3 && (*a)[0].is_number()) {  // diagonal
            for (int i = 0; i < 3; ++i) {
                auto v = (*a)[i].value<double>();
                if (!v) throw ConfigInvalid(field(key));
                m.row(i).setZero();
                m(i, i) = *v;
            }
            return m;
        }
        if (a->size() != 3) throw ConfigInvalid(field(key));
        for (int i = 0; i < 3; ++i) {
            const toml::array* r = (*a)[i].as_array();
            if (!r || r->size() != 3) throw ConfigInvalid(field(key));
            for (int j = 0; j < 3; ++j) {
                auto v = (*r)[j].value<double>();
                if (!v) throw ConfigInvalid(field(key));
                m(i, j) = *v;
            }
        }
        return m;
    }
    Section sub(const std::string& key) {
        const toml::node* n = node(key);
        if (!n) return {nullptr, field(key)};
        const toml::table* t = n->as_table();
        if (!t) throw ConfigInvalid(field(key));
        return {t, field(key)};
    }
    std::vector<Section> tables(const std::string& key) {
        std::vector<Section> out;
        const toml::node* n = node(key);
        if (!n) return out;
        const toml::array* a = n->as_array();
        if (!a) throw ConfigInvalid(field(key));
        for (std::size_t i = 0; i < a->size(); ++i) {
            const toml::table* t = (*a)[i].as_table();
            if (!t) throw ConfigInvalid(field(key));
            out.emplace_back(t, field(key) + "[" + std::to_string(i) + "]");
        }
        return out;
    }
    std::vector<std::string> strings(const std::string& key) {
        std::vector<std::string> out;
        const toml::node* n = node(key);
        if (!n) return out;
        const toml::array* a = n->as_array();
        if (!a) throw ConfigInvalid(field(key));
        for (const auto& el : *a) {
            auto v = el.value_exact<std::string>();
            if (!v) throw ConfigInvalid(field(key));
            out.push_back(*v);
        }
        return out;
    }

    void finish() const {
        if (!table_) return;
        for (const auto& [k, v] : *table_) {
            const std::string key(k.str());
            if (!used_.count(key)) throw ConfigInvalid(field(key));
        }
    }

private:
    const toml::table* table_;
    std::string prefix_;
    std::set<std::string> used_;
};

seq::Comparator parse_comparator(const std::string& s, const std::string& field) {
    if (s == "<") return seq::Comparator::Less;
    if (s == ">") return seq::Comparator::Greater;
    if (s == "<=") return seq::Comparator::LessEqual;
    if (s == ">=") return seq::Comparator::GreaterEqual;
    throw ConfigInvalid(field);
}

actuation::FaultKind parse_thruster_fault(Section& s) {
    const std::string kind = s.str("kind", "");
    if (kind == "None") return actuation::NoFault{};
    if (kind == "StuckClosed") return actuation::StuckClosed{};
    if (kind == "StuckOpen") return actuation::StuckOpen{};
    if (kind == "Leak") return actuation::Leak{s.num("mdot", 0.0), s.num("thrust_fraction", 0.0)};
    if (kind == "Degraded") return actuation::Degraded{s.num("eta", 1.0)};
    if (kind == "ExtraDelay") return actuation::ExtraDelay{s.num("seconds", 0.0)};
    throw ConfigInvalid(s.field("kind"));
}

separation::DeviceFault parse_device_fault(Section& s) {
    const std::string kind = s.str("kind", "");
    if (kind == "None") return separation::NoFault{};
    if (kind == "NoFire") return separation::NoFire{};
    if (kind == "LateFire") return separation::LateFire{s.num("seconds", 0.0)};
    if (kind == "PartialSpring") return separation::PartialSpring{s.num("fraction", 1.0)};
    throw ConfigInvalid(s.field("kind"));
}

void read_vehicle(Section s, Scenario& sc) {
    auto& p = sc.plant;
    p.m_dry = s.num("m_dry", 0.0);
    p.J_dry = s.mat3("J_dry", Mat3::Identity());
    if (s.has("q0")) {
        const auto q = s.list("q0", 4);
        p.q0 = Quat(q[0], q[1], q[2], q[3]);
        if (!(p.q0.norm() > 0.0)) throw ConfigInvalid("vehicle.q0");
    } else {
        s.node("q0");
    }
    p.w0 = s.vec3("spin_rate_deg", Vec3::Zero(), kDeg);
    p.params.w_max = s.num("w_max_deg", 10.0 / kDeg) * kDeg;
    p.params.dt_max = s.num("dt_max", 0.1);
    s.finish();
}

void read_slosh(Section s, Scenario& sc) {
    auto& p = sc.plant;
    const std::string model = s.str("model", "pendulum");
    if (model == "pendulum") p.params.slosh_model = plant::SloshModel::Pendulum;
    else if (model == "constant_torque") p.params.slosh_model = plant::SloshModel::ConstantTorque;
    else if (model == "none") p.params.slosh_model = plant::SloshModel::None;
    else throw ConfigInvalid("slosh.model");
    p.params.fill_coefficient = s.num("fill_coefficient", 0.4);
    p.params.slosh_torque = s.vec3("torque", Vec3::Zero());
    p.params.rate_floor = s.num("rate_floor_deg", 1e-6 / kDeg) * kDeg;
    p.R_t = s.num("R_t", 1.0);
    p.z_b = s.num("z_b", 0.0);
    p.zeta = s.num("zeta", 0.1);
    p.phi0 = s.num("phi0_deg", 0.0) * kDeg;
    s.finish();
}

void read_tank(Section s, Scenario& sc) {
    auto& p = sc.plant;
    p.m_prop = s.num("m_prop", 0.0);
    p.T0 = s.num("T", 290.0);
    p.m_gas = s.num("m_gas", 0.0);
    p.R_gas = s.num("R_gas", 2077.0);
    p.V_tank = s.num("V_tank", 1.0);
    p.rho_prop = s.num("rho_prop", 1000.0);
    p.k_sun = s.num("k_sun", 0.0);
    p.k_cond = s.num("k_cond", 0.0);
    p.T_env = s.num("T_env", 290.0);
    p.s_hat = s.vec3("sun_dir", Vec3::UnitX());
    p.n_hat = s.vec3("normal", Vec3::UnitX());
    s.finish();
}

actuation::Thruster read_thruster(Section s) {
    actuation::Thruster t;
    t.id = s.str("id", "");
    t.r = s.vec3("r", Vec3::Zero());
    t.d_hat = s.vec3("d", Vec3::UnitZ());
    if (t.d_hat.norm() > 0.0) t.d_hat.normalize();
    t.F_ref = s.num("F_ref", 1.0);
    t.p_ref = s.num("p_ref", 1.0);
    t.mib = s.num("mib", 0.02);
    t.t_delay = s.num("t_delay", 0.0);
    t.t_ramp = s.num("t_ramp", 0.0);
    t.isp = s.num("isp", 70.0);
    s.finish();
    return t;
}

void read_engine(Section s, Scenario& sc) {
    auto& e = sc.engine;
    e.F_max = s.num("F_max", 0.0);
    e.t_rampup = s.num("t_rampup", 1.0);
    e.axis = s.vec3("axis", Vec3::UnitZ());
    e.offset = s.vec3("offset", Vec3::Zero());
    e.isp = s.num("isp", 450.0);
    if (!(e.F_max >= 0.0)) throw ConfigInvalid("engine.F_max");
    if (!(e.t_rampup > 0.0)) throw ConfigInvalid("engine.t_rampup");
    if (!(e.axis.norm() > 0.0)) throw ConfigInvalid("engine.axis");
    s.finish();
}

separation::SeparationDevice read_device(Section s) {
    separation::SeparationDevice d;
    d.payload_id = s.str("id", "");
    d.m_pl = s.num("mass", 0.0);
    d.J_pl = s.mat3("inertia", Mat3::Zero());
    d.k_spring = s.num("k_spring", 0.0);
    d.stroke = s.num("stroke", 0.0);
    d.lateral_offset = s.vec2("lateral_offset", Eigen::Vector2d::Zero());
    d.delay_arm = s.num("delay_arm", 0.0);
    d.delay_release = s.num("delay_release", 0.0);
    d.axis = s.vec3("axis", Vec3::UnitZ());
    s.finish();
    return d;
}

void read_fsw(Section s, Scenario& sc) {
    auto& f = sc.fsw;
    const double rate = s.num("rate_hz", 10.0);
    if (!(rate > 0.0)) throw ConfigInvalid("fsw.rate_hz");
    f.dt = 1.0 / rate;
    f.nav.dt = f.dt;
    f.nav.tau = s.num("nav_tau", 0.5);
    if (!(f.nav.tau > 0.0)) throw ConfigInvalid("fsw.nav_tau");

    auto& pp = f.phase_plane;
    pp.k_d = s.num("k_d", 1.0);
    pp.outer = s.num("outer_deadband_deg", 0.03) * kDeg;
    pp.inner = s.num("inner_deadband_deg", 0.01) * kDeg;
    pp.k_t = s.num("k_t", 30.0);
    pp.period = f.dt;
    if (!(pp.inner > 0.0 && pp.outer > pp.inner)) throw ConfigInvalid("fsw.inner_deadband_deg");
    if (!(pp.k_t > 0.0)) throw ConfigInvalid("fsw.k_t");

    f.horizon = static_cast<int>(s.integer("mpc_horizon", 6));
    if (f.horizon < 1 || f.horizon > fsw::kMaxHorizon) throw ConfigInvalid("fsw.mpc_horizon");
    f.mpc.w_count = s.num("w_count", 1.0);
    f.mpc.w_term = s.num("w_term", 1e8);
    f.mpc.terminal_box = s.num("terminal_box_deg", 0.01) * kDeg;
    if (!(f.mpc.w_count >= 0.0 && f.mpc.w_term > 0.0)) throw ConfigInvalid("fsw.w_term");

    f.rls.lambda = s.num("rls_lambda", 1.0);
    f.rls.p0 = s.num("rls_p0", 1e4);
    f.rls.cond_limit = s.num("rls_cond_limit", 1e12);
    if (!(f.rls.lambda > 0.0 && f.rls.lambda <= 1.0)) throw ConfigInvalid("fsw.rls_lambda");
    if (!(f.rls.p0 > 0.0)) throw ConfigInvalid("fsw.rls_p0");

    f.J_nominal = s.mat3("J_nominal", Mat3::Zero());
    const std::string mode = s.str("controller_override", "");
    if (!mode.empty()) {
        const auto m = seq::parse_mode(mode);
        if (!m) throw ConfigInvalid("fsw.controller_override");
        f.mode_override = *m;
    }
    f.depletion_tau = s.num("depletion_tau", 2.0);
    if (!(f.depletion_tau > 0.0)) throw ConfigInvalid("fsw.depletion_tau");
    f.attitude_hold = s.flag("attitude_hold", false);
    s.finish();
}

void read_sim(Section s, Scenario& sc) {
    sc.sim.dt = s.num("dt", 0.01);
    sc.sim.duration = s.num("duration", 600.0);
    sc.sim.seed = s.count("seed", 1);
    sc.sim.settle_time = s.num("settle_time", 60.0);
    if (!(sc.sim.dt > 0.0)) throw ConfigInvalid("sim.dt");
    if (!(sc.sim.duration >= 0.0)) throw ConfigInvalid("sim.duration");
    s.finish();
}

void read_sensor(Section s, Scenario& sc) {
    sc.sensor.gyro_bias = s.num("gyro_bias_deg", 0.0) * kDeg;
    sc.sensor.gyro_noise = s.num("gyro_noise_deg", 0.0) * kDeg;
    if (!(sc.sensor.gyro_bias >= 0.0)) throw ConfigInvalid("sensor.gyro_bias_deg");
    if (!(sc.sensor.gyro_noise >= 0.0)) throw ConfigInvalid("sensor.gyro_noise_deg");
    s.finish();
}

void read_pil(Section s, Scenario& sc) {
    const std::string tr = s.str("transport", "in_process");
    if (tr == "in_process") sc.pil.transport = Transport::InProcess;
    else if (tr == "socket") sc.pil.transport = Transport::Socket;
    else throw ConfigInvalid("pil.transport");
    const std::int64_t d = s.integer("delay", 0);
    if (d < 0 || d > 1000) throw ConfigInvalid("pil.delay");
    sc.pil.delay = static_cast<unsigned>(d);
    sc.pil.timeout = s.num("timeout", 5.0);
    if (!(sc.pil.timeout > 0.0)) throw ConfigInvalid("pil.timeout");
    const std::string ot = s.str("on_timeout", "hold_last_command");
    if (ot == "hold_last_command") sc.pil.on_timeout = OnTimeout::HoldLastCommand;
    else if (ot == "abort") sc.pil.on_timeout = OnTimeout::Abort;
    else throw ConfigInvalid("pil.on_timeout");
    sc.pil.listen = s.str("listen", "127.0.0.1:0");
    s.finish();
}

void read_telemetry(Section s, Scenario& sc) {
    const std::int64_t d = s.integer("decimation", 1);
    const std::int64_t sd = s.integer("stream_decimation", 1);
    if (d < 1) throw ConfigInvalid("telemetry.decimation");
    if (sd < 1) throw ConfigInvalid("telemetry.stream_decimation");
    sc.telemetry.decimation = static_cast<unsigned>(d);
    sc.telemetry.stream_decimation = static_cast<unsigned>(sd);
    sc.telemetry.listen = s.str("listen", "127.0.0.1:0");
    s.finish();
}

vnv::Monitor read_monitor(Section s, const std::vector<TraceColumn>& columns) {
    vnv::Monitor m;
    m.id = s.str("id", "");
    if (m.id.empty()) throw ConfigInvalid(s.field("id"));
    m.enabled = s.flag("enabled", true);
    m.requirements = s.strings("requirements");
    m.t_start = s.num("t_start", 0.0);
    const std::string signal = s.str("signal", "");
    const TraceColumn* col = nullptr;
    for (const auto& c : columns)
        if (c.name == signal) col = &c;
    if (!col) throw UnknownSignal(signal + " in " + s.field("signal"));
    // Angular limits are degrees in the file like all other angles.
    const double scale = col->angular() ? kDeg : 1.0;

    const std::string kind = s.str("kind", "threshold");
    if (kind == "threshold") {
        vnv::ThresholdMonitor t;
        t.signal = signal;
        t.cmp = parse_comparator(s.str("cmp", ">"), s.field("cmp"));
        t.limit = s.num("limit", 0.0) * scale;
        t.persistence = s.num("persistence", 0.0);
        if (!(t.persistence >= 0.0)) throw ConfigInvalid(s.field("persistence"));
        m.kind = t;
    } else if (kind == "stats") {
        vnv::StatsMonitor st;
        st.signal = signal;
        st.window = s.num("window", 10.0);
        if (!(st.window > 0.0)) throw ConfigInvalid(s.field("window"));
        if (s.has("max_limit")) st.max_limit = s.num("max_limit", 0.0) * scale;
        else s.node("max_limit");
        if (s.has("mean_limit")) st.mean_limit = s.num("mean_limit", 0.0) * scale;
        else s.node("mean_limit");
        if (s.has("rms_limit")) st.rms_limit = s.num("rms_limit", 0.0) * scale;
        else s.node("rms_limit");
        m.kind = st;
    } else {
        throw ConfigInvalid(s.field("kind"));
    }
    s.finish();
    return m;
}

void read_campaign(Section s, Scenario& sc) {
    auto& c = sc.campaign;
    c.kind = s.str("kind", "mc");
    if (c.kind != "mc" && c.kind != "ce") throw ConfigInvalid("campaign.kind");
    c.n = static_cast<int>(s.integer("n", 10));
    if (c.n < 1) throw ConfigInvalid("campaign.n");
    c.master_seed = s.count("master_seed", 1);
    c.objective = s.str("objective", "max_nutation");
    c.threads = static_cast<unsigned>(s.count("threads", 0));
    if (s.has("duration")) c.duration = s.num("duration", 0.0);
    else s.node("duration");
    for (auto& p : s.tables("param")) {
        vnv::ParamDef d;
        d.name = p.str("name", "");
        d.path = p.str("path", "");
        d.lower = p.num("lower", 0.0);
        d.upper = p.num("upper", 1.0);
        const std::string dist = p.str("dist", "uniform");
        if (dist == "uniform") d.dist = vnv::Distribution::Uniform;
        else if (dist == "gaussian") d.dist = vnv::Distribution::Gaussian;
        else throw ConfigInvalid(p.field("dist"));
        d.mu = p.num("mu", 0.5 * (d.lower + d.upper));
        d.sigma = p.num("sigma", (d.upper - d.lower) / 4.0);
        if (d.name.empty()) d.name = d.path;
        if (d.path.empty()) throw ConfigInvalid(p.field("path"));
        if (!(d.lower < d.upper)) throw ConfigInvalid(p.field("upper"));
        if (!(d.sigma > 0.0)) throw ConfigInvalid(p.field("sigma"));
        p.finish();
        c.params.push_back(d);
    }
    Section ce = s.sub("ce");
    c.ce.population = static_cast<int>(ce.integer("population", 50));
    c.ce.elite_fraction = ce.num("elite_fraction", 0.1);
    c.ce.alpha = ce.num("alpha", 0.7);
    c.ce.max_iterations = static_cast<int>(ce.integer("max_iterations", 30));
    c.ce.sigma_min = ce.num("sigma_min", 1e-3);
    if (c.ce.population * c.ce.elite_fraction < 2.0) throw ConfigInvalid("campaign.ce.elite_fraction");
    if (!(c.ce.alpha > 0.0 && c.ce.alpha <= 1.0)) throw ConfigInvalid("campaign.ce.alpha");
    if (c.ce.max_iterations < 1) throw ConfigInvalid("campaign.ce.max_iterations");
    ce.finish();
    s.finish();
}

struct PathSegment {
    std::string key;
    std::optional<std::size_t> index;
};

std::vector<PathSegment> split_path(const std::string& path) {
    std::vector<PathSegment> out;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '.')) {
        PathSegment seg;
        const auto lb = part.find('[');
        if (lb != std::string::npos) {
            const auto rb = part.find(']', lb);
            if (rb == std::string::npos || rb != part.size() - 1) throw ConfigInvalid(path);
            try {
                seg.index = std::stoul(part.substr(lb + 1, rb - lb - 1));
            } catch (const std::exception&) {
                throw ConfigInvalid(path);
            }
            seg.key = part.substr(0, lb);
        } else {
            seg.key = part;
        }
        if (seg.key.empty()) throw ConfigInvalid(path);
        out.push_back(seg);
    }
    if (out.empty()) throw ConfigInvalid(path);
    return out;
}

void apply_override(toml::table& root, const std::string& path, const std::string& value) {
    const auto segs = split_path(path);
    toml::table* t = &root;
    for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
        toml::node* n = t->get(segs[i].key);
        if (!n) {
            if (segs[i].index) throw ConfigInvalid(path);
            t->insert(segs[i].key, toml::table{});
            n = t->get(segs[i].key);
        }
        if (segs[i].index) {
            toml::array* a = n->as_array();
            if (!a || *segs[i].index >= a->size()) throw ConfigInvalid(path);
            n = a->get(*segs[i].index);
        }
        t = n->as_table();
        if (!t) throw ConfigInvalid(path);
    }
    toml::table parsed;
    try {
        parsed = toml::parse("v = " + value);
    } catch (const toml::parse_error&) {
        parsed = toml::table{};
        parsed.insert("v", value);
    }
    if (segs.back().index) {
        toml::node* n = t->get(segs.back().key);
        toml::array* a = n ? n->as_array() : nullptr;
        if (!a || *segs.back().index >= a->size()) throw ConfigInvalid(path);
        a->replace(a->begin() + static_cast<std::ptrdiff_t>(*segs.back().index), *parsed.get("v"));
        return;
    }
    t->insert_or_assign(segs.back().key, *parsed.get("v"));
}

Scenario build_scenario(const toml::table& root, const std::filesystem::path& base_dir) {
    Scenario sc;
    sc.base_dir = base_dir;
    Section top(&root, "");

    read_sim(top.sub("sim"), sc);
    read_sensor(top.sub("sensor"), sc);
    read_vehicle(top.sub("vehicle"), sc);
    read_slosh(top.sub("slosh"), sc);
    read_tank(top.sub("tank"), sc);
    read_engine(top.sub("engine"), sc);

    for (auto& s : top.tables("thruster")) sc.thrusters.push_back(read_thruster(std::move(s)));
    for (std::size_t i = 0; i < sc.thrusters.size(); ++i) {
        const std::string field = "thruster[" + std::to_string(i) + "]";
        actuation::validate_thruster(sc.thrusters[i], field);
        for (std::size_t j = 0; j < i; ++j)
            if (sc.thrusters[j].id == sc.thrusters[i].id) throw ConfigInvalid(field + ".id");
    }

    for (auto& s : top.tables("separation")) sc.devices.push_back(read_device(std::move(s)));
    if (sc.devices.size() > fsw::kMaxDevices) throw ConfigInvalid("separation");
    for (std::size_t i = 0; i < sc.devices.size(); ++i) {
        const std::string field = "separation[" + std::to_string(i) + "]";
        separation::validate_device(sc.devices[i], field);
        for (std::size_t j = 0; j < i; ++j)
            if (sc.devices[j].payload_id == sc.devices[i].payload_id) throw ConfigInvalid(field + ".id");
    }

    for (auto& s : top.tables("fault")) {
        FaultEntry f;
        f.thruster = s.str("thruster", "");
        f.device = s.str("device", "");
        const double onset = s.num("t_onset", 0.0);
        if (f.thruster.empty() == f.device.empty()) throw ConfigInvalid(s.field("thruster"));
        if (!f.thruster.empty()) {
            f.thruster_fault = {parse_thruster_fault(s), onset};
            actuation::Thruster* target = nullptr;
            for (auto& t : sc.thrusters)
                if (t.id == f.thruster) target = &t;
            if (!target) throw UnknownThrusterId(f.thruster);
            actuation::validate_fault(f.thruster_fault, s.field("kind"));
            target->fault = f.thruster_fault;
        } else {
            f.device_fault = parse_device_fault(s);
            separation::SeparationDevice* target = nullptr;
            for (auto& d : sc.devices)
                if (d.payload_id == f.device) target = &d;
            if (!target) throw UnknownDevice(f.device);
            target->fault = f.device_fault;
            separation::validate_device(*target, s.field("device"));
        }
        s.finish();
        sc.faults.push_back(f);
    }

    Section fsw_sec = top.sub("fsw");
    read_fsw(std::move(fsw_sec), sc);

    Section seq_sec = top.sub("sequence");
    sc.sequence_path = seq_sec.str("path", "");
    sc.sequence_text = seq_sec.str("text", "");
    seq_sec.finish();
    if (!sc.sequence_path.empty() && sc.sequence_text.empty()) {
        const std::filesystem::path p = base_dir / sc.sequence_path;
        sc.sequence_text = read_text_file(p);
    }

    read_pil(top.sub("pil"), sc);
    read_telemetry(top.sub("telemetry"), sc);
    const auto columns = trace_columns(sc.device_ids());
    for (auto& m : top.tables("monitors")) sc.monitors.push_back(read_monitor(std::move(m), columns));
    for (std::size_t i = 0; i < sc.monitors.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (sc.monitors[i].id == sc.monitors[j].id) throw DuplicateId(sc.monitors[i].id);
    read_campaign(top.sub("campaign"), sc);
    top.finish();

    // Stage plant payloads from the separation devices.
    for (const auto& d : sc.devices) sc.plant.payloads.push_back({d.payload_id, d.m_pl, d.J_pl});
    sc.plant.params.dt_max = std::max(sc.plant.params.dt_max, sc.sim.dt);
    (void)plant::make_initial_state(sc.plant);

    if (sc.fsw.J_nominal.isZero(0.0)) sc.fsw.J_nominal = plant::effective_inertia(plant::make_initial_state(sc.plant));
    if (!is_spd(sc.fsw.J_nominal)) throw ConfigInvalid("fsw.J_nominal");
    sc.fsw.delay_ticks = sc.pil.delay;
    if (!(sc.sim.dt <= sc.fsw.dt)) throw ConfigInvalid("sim.dt");
    const double ratio = sc.fsw.dt / sc.sim.dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9) throw ConfigInvalid("sim.dt");
    for (const auto& t : sc.thrusters)
        if (t.mib > sc.fsw.dt) throw ConfigInvalid("thruster.mib");
    sc.fsw.phase_plane.mib = 0.0;
    for (const auto& t : sc.thrusters) sc.fsw.phase_plane.mib = std::max(sc.fsw.phase_plane.mib, t.mib);

    if (!sc.sequence_text.empty()) (void)sc.parse_program();
    return sc;
}

}  // namespace

std::vector<std::string> Scenario::device_ids() const {
    std::vector<std::string> ids;
    for (const auto& d : devices) ids.push_back(d.payload_id);
    return ids;
}

std::vector<fsw::ThrusterGeometry> Scenario::thruster_geometry() const {
    std::vector<fsw::ThrusterGeometry> g;
    for (const auto& t : thrusters) g.push_back({t.r, t.d_hat, t.F_ref, t.p_ref, t.mib});
    return g;
}

seq::SequenceProgram Scenario::parse_program() const {
    seq::ParseContext ctx{seq::telemetry_dictionary(device_ids()), device_ids()};
    if (sequence_text.empty()) return seq::parse_sequence("sequence IDLE { state IDLE { } }", ctx);
    return seq::parse_sequence(sequence_text, ctx);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ScenarioSource::ScenarioSource(std::string text, std::filesystem::path base_dir)
    : text_(std::move(text)), base_dir_(std::move(base_dir)) {}

ScenarioSource ScenarioSource::from_file(const std::filesystem::path& path) {
    return {read_text_file(path), path.parent_path()};
}

void ScenarioSource::set(const std::string& key, const std::string& value) { overrides_.emplace_back(key, value); }

void ScenarioSource::set(const std::string& key, double value) { overrides_.emplace_back(key, format_double(value)); }

void ScenarioSource::set_assignment(const std::string& a) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigInvalid(a);
    overrides_.emplace_back(a.substr(0, eq), a.substr(eq + 1));
}

Scenario ScenarioSource::build() const {
    toml::table root;
    try {
        root = toml::parse(text_);
    } catch (const toml::parse_error& e) {
        const auto& src = e.source();
        throw ConfigInvalid("line " + std::to_string(src.begin.line) + ": " + std::string(e.description()));
    }
    for (const auto& [k, v] : overrides_) apply_override(root, k, v);
    return build_scenario(root, base_dir_);
}

Scenario load_scenario(const std::filesystem::path& path) { return ScenarioSource::from_file(path).build(); }

CampaignFile load_campaign_file(const std::filesystem::path& path) {
    toml::table root;
    try {
        root = toml::parse(read_text_file(path));
    } catch (const toml::parse_error& e) {
        throw ConfigInvalid("line " + std::to_string(e.source().begin.line) + ": " + std::string(e.description()));
    }
    CampaignFile out;
    if (const auto* s = root.get("scenario")) {
        const auto v = s->value<std::string>();
        if (!v) throw ConfigInvalid("scenario");
        out.scenario = path.parent_path() / *v;
    }
    Scenario holder;
    Section top(&root, "");
    read_campaign(top.sub("campaign"), holder);
    out.campaign = holder.campaign;
    return out;
}

}  // namespace upstage
