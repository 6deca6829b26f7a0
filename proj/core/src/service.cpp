#include "upstage/service.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>

#include "json.hpp"
#include "upstage/error.hpp"
#include "upstage/math.hpp"

namespace upstage::service {

using nlohmann::json;

namespace {

double param(const json& p, const char* key, double fallback) {
    if (!p.contains(key)) return fallback;
    if (!p[key].is_number()) throw ConfigInvalid(std::string("params.") + key);
    return p[key].get<double>();
}

actuation::FaultKind fault_from_json(const std::string& kind, const json& p) {
    if (kind == "None") return actuation::NoFault{};
    if (kind == "StuckClosed") return actuation::StuckClosed{};
    if (kind == "StuckOpen") return actuation::StuckOpen{};
    if (kind == "Leak") return actuation::Leak{param(p, "mdot", 0.0), param(p, "thrust_fraction", 0.0)};
    if (kind == "Degraded") return actuation::Degraded{param(p, "eta", 1.0)};
    if (kind == "ExtraDelay") return actuation::ExtraDelay{param(p, "seconds", 0.0)};
    throw ConfigInvalid("kind");
}

std::string id_text(const json& j) {
    if (!j.contains("id")) return "";
    const auto& id = j["id"];
    return id.is_string() ? id.get<std::string>() : id.dump();
}

std::string require_string(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw ConfigInvalid(key);
    return j[key].get<std::string>();
}

}  // namespace

Reply apply_command(const std::string& line, sim::PlantSide& plant, bool& paused) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception&) {
        return {false, "ProtocolViolation: malformed JSON"};
    }
    if (!j.is_object()) return {false, "ProtocolViolation: command must be an object"};
    try {
        const std::string cmd = require_string(j, "cmd");
        const double t = plant.t();
        if (cmd == "pause") {
            paused = true;
            plant.events().add(t, "operator", "pause");
        } else if (cmd == "resume") {
            paused = false;
            plant.events().add(t, "operator", "resume");
        } else if (cmd == "sequence_goto") {
            const std::string name = require_string(j, "state");
            const auto& states = plant.program().states;
            std::size_t idx = states.size();
            for (std::size_t i = 0; i < states.size(); ++i)
                if (states[i].name == name) idx = i;
            if (idx == states.size()) throw UnknownState(name);
            plant.queue_goto(idx);
            plant.events().add(t, "operator", "sequence_goto " + name);
        } else if (cmd == "set_rate_target") {
            if (!j.contains("w_deg") || !j["w_deg"].is_array() || j["w_deg"].size() != 3) throw ConfigInvalid("w_deg");
            Vec3 w;
            for (int i = 0; i < 3; ++i) {
                if (!j["w_deg"][i].is_number()) throw ConfigInvalid("w_deg");
                w[i] = j["w_deg"][i].get<double>() * kDeg;
            }
            if (!w.allFinite()) throw ConfigInvalid("w_deg");
            plant.queue_rate(w);
            plant.events().add(t, "operator", "set_rate_target " + j["w_deg"].dump());
        } else if (cmd == "inject_fault") {
            const std::string thr = require_string(j, "thruster");
            const std::string kind = require_string(j, "kind");
            const json params = j.value("params", json::object());
            const auto fk = fault_from_json(kind, params);
            actuation::validate_fault({fk, t}, "params");
            if (!plant.inject_fault(thr, fk)) throw UnknownThrusterId(thr);
            plant.events().add(t, "operator", "inject_fault " + thr + " " + kind);
        } else {
            throw ConfigInvalid("cmd " + cmd);
        }
    } catch (const Error& e) {
        return {false, e.what()};
    }
    return {true, ""};
}

std::string telemetry_record(const sim::PlantSide& plant, std::size_t* cursor) {
    const auto& st = plant.state();
    json j;
    j["type"] = "telemetry";
    j["t"] = st.t;
    j["tick"] = plant.tick();
    j["w_deg"] = {st.w.x() / kDeg, st.w.y() / kDeg, st.w.z() / kDeg};
    const auto& tr = plant.trace();
    j["att_err_deg"] = tr.rows() ? tr.column("att_err").back() / kDeg : 0.0;
    j["p_tank"] = st.tank.p;
    j["m_prop"] = st.m_prop;
    const auto s = plant.current_state();
    const auto& states = plant.program().states;
    j["state"] = (s && *s < states.size()) ? states[*s].name : "";
    json flags = json::array();
    for (const auto& f : plant.active_flags()) flags.push_back(f);
    for (const auto& f : plant.active_faults()) flags.push_back("fault:" + f);
    j["flags"] = flags;
    json ev = json::array();
    const auto& all = plant.events().events();
    std::size_t from = cursor ? *cursor : 0;
    for (std::size_t i = from; i < all.size(); ++i)
        ev.push_back({{"t", all[i].t}, {"kind", all[i].kind}, {"detail", all[i].detail}});
    if (cursor) *cursor = all.size();
    j["events"] = ev;
    return j.dump();
}

std::string ack_record(const std::string& id, std::uint64_t tick) {
    return json{{"type", "ack"}, {"id", id}, {"applied_tick", tick}}.dump();
}

std::string reject_record(const std::string& id, const std::string& reason) {
    return json{{"type", "reject"}, {"id", id}, {"reason", reason}}.dump();
}

// ------------------------------------------------------------------ server

TelemetryServer::TelemetryServer(const pil::Endpoint& ep, unsigned decimation)
    : listener_(ep), decimation_(decimation == 0 ? 1 : decimation) {
    if (::pipe(wake_pipe_) != 0) throw IoError("pipe failed");
    ::fcntl(wake_pipe_[0], F_SETFL, O_NONBLOCK);
    ::fcntl(wake_pipe_[1], F_SETFL, O_NONBLOCK);
    io_ = std::thread([this] { io_loop(); });
}

TelemetryServer::~TelemetryServer() {
    stop();
    if (io_.joinable()) io_.join();
    for (auto& [_, c] : clients_) ::close(c.fd);
    ::close(wake_pipe_[0]);
    ::close(wake_pipe_[1]);
}

std::size_t TelemetryServer::client_count() const {
    std::lock_guard lock(mutex_);
    return clients_.size();
}

void TelemetryServer::stop() {
    stopping_ = true;
    cv_.notify_all();
    wake();
}

void TelemetryServer::wake() {
    const char b = 1;
    [[maybe_unused]] auto r = ::write(wake_pipe_[1], &b, 1);
}

void TelemetryServer::broadcast(const std::string& line) {
    {
        std::lock_guard lock(mutex_);
        for (auto& [_, c] : clients_) {
            // Slow subscribers lose records rather than stall the run.
            if (c.outbox.size() < (8u << 20)) c.outbox += line + '\n';
        }
    }
    wake();
}

void TelemetryServer::send_to(int client, const std::string& line) {
    {
        std::lock_guard lock(mutex_);
        auto it = clients_.find(client);
        if (it != clients_.end()) it->second.outbox += line + '\n';
    }
    wake();
}

void TelemetryServer::drain_commands(sim::PlantSide& plant) {
    std::deque<Command> batch;
    {
        std::lock_guard lock(mutex_);
        batch.swap(queue_);
    }
    for (const auto& c : batch) {
        std::string reply;
        {
            std::lock_guard lock(mutex_);
            auto it = c.id.empty() ? replies_.end() : replies_.find(c.id);
            if (it != replies_.end()) reply = it->second;
        }
        if (reply.empty()) {
            bool paused = paused_;
            const Reply r = apply_command(c.line, plant, paused);
            paused_ = paused;
            reply = r.ok ? ack_record(c.id, plant.tick()) : reject_record(c.id, r.reason);
            if (!c.id.empty()) {
                std::lock_guard lock(mutex_);
                replies_[c.id] = reply;
            }
        }
        send_to(c.client, reply);
    }
}

bool TelemetryServer::before_tick(sim::PlantSide& plant) {
    drain_commands(plant);
    auto last_beat = std::chrono::steady_clock::now();
    while (paused_ && !stopping_) {
        {
            std::unique_lock lock(mutex_);
            cv_.wait_for(lock, std::chrono::milliseconds(100), [this] { return !queue_.empty() || stopping_.load(); });
        }
        drain_commands(plant);
        const auto now = std::chrono::steady_clock::now();
        if (now - last_beat >= std::chrono::milliseconds(500)) {
            broadcast(json{{"type", "heartbeat"}, {"tick", plant.tick()}, {"paused", true}}.dump());
            last_beat = now;
        }
    }
    return !stopping_;
}

void TelemetryServer::after_tick(sim::PlantSide& plant) {
    if (plant.tick() % decimation_ == 0) broadcast(telemetry_record(plant, &event_cursor_));
}

void TelemetryServer::finish(const sim::PlantSide* plant, const std::string& status) {
    if (plant) broadcast(telemetry_record(*plant, &event_cursor_));
    broadcast(json{{"type", "end"}, {"status", status}}.dump());
    // Give the writer a moment to flush to connected clients.
    for (int i = 0; i < 50; ++i) {
        {
            std::lock_guard lock(mutex_);
            bool empty = true;
            for (auto& [_, c] : clients_) empty = empty && c.outbox.empty();
            if (empty) break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
}

void TelemetryServer::io_loop() {
    while (!stopping_) {
        std::vector<pollfd> fds;
        std::vector<int> ids;
        fds.push_back({wake_pipe_[0], POLLIN, 0});
        fds.push_back({listener_.fd(), POLLIN, 0});
        {
            std::lock_guard lock(mutex_);
            for (auto& [id, c] : clients_) {
                short ev = POLLIN;
                if (!c.outbox.empty()) ev |= POLLOUT;
                fds.push_back({c.fd, ev, 0});
                ids.push_back(id);
            }
        }
        if (::poll(fds.data(), fds.size(), 200) < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (fds[0].revents & POLLIN) {
            char buf[64];
            while (::read(wake_pipe_[0], buf, sizeof buf) > 0) {
            }
        }
        if (fds[1].revents & POLLIN) {
            const int fd = ::accept(listener_.fd(), nullptr, nullptr);
            if (fd >= 0) {
                ::fcntl(fd, F_SETFL, O_NONBLOCK);
                std::lock_guard lock(mutex_);
                clients_[next_client_++] = Client{fd, {}, {}};
            }
        }
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const auto& p = fds[k + 2];
            std::lock_guard lock(mutex_);
            auto it = clients_.find(ids[k]);
            if (it == clients_.end()) continue;
            Client& c = it->second;
            bool dead = (p.revents & (POLLERR | POLLNVAL)) != 0;
            if (!dead && (p.revents & (POLLIN | POLLHUP))) {
                char buf[4096];
                const ssize_t n = ::recv(c.fd, buf, sizeof buf, 0);
                if (n <= 0) {
                    dead = n == 0 || (errno != EAGAIN && errno != EWOULDBLOCK);
                } else {
                    c.inbox.append(buf, static_cast<std::size_t>(n));
                    std::size_t nl;
                    while ((nl = c.inbox.find('\n')) != std::string::npos) {
                        std::string line = c.inbox.substr(0, nl);
                        c.inbox.erase(0, nl + 1);
                        if (!line.empty() && line.back() == '\r') line.pop_back();
                        if (line.empty()) continue;
                        Command cmd{ids[k], "", line};
                        try {
                            cmd.id = id_text(json::parse(line));
                        } catch (const json::exception&) {
                        }
                        queue_.push_back(std::move(cmd));
                        cv_.notify_all();
                    }
                }
            }
            if (!dead && (p.revents & POLLOUT) && !c.outbox.empty()) {
                const ssize_t n = ::send(c.fd, c.outbox.data(), c.outbox.size(), MSG_NOSIGNAL);
                if (n > 0)
                    c.outbox.erase(0, static_cast<std::size_t>(n));
                else if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK)
                    dead = true;
            }
            if (dead) {
                ::close(c.fd);
                clients_.erase(it);
            }
        }
    }
}

}  // namespace upstage::service
