#pragma once

// Telemetry/command service hosted by `serve`: line-delimited JSON over TCP.
// Telemetry is broadcast to every client; commands are queued and applied
// by the simulation thread at tick boundaries. Schema in
// docs/telemetry_protocol.md.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "upstage/pil.hpp"
#include "upstage/sim.hpp"

namespace upstage::service {

/// Parsed operator command.
struct Command {
    int client = -1;
    std::string id;
    std::string line;  // raw JSON text
};

/// Outcome of applying one command line to the plant.
struct Reply {
    bool ok = false;
    std::string reason;
};

/// Applies one JSON command to the plant at the current tick boundary.
/// Pause and resume toggle paused. Pure with respect to the server, so
/// it is testable without sockets.
Reply apply_command(const std::string& line, sim::PlantSide& plant, bool& paused);

/// One telemetry record (without trailing newline). Includes the events
/// logged since index *event_cursor and advances it.
std::string telemetry_record(const sim::PlantSide& plant, std::size_t* event_cursor);

std::string ack_record(const std::string& id, std::uint64_t applied_tick);
std::string reject_record(const std::string& id, const std::string& reason);

class TelemetryServer {
public:
    explicit TelemetryServer(const pil::Endpoint& ep, unsigned stream_decimation = 1);
    ~TelemetryServer();
    TelemetryServer(const TelemetryServer&) = delete;
    TelemetryServer& operator=(const TelemetryServer&) = delete;

    int port() const { return listener_.port(); }
    std::size_t client_count() const;

    /// Simulation thread, before each tick: applies queued commands,
    /// blocks while paused (heartbeats keep flowing). Returns false once
    /// stop() was called.
    bool before_tick(sim::PlantSide& plant);
    /// Simulation thread, after each tick: publishes a record every
    /// stream_decimation ticks.
    void after_tick(sim::PlantSide& plant);
    /// Publishes a final record and an end-of-run marker.
    void finish(const sim::PlantSide* plant, const std::string& status);

    void stop();

private:
    struct Client {
        int fd = -1;
        std::string inbox;
        std::string outbox;
    };

    void io_loop();
    void broadcast(const std::string& line);
    void send_to(int client, const std::string& line);
    void wake();
    void drain_commands(sim::PlantSide& plant);

    pil::TcpListener listener_;
    unsigned decimation_;
    int wake_pipe_[2] = {-1, -1};

    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::map<int, Client> clients_;
    int next_client_ = 0;
    std::deque<Command> queue_;
    std::map<std::string, std::string> replies_;  // request id -> reply line
    std::atomic<bool> stopping_{false};
    bool paused_ = false;
    std::size_t event_cursor_ = 0;
    std::thread io_;
};

}  // namespace upstage::service
