#pragma once

// Processor-in-the-loop link: a framed binary protocol over a byte stream,
// transports, and the lockstep scheduler with a pipeline delay.
//
// Wire frame (little-endian):
//   0  magic "USAC"      4
//   4  version = 1       1
//   5  msg_type          1   1 SENSOR, 2 ACTUATOR, 3 SYNC, 4 SHUTDOWN
//   6  flags             2
//   8  tick              8
//  16  payload_len       4   = 8 (n_values + 1)
//  20  payload           n_values binary64, then one 64-bit discrete field
//  20+len crc32          4   over header and payload

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "upstage/config.hpp"
#include "upstage/frames.hpp"

namespace upstage::pil {

inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 20;
inline constexpr std::size_t kCrcSize = 4;
inline constexpr std::uint32_t kMaxPayload = 1u << 20;

enum class MsgType : std::uint8_t { Sensor = 1, Actuator = 2, Sync = 3, Shutdown = 4 };

namespace msg_flags {
inline constexpr std::uint16_t kReject = 1;  // SYNC/SHUTDOWN: peer refused the session
}

struct WireMessage {
    MsgType type = MsgType::Sensor;
    std::uint16_t flags = 0;
    std::uint64_t tick = 0;
    std::vector<double> values;
    std::uint64_t discretes = 0;
};

/// CRC-32, IEEE polynomial, reflected.
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode(const WireMessage& msg);

/// Total frame size announced by a header. Validates magic and version.
/// Throws Truncated, MagicMismatch, VersionUnsupported, ProtocolViolation.
std::size_t frame_size(std::span<const std::uint8_t> header);

/// Decodes one frame from the front of bytes. Throws Truncated,
/// MagicMismatch, VersionUnsupported, CrcMismatch, ProtocolViolation.
WireMessage decode(std::span<const std::uint8_t> bytes, std::size_t* consumed = nullptr);

WireMessage to_wire(const fsw::SensorFrame& f);
WireMessage to_wire(const fsw::ActuatorFrame& f);
fsw::SensorFrame sensor_from_wire(const WireMessage& m);
fsw::ActuatorFrame actuator_from_wire(const WireMessage& m);

std::vector<std::uint8_t> encode_frame(const fsw::SensorFrame& f);
std::vector<std::uint8_t> encode_frame(const fsw::ActuatorFrame& f);

/// Session parameters both ends must agree on.
struct SessionInfo {
    double rate_hz = 10.0;
    unsigned delay = 0;
    unsigned n_thrusters = 0;
    unsigned n_devices = 0;
    std::uint32_t sequence_crc = 0;

    bool operator==(const SessionInfo&) const = default;
};

SessionInfo session_info(const Scenario& sc);
WireMessage to_wire(const SessionInfo& s);
SessionInfo session_from_wire(const WireMessage& m);

// ----------------------------------------------------------------- streams

/// Reliable, ordered byte stream.
class Stream {
public:
    virtual ~Stream() = default;
    virtual void write(std::span<const std::uint8_t> bytes) = 0;
    /// Reads exactly n bytes; throws Timeout after timeout_s (< 0: wait
    /// forever) or LinkError when the peer closed.
    virtual std::vector<std::uint8_t> read(std::size_t n, double timeout_s) = 0;
};

void send_message(Stream& s, const WireMessage& m);
WireMessage receive_message(Stream& s, double timeout_s);

class TcpStream final : public Stream {
public:
    explicit TcpStream(int fd);
    ~TcpStream() override;
    TcpStream(const TcpStream&) = delete;
    TcpStream& operator=(const TcpStream&) = delete;

    void write(std::span<const std::uint8_t> bytes) override;
    std::vector<std::uint8_t> read(std::size_t n, double timeout_s) override;
    /// Non-blocking check for readable data.
    bool readable(double timeout_s) const;
    void close();

private:
    int fd_;
};

struct Endpoint {
    std::string host = "127.0.0.1";
    int port = 0;
};

/// Parses "host:port". Throws ConfigInvalid.
Endpoint parse_endpoint(const std::string& text);

class TcpListener {
public:
    explicit TcpListener(const Endpoint& ep);
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    int port() const { return port_; }
    /// Throws Timeout.
    std::unique_ptr<TcpStream> accept(double timeout_s);
    int fd() const { return fd_; }

private:
    int fd_ = -1;
    int port_ = 0;
};

/// Throws LinkError when the connection is refused.
std::unique_ptr<TcpStream> tcp_connect(const Endpoint& ep, double timeout_s);

// -------------------------------------------------------------- FSW links

/// Plant-side view of the flight software: one SENSOR out, one ACTUATOR back.
class FswLink {
public:
    virtual ~FswLink() = default;
    /// Throws Timeout when the reply does not arrive in time.
    virtual fsw::ActuatorFrame exchange(const fsw::SensorFrame& frame) = 0;
    virtual void shutdown() {}
};

/// Runs the FSW in this process but still routes every frame through the
/// codec, so its inputs are the decoded bit patterns.
class InProcessLink final : public FswLink {
public:
    explicit InProcessLink(fsw::FlightSoftware& fsw) : fsw_(fsw) {}
    fsw::ActuatorFrame exchange(const fsw::SensorFrame& frame) override;

private:
    fsw::FlightSoftware& fsw_;
};

class StreamLink final : public FswLink {
public:
    StreamLink(Stream& stream, double timeout_s) : stream_(stream), timeout_(timeout_s) {}

    /// SYNC handshake. Throws ProtocolViolation when the peer disagrees.
    void handshake(const SessionInfo& info);
    fsw::ActuatorFrame exchange(const fsw::SensorFrame& frame) override;
    void shutdown() override;

private:
    Stream& stream_;
    double timeout_;
    bool abandoned_ = false;  // some earlier reply timed out and may still arrive
};

// --------------------------------------------------------------- lockstep

class Lockstep {
public:
    Lockstep(FswLink& link, unsigned delay, std::size_t n_thrusters, OnTimeout policy);

    struct Result {
        fsw::ActuatorFrame applied;
        bool timed_out = false;
    };

    /// Sends SENSOR(k) and returns the frame to apply at tick k: the reply
    /// to tick k - D, all-zero for k < D. Throws ProtocolViolation on a
    /// tick echo mismatch. Timeout and LinkError propagate under the abort
    /// policy and hold the last command otherwise.
    Result tick(const fsw::SensorFrame& frame);

private:
    FswLink& link_;
    unsigned delay_;
    std::size_t n_thrusters_;
    OnTimeout policy_;
    std::deque<fsw::ActuatorFrame> pipeline_;
    std::optional<fsw::ActuatorFrame> last_reply_;
};

/// FSW peer loop: answers SYNC, runs one FSW step per SENSOR, exits on
/// SHUTDOWN. A SYNC mismatch is answered with a rejecting SYNC and throws
/// ProtocolViolation. Returns the number of SENSOR frames served.
/// after_step runs once per served frame, after the reply was sent.
std::uint64_t serve_fsw(Stream& stream, fsw::FlightSoftware& fsw, const SessionInfo& expected,
                        const std::function<void(const fsw::SensorFrame&, const fsw::FlightSoftware&)>& after_step = {});

}  // namespace upstage::pil
