#include "upstage/pil.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>
#include <zlib.h>

#include <bit>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>

#include "upstage/error.hpp"
#include "upstage/flight_software.hpp"

namespace upstage::pil {

namespace {

constexpr std::uint8_t kMagic[4] = {'U', 'S', 'A', 'C'};
constexpr std::size_t kSensorValues = 14;

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
    for (int i = 0; i < 2; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
std::uint64_t get_le(const std::uint8_t* p, int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{p[i]} << (8 * i);
    return v;
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong c = ::crc32(0L, Z_NULL, 0);
    c = ::crc32(c, bytes.data(), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(c);
}

std::vector<std::uint8_t> encode(const WireMessage& m) {
    std::vector<std::uint8_t> b;
    const std::uint32_t len = static_cast<std::uint32_t>(8 * (m.values.size() + 1));
    if (len > kMaxPayload) throw ProtocolViolation("payload too large");
    b.reserve(kHeaderSize + len + kCrcSize);
    for (const std::uint8_t c : kMagic) b.push_back(c);
    b.push_back(kVersion);
    b.push_back(static_cast<std::uint8_t>(m.type));
    put_u16(b, m.flags);
    put_u64(b, m.tick);
    put_u32(b, len);
    for (double v : m.values) put_u64(b, std::bit_cast<std::uint64_t>(v));
    put_u64(b, m.discretes);
    put_u32(b, crc32(b));
    return b;
}

std::size_t frame_size(std::span<const std::uint8_t> h) {
    if (h.size() < kHeaderSize) throw Truncated("header needs 20 bytes, have " + std::to_string(h.size()));
    if (std::memcmp(h.data(), kMagic, 4) != 0) throw MagicMismatch("frame does not start with USAC");
    if (h[4] != kVersion) throw VersionUnsupported("version " + std::to_string(h[4]));
    const auto type = h[5];
    if (type < 1 || type > 4) throw ProtocolViolation("msg_type " + std::to_string(type));
    const auto len = static_cast<std::uint32_t>(get_le(h.data() + 16, 4));
    if (len < 8 || len % 8 != 0 || len > kMaxPayload) throw ProtocolViolation("payload_len " + std::to_string(len));
    return kHeaderSize + len + kCrcSize;
}

WireMessage decode(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
    const std::size_t total = frame_size(bytes);
    if (bytes.size() < total)
        throw Truncated("frame needs " + std::to_string(total) + " bytes, have " + std::to_string(bytes.size()));
    const std::uint32_t want = static_cast<std::uint32_t>(get_le(bytes.data() + total - kCrcSize, 4));
    const std::uint32_t got = crc32(bytes.subspan(0, total - kCrcSize));
    if (want != got) throw CrcMismatch("frame crc");

    WireMessage m;
    m.type = static_cast<MsgType>(bytes[5]);
    m.flags = static_cast<std::uint16_t>(get_le(bytes.data() + 6, 2));
    m.tick = get_le(bytes.data() + 8, 8);
    const std::size_t len = total - kHeaderSize - kCrcSize;
    const std::size_t n = len / 8 - 1;
    m.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) m.values[i] = std::bit_cast<double>(get_le(bytes.data() + kHeaderSize + 8 * i, 8));
    m.discretes = get_le(bytes.data() + kHeaderSize + 8 * n, 8);
    if (consumed) *consumed = total;
    return m;
}

WireMessage to_wire(const fsw::SensorFrame& f) {
    WireMessage m;
    m.type = MsgType::Sensor;
    m.tick = f.tick;
    m.values = {f.t,
                f.w_meas.x(), f.w_meas.y(), f.w_meas.z(),
                f.q_meas.w(), f.q_meas.x(), f.q_meas.y(), f.q_meas.z(),
                f.p_tank, f.m_prop_meas, f.op_goto,
                f.op_rate.x(), f.op_rate.y(), f.op_rate.z()};
    m.discretes = f.discretes;
    return m;
}

WireMessage to_wire(const fsw::ActuatorFrame& f) {
    WireMessage m;
    m.type = MsgType::Actuator;
    m.tick = f.tick;
    m.values = f.on_times;
    m.values.push_back(f.throttle);
    m.discretes = f.discretes;
    return m;
}

fsw::SensorFrame sensor_from_wire(const WireMessage& m) {
    if (m.type != MsgType::Sensor || m.values.size() != kSensorValues)
        throw ProtocolViolation("expected SENSOR frame");
    const auto& v = m.values;
    fsw::SensorFrame f;
    f.tick = m.tick;
    f.t = v[0];
    f.w_meas = Vec3(v[1], v[2], v[3]);
    f.q_meas = Quat(v[4], v[5], v[6], v[7]);
    f.p_tank = v[8];
    f.m_prop_meas = v[9];
    f.op_goto = v[10];
    f.op_rate = Vec3(v[11], v[12], v[13]);
    f.discretes = m.discretes;
    return f;
}

fsw::ActuatorFrame actuator_from_wire(const WireMessage& m) {
    if (m.type != MsgType::Actuator || m.values.empty()) throw ProtocolViolation("expected ACTUATOR frame");
    fsw::ActuatorFrame f;
    f.tick = m.tick;
    f.on_times.assign(m.values.begin(), m.values.end() - 1);
    f.throttle = m.values.back();
    f.discretes = m.discretes;
    return f;
}

std::vector<std::uint8_t> encode_frame(const fsw::SensorFrame& f) { return encode(to_wire(f)); }
std::vector<std::uint8_t> encode_frame(const fsw::ActuatorFrame& f) { return encode(to_wire(f)); }

SessionInfo session_info(const Scenario& sc) {
    SessionInfo s;
    s.rate_hz = 1.0 / sc.fsw.dt;
    s.delay = sc.pil.delay;
    s.n_thrusters = static_cast<unsigned>(sc.thrusters.size());
    s.n_devices = static_cast<unsigned>(sc.devices.size());
    const auto* p = reinterpret_cast<const std::uint8_t*>(sc.sequence_text.data());
    s.sequence_crc = crc32({p, sc.sequence_text.size()});
    return s;
}

WireMessage to_wire(const SessionInfo& s) {
    WireMessage m;
    m.type = MsgType::Sync;
    m.values = {s.rate_hz, static_cast<double>(s.delay), static_cast<double>(s.n_thrusters),
                static_cast<double>(s.n_devices), static_cast<double>(s.sequence_crc)};
    return m;
}

SessionInfo session_from_wire(const WireMessage& m) {
    if (m.type != MsgType::Sync || m.values.size() != 5) throw ProtocolViolation("expected SYNC frame");
    SessionInfo s;
    s.rate_hz = m.values[0];
    s.delay = static_cast<unsigned>(m.values[1]);
    s.n_thrusters = static_cast<unsigned>(m.values[2]);
    s.n_devices = static_cast<unsigned>(m.values[3]);
    s.sequence_crc = static_cast<std::uint32_t>(m.values[4]);
    return s;
}

// ----------------------------------------------------------------- streams

void send_message(Stream& s, const WireMessage& m) { s.write(encode(m)); }

WireMessage receive_message(Stream& s, double timeout_s) {
    std::vector<std::uint8_t> buf = s.read(kHeaderSize, timeout_s);
    const std::size_t total = frame_size(buf);
    const auto rest = s.read(total - kHeaderSize, timeout_s < 0.0 ? -1.0 : std::max(timeout_s, 1.0));
    buf.insert(buf.end(), rest.begin(), rest.end());
    return decode(buf);
}

TcpStream::TcpStream(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TcpStream::~TcpStream() { close(); }

void TcpStream::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void TcpStream::write(std::span<const std::uint8_t> bytes) {
    std::size_t off = 0;
    while (off < bytes.size()) {
        const ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw LinkError(std::string("send: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(n);
    }
}

bool TcpStream::readable(double timeout_s) const {
    pollfd p{fd_, POLLIN, 0};
    const int ms = timeout_s < 0.0 ? -1 : static_cast<int>(std::ceil(timeout_s * 1000.0));
    while (true) {
        const int r = ::poll(&p, 1, ms);
        if (r < 0 && errno == EINTR) continue;
        if (r < 0) throw LinkError(std::string("poll: ") + std::strerror(errno));
        return r > 0;
    }
}

std::vector<std::uint8_t> TcpStream::read(std::size_t n, double timeout_s) {
    std::vector<std::uint8_t> out(n);
    std::size_t off = 0;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(std::max(timeout_s, 0.0));
    while (off < n) {
        double wait = -1.0;
        if (timeout_s >= 0.0) {
            wait = std::chrono::duration<double>(deadline - std::chrono::steady_clock::now()).count();
            if (wait <= 0.0) throw Timeout("no data within " + std::to_string(timeout_s) + " s");
        }
        if (!readable(wait)) throw Timeout("no data within " + std::to_string(timeout_s) + " s");
        const ssize_t r = ::recv(fd_, out.data() + off, n - off, 0);
        if (r == 0) throw LinkError("peer closed the connection");
        if (r < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw LinkError(std::string("recv: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(r);
    }
    return out;
}

Endpoint parse_endpoint(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos) throw ConfigInvalid("endpoint " + text);
    Endpoint ep;
    ep.host = text.substr(0, colon);
    if (ep.host.empty()) ep.host = "127.0.0.1";
    try {
        std::size_t used = 0;
        ep.port = std::stoi(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1) throw std::invalid_argument("port");
    } catch (const std::exception&) {
        throw ConfigInvalid("endpoint " + text);
    }
    if (ep.port < 0 || ep.port > 65535) throw ConfigInvalid("endpoint " + text);
    return ep;
}

namespace {
sockaddr_in resolve(const Endpoint& ep) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(ep.port));
    const std::string host = ep.host == "localhost" ? "127.0.0.1" : ep.host;
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        addrinfo hints{};
        hints.ai_family = AF_INET;
        addrinfo* res = nullptr;
        if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) throw LinkError("cannot resolve " + host);
        addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
        ::freeaddrinfo(res);
    }
    return addr;
}
}  // namespace

TcpListener::TcpListener(const Endpoint& ep) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw LinkError(std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = resolve(ep);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
        const std::string err = std::strerror(errno);
        ::close(fd_);
        throw LinkError("bind " + ep.host + ":" + std::to_string(ep.port) + ": " + err);
    }
    if (::listen(fd_, 8) < 0) {
        const std::string err = std::strerror(errno);
        ::close(fd_);
        throw LinkError("listen: " + err);
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<TcpStream> TcpListener::accept(double timeout_s) {
    pollfd p{fd_, POLLIN, 0};
    const int ms = timeout_s < 0.0 ? -1 : static_cast<int>(std::ceil(timeout_s * 1000.0));
    int r;
    do {
        r = ::poll(&p, 1, ms);
    } while (r < 0 && errno == EINTR);
    if (r == 0) throw Timeout("no connection within " + std::to_string(timeout_s) + " s");
    if (r < 0) throw LinkError(std::string("poll: ") + std::strerror(errno));
    const int c = ::accept(fd_, nullptr, nullptr);
    if (c < 0) throw LinkError(std::string("accept: ") + std::strerror(errno));
    return std::make_unique<TcpStream>(c);
}

std::unique_ptr<TcpStream> tcp_connect(const Endpoint& ep, double timeout_s) {
    const sockaddr_in addr = resolve(ep);
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    while (true) {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw LinkError(std::string("socket: ") + std::strerror(errno));
        if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0)
            return std::make_unique<TcpStream>(fd);
        const std::string err = std::strerror(errno);
        ::close(fd);
        if (std::chrono::steady_clock::now() >= deadline)
            throw LinkError("connect " + ep.host + ":" + std::to_string(ep.port) + ": " + err);
        ::usleep(50000);
    }
}

// -------------------------------------------------------------- FSW links

fsw::ActuatorFrame InProcessLink::exchange(const fsw::SensorFrame& frame) {
    const fsw::SensorFrame in = sensor_from_wire(decode(encode_frame(frame)));
    const fsw::ActuatorFrame out = fsw_.step(in);
    return actuator_from_wire(decode(encode_frame(out)));
}

void StreamLink::handshake(const SessionInfo& info) {
    send_message(stream_, to_wire(info));
    const WireMessage reply = receive_message(stream_, timeout_);
    if (reply.type != MsgType::Sync) throw ProtocolViolation("expected SYNC reply");
    if (reply.flags & msg_flags::kReject) throw ProtocolViolation("peer rejected the session parameters");
    if (!(session_from_wire(reply) == info)) throw ProtocolViolation("session parameters differ between peers");
}

fsw::ActuatorFrame StreamLink::exchange(const fsw::SensorFrame& frame) {
    send_message(stream_, to_wire(frame));
    while (true) {
        WireMessage m;
        try {
            m = receive_message(stream_, timeout_);
        } catch (const Timeout&) {
            abandoned_ = true;
            throw;
        }
        if (m.type == MsgType::Shutdown) throw LinkError("peer shut down");
        if (m.type != MsgType::Actuator) throw ProtocolViolation("unexpected message type");
        if (m.tick == frame.tick) return actuator_from_wire(m);
        // late reply to a tick already given up on
        if (m.tick < frame.tick && abandoned_) continue;
        throw ProtocolViolation("reply for tick " + std::to_string(m.tick) + " while expecting " +
                                std::to_string(frame.tick));
    }
}

void StreamLink::shutdown() {
    WireMessage m;
    m.type = MsgType::Shutdown;
    try {
        send_message(stream_, m);
    } catch (const LinkError&) {
    }
}

// --------------------------------------------------------------- lockstep

Lockstep::Lockstep(FswLink& link, unsigned delay, std::size_t n, OnTimeout policy)
    : link_(link), delay_(delay), n_thrusters_(n), policy_(policy) {}

Lockstep::Result Lockstep::tick(const fsw::SensorFrame& frame) {
    Result r;
    fsw::ActuatorFrame reply;
    try {
        reply = link_.exchange(frame);
        if (reply.tick != frame.tick)
            throw ProtocolViolation("tick echo " + std::to_string(reply.tick) + " for " + std::to_string(frame.tick));
        if (reply.on_times.size() != n_thrusters_) throw ProtocolViolation("actuator frame width");
        last_reply_ = reply;
    } catch (const Error& e) {
        // A lost link is handled like a silent peer.
        if (!dynamic_cast<const Timeout*>(&e) && !dynamic_cast<const LinkError*>(&e)) throw;
        if (policy_ == OnTimeout::Abort) throw;
        r.timed_out = true;
        reply = last_reply_ ? *last_reply_ : fsw::zero_actuator(frame.tick, n_thrusters_);
        reply.tick = frame.tick;
    }
    pipeline_.push_back(reply);
    if (frame.tick < delay_) {
        r.applied = fsw::zero_actuator(frame.tick, n_thrusters_);
    } else {
        r.applied = pipeline_.front();
        pipeline_.pop_front();
    }
    return r;
}

std::uint64_t serve_fsw(Stream& stream, fsw::FlightSoftware& fsw, const SessionInfo& expected,
                        const std::function<void(const fsw::SensorFrame&, const fsw::FlightSoftware&)>& after_step) {
    std::uint64_t served = 0;
    bool synced = false;
    std::optional<std::uint64_t> last_tick;
    while (true) {
        const WireMessage m = receive_message(stream, -1.0);
        switch (m.type) {
            case MsgType::Sync: {
                const SessionInfo got = session_from_wire(m);
                WireMessage reply = to_wire(expected);
                if (!(got == expected)) {
                    reply.flags = msg_flags::kReject;
                    send_message(stream, reply);
                    throw ProtocolViolation("session parameters differ between peers");
                }
                send_message(stream, reply);
                synced = true;
                break;
            }
            case MsgType::Sensor: {
                if (!synced) throw ProtocolViolation("SENSOR before SYNC");
                const fsw::SensorFrame f = sensor_from_wire(m);
                if (last_tick && f.tick <= *last_tick) throw ProtocolViolation("out-of-order tick " + std::to_string(f.tick));
                last_tick = f.tick;
                send_message(stream, to_wire(fsw.step(f)));
                ++served;
                if (after_step) after_step(f, fsw);
                break;
            }
            case MsgType::Shutdown:
                return served;
            case MsgType::Actuator:
                throw ProtocolViolation("ACTUATOR frame sent to the flight software");
        }
    }
}

}  // namespace upstage::pil
