// Copyright 2026 The proxeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "proxeval/preprocess.hpp"
#include "proxeval/store.hpp"
#include "proxeval/synth.hpp"
#include "proxeval/trace.hpp"

namespace proxeval {

/// Destination port of the terminal's broadcast to the distant instrument.
inline constexpr std::uint16_t kBroadcastPort = 8888;

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

/// Request and response payload: 7 raw transaction-ID bytes followed by the
/// one-byte sensor code.
struct ProtocolMessage {
    static constexpr std::size_t kWireSize = TransactionId::kSize + 1;
    using Wire = std::array<std::uint8_t, kWireSize>;

    TransactionId id;
    SensorKind sensor = SensorKind::Accelerometer;

    Wire encode() const {
        Wire w{};
        std::copy(id.bytes().begin(), id.bytes().end(), w.begin());
        w.back() = sensor_info(sensor).code;
        return w;
    }

    /// nullopt unless exactly 8 bytes with a known sensor code.
    static std::optional<ProtocolMessage> decode(std::span<const std::uint8_t> bytes) {
        if (bytes.size() != kWireSize) return std::nullopt;
        const auto sensor = sensor_from_code(bytes.back());
        if (!sensor) return std::nullopt;
        TransactionId::Bytes id{};
        std::copy(bytes.begin(), bytes.begin() + TransactionId::kSize, id.begin());
        return ProtocolMessage{TransactionId(id), *sensor};
    }

    friend bool operator==(const ProtocolMessage&, const ProtocolMessage&) = default;
};

// ---------------------------------------------------------------------------
// Fault injection
// ---------------------------------------------------------------------------

enum class FaultKind : std::uint8_t {
    CorruptResponseId,  // one ID byte of TI's response is flipped in transit
    CorruptPayload,     // TI's response arrives truncated and garbled
    DropDtiBroadcast,   // the broadcast never reaches the distant instrument
};

inline constexpr std::array<FaultKind, 3> kAllFaults{
    FaultKind::CorruptResponseId, FaultKind::CorruptPayload, FaultKind::DropDtiBroadcast};

constexpr std::string_view fault_name(FaultKind f) {
    switch (f) {
    case FaultKind::CorruptResponseId: return "corrupt_response_id";
    case FaultKind::CorruptPayload: return "corrupt_payload";
    case FaultKind::DropDtiBroadcast: return "drop_dti_broadcast";
    }
    return "?";
}

inline std::optional<FaultKind> parse_fault(std::string_view text) {
    for (auto f : kAllFaults)
        if (fault_name(f) == text) return f;
    return std::nullopt;
}

/// Which session transactions (0-based, in execution order) get which fault.
///
/// Text form: one `<index> <kind>` pair per line (comma or whitespace
/// separated); `#` starts a comment.
class FaultSchedule {
public:
    FaultSchedule() = default;

    void set(std::size_t index, FaultKind kind) { faults_[index] = kind; }

    std::optional<FaultKind> at(std::size_t index) const {
        const auto it = faults_.find(index);
        return it == faults_.end() ? std::nullopt : std::optional(it->second);
    }

    std::size_t size() const noexcept { return faults_.size(); }
    const std::map<std::size_t, FaultKind>& entries() const noexcept { return faults_; }

    static FaultSchedule parse(std::istream& in, const std::string& where = "faults") {
        FaultSchedule out;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
            for (auto& c : line)
                if (c == ',') c = ' ';
            std::istringstream fields(line);
            std::string index_text, kind_text, extra;
            if (!(fields >> index_text)) continue;
            if (!(fields >> kind_text) || (fields >> extra))
                throw ParseError(where, lineno, "expected '<index> <fault kind>'");
            std::size_t used = 0;
            std::size_t index = 0;
            try {
                index = std::stoull(index_text, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != index_text.size() || index_text.front() == '-')
                throw ParseError(where, lineno, "bad transaction index '" + index_text + "'");
            const auto kind = parse_fault(kind_text);
            if (!kind) throw ParseError(where, lineno, "unknown fault kind '" + kind_text + "'");
            out.set(index, *kind);
        }
        return out;
    }

    static FaultSchedule load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open fault schedule " + path);
        return parse(in, path);
    }

    void write(std::ostream& os) const {
        for (const auto& [index, kind] : faults_) os << index << ' ' << fault_name(kind) << '\n';
    }

    /// Each of `n` transactions is faulted with probability `rate`; the kind
    /// is drawn uniformly from `kinds`.
    static FaultSchedule random(std::size_t n, double rate, std::uint64_t seed,
                                std::span<const FaultKind> kinds = kAllFaults) {
        FaultSchedule out;
        std::mt19937_64 rng(seed);
        std::bernoulli_distribution hit(rate);
        std::uniform_int_distribution<std::size_t> pick(0, kinds.size() - 1);
        for (std::size_t i = 0; i < n; ++i)
            if (hit(rng)) out.set(i, kinds[pick(rng)]);
        return out;
    }

private:
    std::map<std::size_t, FaultKind> faults_;
};

// ---------------------------------------------------------------------------
// Devices and the world they sit in
// ---------------------------------------------------------------------------

/// The synthetic physical environment. The terminal registers each
/// transaction before announcing it; any device that later learns the
/// transaction ID can record its view of the environment.
class SyntheticWorld {
public:
    struct Plan {
        TransactionId id;
        SensorKind sensor;
        std::size_t index;  // per-sensor transaction number
        double recording_ms;
    };

    explicit SyntheticWorld(SynthScenario scenario) : scenario_(std::move(scenario)) {
        validate(scenario_);
    }

    const SynthScenario& scenario() const noexcept { return scenario_; }

    Plan begin(SensorKind sensor, double recording_ms) {
        std::lock_guard lock(mu_);
        const std::size_t index = next_[sensor]++;
        Plan plan{synth_transaction_id(scenario_, sensor, index), sensor, index, recording_ms};
        plans_.insert_or_assign(plan.id, plan);
        return plan;
    }

    SensorTrace record(const Plan& plan, DeviceRole role) const {
        if (plan.recording_ms == scenario_.recording_ms)
            return synthesize_recording(scenario_, plan.sensor, plan.index, role, plan.id);
        auto s = scenario_;
        s.recording_ms = plan.recording_ms;
        return synthesize_recording(s, plan.sensor, plan.index, role, plan.id);
    }

    /// nullopt when the ID was never announced or names another sensor.
    std::optional<SensorTrace> record(const ProtocolMessage& msg, DeviceRole role) const {
        std::optional<Plan> plan;
        {
            std::lock_guard lock(mu_);
            const auto it = plans_.find(msg.id);
            if (it != plans_.end() && it->second.sensor == msg.sensor) plan = it->second;
        }
        if (!plan) return std::nullopt;
        return record(*plan, role);
    }

    void finish(const TransactionId& id) {
        std::lock_guard lock(mu_);
        plans_.erase(id);
    }

private:
    SynthScenario scenario_;
    mutable std::mutex mu_;
    std::map<SensorKind, std::size_t> next_;
    std::map<TransactionId, Plan> plans_;
};

/// TI or DTI: records on receipt of a valid message and keeps the recording
/// until the terminal collects or discards it. TI answers with the same
/// payload once recording ends.
class InstrumentDevice {
public:
    InstrumentDevice(DeviceRole role, const SyntheticWorld& world) : role_(role), world_(world) {}

    DeviceRole role() const noexcept { return role_; }

    std::optional<ProtocolMessage::Wire> on_message(std::span<const std::uint8_t> bytes) {
        const auto msg = ProtocolMessage::decode(bytes);
        if (!msg) return std::nullopt;
        auto trace = world_.record(*msg, role_);
        if (!trace) return std::nullopt;
        {
            std::lock_guard lock(mu_);
            pending_.insert_or_assign(msg->id, std::move(*trace));
        }
        cv_.notify_all();
        if (role_ == DeviceRole::TI) return msg->encode();
        return std::nullopt;
    }

    std::optional<SensorTrace> take(const TransactionId& id,
                                    std::chrono::milliseconds wait = std::chrono::milliseconds(0)) {
        std::unique_lock lock(mu_);
        cv_.wait_for(lock, wait, [&] { return pending_.contains(id); });
        const auto it = pending_.find(id);
        if (it == pending_.end()) return std::nullopt;
        auto trace = std::move(it->second);
        pending_.erase(it);
        return trace;
    }

    void discard(const TransactionId& id) {
        std::lock_guard lock(mu_);
        pending_.erase(id);
    }

private:
    DeviceRole role_;
    const SyntheticWorld& world_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::map<TransactionId, SensorTrace> pending_;
};

// ---------------------------------------------------------------------------
// Links
// ---------------------------------------------------------------------------

/// Transport between the terminal and the two instruments.
class Link {
public:
    virtual ~Link() = default;

    /// Contactless request to TI.
    virtual void send_to_instrument(std::span<const std::uint8_t> bytes) = 0;
    /// Broadcast to any listening distant instrument.
    virtual void broadcast(std::span<const std::uint8_t> bytes) = 0;
    /// TI's response, or nullopt when none arrives in time.
    virtual std::optional<std::vector<std::uint8_t>> await_instrument_reply() = 0;

    virtual InstrumentDevice& instrument() = 0;
    virtual InstrumentDevice& distant() = 0;
    /// How long to wait for the distant instrument's recording.
    virtual std::chrono::milliseconds collect_timeout() const = 0;
};

/// Direct in-process delivery.
class EmulatedLink final : public Link {
public:
    explicit EmulatedLink(const SyntheticWorld& world)
        : ti_(DeviceRole::TI, world), dti_(DeviceRole::DTI, world) {}

    void send_to_instrument(std::span<const std::uint8_t> bytes) override {
        reply_.reset();
        if (auto r = ti_.on_message(bytes)) reply_.emplace(r->begin(), r->end());
    }
    void broadcast(std::span<const std::uint8_t> bytes) override { dti_.on_message(bytes); }
    std::optional<std::vector<std::uint8_t>> await_instrument_reply() override {
        return std::exchange(reply_, std::nullopt);
    }
    InstrumentDevice& instrument() override { return ti_; }
    InstrumentDevice& distant() override { return dti_; }
    std::chrono::milliseconds collect_timeout() const override { return std::chrono::milliseconds(0); }

private:
    InstrumentDevice ti_;
    InstrumentDevice dti_;
    std::optional<std::vector<std::uint8_t>> reply_;
};

namespace detail {

inline std::string errno_text() { return std::strerror(errno); }

/// Owning IPv4 UDP socket bound to 127.0.0.1.
class UdpSocket {
public:
    UdpSocket() = default;
    UdpSocket(const UdpSocket&) = delete;
    UdpSocket& operator=(const UdpSocket&) = delete;
    UdpSocket(UdpSocket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    UdpSocket& operator=(UdpSocket&& o) noexcept {
        if (this != &o) {
            close();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    ~UdpSocket() { close(); }

    static UdpSocket bind_loopback(std::uint16_t port) {
        UdpSocket s;
        s.fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
        if (s.fd_ < 0) throw ChannelError("socket(): " + errno_text());
        const int on = 1;
        ::setsockopt(s.fd_, SOL_SOCKET, SO_BROADCAST, &on, sizeof on);
        const auto addr = loopback(port);
        if (::bind(s.fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0)
            throw BindError("bind 127.0.0.1:" + std::to_string(port) + ": " + errno_text());
        return s;
    }

    static sockaddr_in loopback(std::uint16_t port) {
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        return addr;
    }

    std::uint16_t port() const {
        sockaddr_in addr{};
        socklen_t len = sizeof addr;
        if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0)
            throw ChannelError("getsockname(): " + errno_text());
        return ntohs(addr.sin_port);
    }

    void send_to(std::span<const std::uint8_t> bytes, const sockaddr_in& to) const {
        const auto n = ::sendto(fd_, bytes.data(), bytes.size(), 0,
                                reinterpret_cast<const sockaddr*>(&to), sizeof to);
        if (n < 0 || static_cast<std::size_t>(n) != bytes.size())
            throw ChannelError("sendto(): " + errno_text());
    }

    struct Datagram {
        std::vector<std::uint8_t> bytes;
        sockaddr_in from{};
    };

    /// Waits up to `timeout` for one datagram.
    std::optional<Datagram> receive(std::chrono::milliseconds timeout) const {
        pollfd p{fd_, POLLIN, 0};
        const int ready = ::poll(&p, 1, static_cast<int>(timeout.count()));
        if (ready < 0) {
            if (errno == EINTR) return std::nullopt;
            throw ChannelError("poll(): " + errno_text());
        }
        if (ready == 0) return std::nullopt;
        Datagram d;
        d.bytes.resize(512);
        socklen_t len = sizeof d.from;
        const auto n = ::recvfrom(fd_, d.bytes.data(), d.bytes.size(), 0,
                                  reinterpret_cast<sockaddr*>(&d.from), &len);
        if (n < 0) throw ChannelError("recvfrom(): " + errno_text());
        d.bytes.resize(static_cast<std::size_t>(n));
        return d;
    }

    void drain() const {
        while (receive(std::chrono::milliseconds(0))) {
        }
    }

private:
    void close() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

    int fd_ = -1;
};

} // namespace detail

/// Real datagrams over 127.0.0.1. The distant instrument listens on the
/// broadcast port; TI listens on an ephemeral port standing in for the
/// contactless link. Both instruments run on their own threads.
class LoopbackLink final : public Link {
public:
    LoopbackLink(const SyntheticWorld& world, std::uint16_t broadcast_port,
                 std::chrono::milliseconds reply_timeout = std::chrono::milliseconds(2000))
        : ti_(DeviceRole::TI, world),
          dti_(DeviceRole::DTI, world),
          dti_sock_(detail::UdpSocket::bind_loopback(broadcast_port)),
          ti_sock_(detail::UdpSocket::bind_loopback(0)),
          tt_sock_(detail::UdpSocket::bind_loopback(0)),
          broadcast_to_(detail::UdpSocket::loopback(dti_sock_.port())),
          instrument_at_(detail::UdpSocket::loopback(ti_sock_.port())),
          reply_timeout_(reply_timeout) {
        ti_thread_ = std::jthread([this](std::stop_token st) { serve(st, ti_sock_, ti_); });
        dti_thread_ = std::jthread([this](std::stop_token st) { serve(st, dti_sock_, dti_); });
    }

    ~LoopbackLink() override {
        ti_thread_.request_stop();
        dti_thread_.request_stop();
    }

    std::uint16_t broadcast_port() const { return dti_sock_.port(); }

    void send_to_instrument(std::span<const std::uint8_t> bytes) override {
        tt_sock_.drain();
        tt_sock_.send_to(bytes, instrument_at_);
    }
    void broadcast(std::span<const std::uint8_t> bytes) override {
        tt_sock_.send_to(bytes, broadcast_to_);
    }
    std::optional<std::vector<std::uint8_t>> await_instrument_reply() override {
        auto d = tt_sock_.receive(reply_timeout_);
        if (!d) return std::nullopt;
        return std::move(d->bytes);
    }
    InstrumentDevice& instrument() override { return ti_; }
    InstrumentDevice& distant() override { return dti_; }
    std::chrono::milliseconds collect_timeout() const override { return reply_timeout_; }

private:
    static void serve(std::stop_token st, const detail::UdpSocket& sock, InstrumentDevice& device) {
        while (!st.stop_requested()) {
            std::optional<detail::UdpSocket::Datagram> d;
            try {
                d = sock.receive(std::chrono::milliseconds(20));
            } catch (const ChannelError&) {
                continue;
            }
            if (!d) continue;
            if (const auto reply = device.on_message(d->bytes)) {
                try {
                    sock.send_to(*reply, d->from);
                } catch (const ChannelError&) {
                    // The terminal times out and discards the transaction.
                }
            }
        }
    }

    InstrumentDevice ti_;
    InstrumentDevice dti_;
    detail::UdpSocket dti_sock_;
    detail::UdpSocket ti_sock_;
    detail::UdpSocket tt_sock_;
    sockaddr_in broadcast_to_;
    sockaddr_in instrument_at_;
    std::chrono::milliseconds reply_timeout_;
    std::jthread ti_thread_;
    std::jthread dti_thread_;
};

// ---------------------------------------------------------------------------
// Environment, transactions and sessions
// ---------------------------------------------------------------------------

/// A synthetic world, the link to its instruments, and the record store the
/// three devices write to.
class Environment {
public:
    explicit Environment(SynthScenario scenario, RecordStore store = {})
        : world_(std::make_unique<SyntheticWorld>(std::move(scenario))),
          link_(std::make_unique<EmulatedLink>(*world_)),
          store_(std::move(store)) {}

    Environment(SynthScenario scenario, std::uint16_t broadcast_port, RecordStore store = {})
        : world_(std::make_unique<SyntheticWorld>(std::move(scenario))),
          link_(std::make_unique<LoopbackLink>(*world_, broadcast_port)),
          store_(std::move(store)) {}

    SyntheticWorld& world() noexcept { return *world_; }
    Link& link() noexcept { return *link_; }
    RecordStore& store() noexcept { return store_; }
    const RecordStore& store() const noexcept { return store_; }

    bool live() const noexcept { return dynamic_cast<const LoopbackLink*>(link_.get()) != nullptr; }

    /// Port the distant instrument listens on (live mode only).
    std::optional<std::uint16_t> broadcast_port() const {
        if (const auto* l = dynamic_cast<const LoopbackLink*>(link_.get())) return l->broadcast_port();
        return std::nullopt;
    }

private:
    std::unique_ptr<SyntheticWorld> world_;
    std::unique_ptr<Link> link_;
    RecordStore store_;
};

inline Environment make_emulated_environment(SynthScenario scenario, RecordStore store = {}) {
    return Environment(std::move(scenario), std::move(store));
}

/// Live mode: binds the distant instrument's listener on 127.0.0.1:`port`
/// (0 picks a free port). Throws BindError if the port is taken.
inline Environment live_mode_bind(SynthScenario scenario, std::uint16_t port = kBroadcastPort,
                                  RecordStore store = {}) {
    return Environment(std::move(scenario), port, std::move(store));
}

enum class OutcomeStatus : std::uint8_t { Stored, DiscardedInconsistent, DiscardedIncomplete };

constexpr std::string_view status_name(OutcomeStatus s) {
    switch (s) {
    case OutcomeStatus::Stored: return "stored";
    case OutcomeStatus::DiscardedInconsistent: return "discarded_inconsistent";
    case OutcomeStatus::DiscardedIncomplete: return "discarded_incomplete";
    }
    return "?";
}

struct TransactionOutcome {
    OutcomeStatus status = OutcomeStatus::DiscardedInconsistent;
    std::optional<TransactionTriple> triple;  // present iff Stored
    std::vector<std::string> diagnostics;
};

/// One transaction of the three-device protocol.
///
/// TT draws a fresh ID, sends {ID, sensor} to TI, broadcasts it to DTI, and
/// records; TI and DTI record on receipt. TI then echoes the message and TT
/// checks ID and sensor. A mismatch stores nothing. Otherwise TT's and TI's
/// recordings are stored, and DTI's too if it heard the broadcast; only
/// then is the transaction complete.
inline TransactionOutcome run_transaction(Environment& env, SensorKind sensor,
                                          double recording_ms = kTransactionWindowMs,
                                          std::optional<FaultKind> fault = std::nullopt) {
    auto& world = env.world();
    auto& link = env.link();
    const auto plan = world.begin(sensor, recording_ms);
    const auto request = ProtocolMessage{plan.id, sensor}.encode();
    TransactionOutcome out;

    link.send_to_instrument(request);
    const bool broadcast_sent = fault != FaultKind::DropDtiBroadcast;
    if (broadcast_sent)
        link.broadcast(request);
    else
        out.diagnostics.push_back("broadcast to DTI dropped");
    const auto tt_trace = world.record(plan, DeviceRole::TT);

    auto reply = link.await_instrument_reply();
    if (reply && fault == FaultKind::CorruptResponseId) {
        (*reply)[0] ^= 0xA5;
        out.diagnostics.push_back("response ID corrupted in transit");
    } else if (reply && fault == FaultKind::CorruptPayload) {
        reply->assign({0xde, 0xad, 0xbe});
        out.diagnostics.push_back("response payload corrupted in transit");
    }

    auto abandon = [&](std::string why) {
        link.instrument().discard(plan.id);
        link.distant().discard(plan.id);
        world.finish(plan.id);
        out.status = OutcomeStatus::DiscardedInconsistent;
        out.diagnostics.push_back(std::move(why));
        return out;
    };

    if (!reply) return abandon("no response from TI");
    const auto response = ProtocolMessage::decode(*reply);
    if (!response) return abandon("undecodable response from TI");
    if (response->id != plan.id) return abandon("response transaction ID mismatch");
    if (response->sensor != sensor) return abandon("response sensor mismatch");

    auto ti_trace = link.instrument().take(plan.id, link.collect_timeout());
    if (!ti_trace) return abandon("TI recording missing");
    std::optional<SensorTrace> dti_trace;
    if (broadcast_sent) dti_trace = link.distant().take(plan.id, link.collect_timeout());
    world.finish(plan.id);

    if (dti_trace) {
        auto triple = validate_triple(tt_trace, *ti_trace, *dti_trace);
        auto& store = env.store();
        store.append(triple.tt());
        store.append(triple.ti());
        store.append(triple.dti());
        out.status = OutcomeStatus::Stored;
        out.triple = std::move(triple);
        return out;
    }
    env.store().append(tt_trace);
    env.store().append(*ti_trace);
    out.status = OutcomeStatus::DiscardedIncomplete;
    out.diagnostics.push_back("DTI recording missing; transaction will not join");
    return out;
}

struct SessionStats {
    std::size_t attempted = 0;
    std::size_t stored = 0;
    std::size_t discarded_inconsistent = 0;
    std::size_t discarded_incomplete = 0;

    std::size_t discarded() const noexcept { return discarded_inconsistent + discarded_incomplete; }
};

/// Runs n_per_sensor transactions per sensor, the terminal moving to the
/// next sensor in the list after every transaction. Fault indices refer to
/// the session-wide transaction number.
inline SessionStats run_session(Environment& env, std::span<const SensorKind> sensors,
                                std::size_t n_per_sensor, const FaultSchedule& faults = {},
                                double recording_ms = kTransactionWindowMs) {
    if (n_per_sensor < 1) throw ConfigError("n_per_sensor must be >= 1");
    if (sensors.empty()) throw ConfigError("session needs at least one sensor");
    SessionStats stats;
    const std::size_t total = n_per_sensor * sensors.size();
    for (std::size_t k = 0; k < total; ++k) {
        const auto outcome =
            run_transaction(env, sensors[k % sensors.size()], recording_ms, faults.at(k));
        ++stats.attempted;
        switch (outcome.status) {
        case OutcomeStatus::Stored: ++stats.stored; break;
        case OutcomeStatus::DiscardedInconsistent: ++stats.discarded_inconsistent; break;
        case OutcomeStatus::DiscardedIncomplete: ++stats.discarded_incomplete; break;
        }
    }
    return stats;
}

} // namespace proxeval
