// Copyright 2026 The proxeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "proxeval/error.hpp"

namespace proxeval {

// ---------------------------------------------------------------------------
// Sensors
// ---------------------------------------------------------------------------

/// The seven ambient sensors that deliver usable data inside a 500 ms window.
enum class SensorKind : std::uint8_t {
    Accelerometer,
    Gravity,
    Gyroscope,
    Light,
    LinearAcceleration,
    MagneticField,
    RotationVector,
};

struct SensorInfo {
    SensorKind kind;
    std::string_view name;   // canonical display name, used in files
    std::string_view slug;   // lowercase identifier, used in file names
    std::uint8_t code;       // wire code (matches the Android TYPE_* constant)
    int arity;               // 1 for scalar sensors, 3 for vector sensors
    std::string_view unit;
    double max_rate_hz;      // fastest delivery rate of the modelled handset
};

inline constexpr std::array<SensorInfo, 7> kSensorTable{{
    {SensorKind::Accelerometer, "Accelerometer", "accelerometer", 1, 3, "m/s^2", 100.0},
    {SensorKind::Gravity, "Gravity", "gravity", 9, 3, "m/s^2", 100.0},
    {SensorKind::Gyroscope, "Gyroscope", "gyroscope", 4, 3, "rad/s", 200.0},
    {SensorKind::Light, "Light", "light", 5, 1, "lux", 40.0},
    {SensorKind::LinearAcceleration, "Linear Acceleration", "linear_acceleration", 10, 3, "m/s^2", 100.0},
    {SensorKind::MagneticField, "Magnetic Field", "magnetic_field", 2, 3, "uT", 100.0},
    {SensorKind::RotationVector, "Rotation Vector", "rotation_vector", 11, 3, "unitless", 100.0},
}};

inline constexpr std::array<SensorKind, 7> kAllSensors{
    SensorKind::Accelerometer, SensorKind::Gravity,      SensorKind::Gyroscope,
    SensorKind::Light,         SensorKind::LinearAcceleration, SensorKind::MagneticField,
    SensorKind::RotationVector};

constexpr const SensorInfo& sensor_info(SensorKind kind) {
    return kSensorTable[static_cast<std::size_t>(kind)];
}

constexpr std::string_view sensor_name(SensorKind kind) { return sensor_info(kind).name; }
constexpr std::string_view sensor_slug(SensorKind kind) { return sensor_info(kind).slug; }
constexpr bool is_scalar(SensorKind kind) { return sensor_info(kind).arity == 1; }

namespace detail {

inline std::string fold_name(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == ' ' || c == '_' || c == '-') continue;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

} // namespace detail

/// Accepts the canonical name ("Magnetic Field"), the slug ("magnetic_field")
/// or the enumerator spelling ("MagneticField"), case-insensitively.
inline std::optional<SensorKind> parse_sensor(std::string_view text) {
    const auto key = detail::fold_name(text);
    for (const auto& info : kSensorTable) {
        if (detail::fold_name(info.name) == key) return info.kind;
    }
    return std::nullopt;
}

inline std::optional<SensorKind> sensor_from_code(std::uint8_t code) {
    for (const auto& info : kSensorTable) {
        if (info.code == code) return info.kind;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Devices
// ---------------------------------------------------------------------------

/// TT: transaction terminal, TI: transaction instrument (tapped),
/// DTI: distant transaction instrument (relay endpoint).
enum class DeviceRole : std::uint8_t { TT, TI, DTI };

inline constexpr std::array<DeviceRole, 3> kAllRoles{DeviceRole::TT, DeviceRole::TI, DeviceRole::DTI};

constexpr std::string_view role_name(DeviceRole role) {
    switch (role) {
    case DeviceRole::TT: return "TT";
    case DeviceRole::TI: return "TI";
    case DeviceRole::DTI: return "DTI";
    }
    return "?";
}

inline std::optional<DeviceRole> parse_role(std::string_view text) {
    for (auto role : kAllRoles) {
        if (role_name(role) == text) return role;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Transaction identifier
// ---------------------------------------------------------------------------

/// 7 opaque bytes chosen by the terminal; written as 14 lowercase hex chars.
class TransactionId {
public:
    static constexpr std::size_t kSize = 7;
    using Bytes = std::array<std::uint8_t, kSize>;

    constexpr TransactionId() = default;
    constexpr explicit TransactionId(const Bytes& bytes) : bytes_(bytes) {}

    /// Accepts upper or lower case hex; exactly 14 digits.
    static std::optional<TransactionId> from_hex(std::string_view hex) {
        if (hex.size() != 2 * kSize) return std::nullopt;
        Bytes bytes{};
        for (std::size_t i = 0; i < kSize; ++i) {
            const int hi = nibble(hex[2 * i]);
            const int lo = nibble(hex[2 * i + 1]);
            if (hi < 0 || lo < 0) return std::nullopt;
            bytes[i] = static_cast<std::uint8_t>(hi << 4 | lo);
        }
        return TransactionId(bytes);
    }

    std::string hex() const {
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        out.reserve(2 * kSize);
        for (auto b : bytes_) {
            out.push_back(digits[b >> 4]);
            out.push_back(digits[b & 0xF]);
        }
        return out;
    }

    const Bytes& bytes() const noexcept { return bytes_; }

    friend constexpr bool operator==(const TransactionId&, const TransactionId&) = default;
    friend constexpr auto operator<=>(const TransactionId&, const TransactionId&) = default;

private:
    static constexpr int nibble(char c) {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    }

    Bytes bytes_{};
};

// ---------------------------------------------------------------------------
// Samples and traces
// ---------------------------------------------------------------------------

using Vec3 = std::array<double, 3>;
using SampleValue = std::variant<double, Vec3>;

struct Sample {
    double t_ms = 0.0;  // offset from the device's recording start
    SampleValue value;

    friend bool operator==(const Sample&, const Sample&) = default;
};

inline int arity_of(const SampleValue& v) { return std::holds_alternative<double>(v) ? 1 : 3; }

/// Samples recorded by one device for one sensor during one transaction.
/// Immutable; samples are sorted by time on construction and duplicate
/// timestamps are rejected.
class SensorTrace {
public:
    SensorTrace(TransactionId id, DeviceRole role, SensorKind sensor, std::string location,
                std::int64_t start_epoch_ms, std::vector<Sample> samples)
        : id_(id),
          role_(role),
          sensor_(sensor),
          location_(std::move(location)),
          start_epoch_ms_(start_epoch_ms),
          samples_(std::move(samples)) {
        const int arity = sensor_info(sensor_).arity;
        for (const auto& s : samples_) {
            if (!std::isfinite(s.t_ms) || s.t_ms < 0.0)
                throw InvalidTrace(describe() + ": sample time must be finite and >= 0");
            if (arity_of(s.value) != arity)
                throw InvalidTrace(describe() + ": sample arity does not match sensor");
            const bool finite = std::visit(
                [](const auto& v) {
                    if constexpr (std::is_same_v<std::decay_t<decltype(v)>, double>)
                        return std::isfinite(v);
                    else
                        return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
                },
                s.value);
            if (!finite) throw InvalidTrace(describe() + ": non-finite sample value");
        }
        std::stable_sort(samples_.begin(), samples_.end(),
                         [](const Sample& a, const Sample& b) { return a.t_ms < b.t_ms; });
        for (std::size_t i = 1; i < samples_.size(); ++i) {
            if (samples_[i].t_ms == samples_[i - 1].t_ms)
                throw InvalidTrace(describe() + ": duplicate sample time " +
                                   std::to_string(samples_[i].t_ms) + " ms");
        }
    }

    const TransactionId& id() const noexcept { return id_; }
    DeviceRole role() const noexcept { return role_; }
    SensorKind sensor() const noexcept { return sensor_; }
    const std::string& location() const noexcept { return location_; }
    std::int64_t start_epoch_ms() const noexcept { return start_epoch_ms_; }
    std::span<const Sample> samples() const noexcept { return samples_; }
    std::size_t size() const noexcept { return samples_.size(); }

    /// "TI trace 0a0b0c0d0e0f10 (Light)"
    std::string describe() const {
        return std::string(role_name(role_)) + " trace " + id_.hex() + " (" +
               std::string(sensor_name(sensor_)) + ")";
    }

    friend bool operator==(const SensorTrace&, const SensorTrace&) = default;

private:
    TransactionId id_;
    DeviceRole role_;
    SensorKind sensor_;
    std::string location_;
    std::int64_t start_epoch_ms_;
    std::vector<Sample> samples_;
};

class TransactionTriple;
TransactionTriple validate_triple(SensorTrace a, SensorTrace b, SensorTrace c);

/// The TT/TI/DTI recordings of one transaction.
class TransactionTriple {
public:
    const TransactionId& id() const noexcept { return tt_.id(); }
    SensorKind sensor() const noexcept { return tt_.sensor(); }
    const std::string& location() const noexcept { return tt_.location(); }

    const SensorTrace& tt() const noexcept { return tt_; }
    const SensorTrace& ti() const noexcept { return ti_; }
    const SensorTrace& dti() const noexcept { return dti_; }

    const SensorTrace& trace(DeviceRole role) const noexcept {
        switch (role) {
        case DeviceRole::TT: return tt_;
        case DeviceRole::TI: return ti_;
        case DeviceRole::DTI: break;
        }
        return dti_;
    }

    friend bool operator==(const TransactionTriple&, const TransactionTriple&) = default;

private:
    friend TransactionTriple validate_triple(SensorTrace, SensorTrace, SensorTrace);

    TransactionTriple(SensorTrace tt, SensorTrace ti, SensorTrace dti)
        : tt_(std::move(tt)), ti_(std::move(ti)), dti_(std::move(dti)) {}

    SensorTrace tt_;
    SensorTrace ti_;
    SensorTrace dti_;
};

namespace detail {

// Index of the element that disagrees with the other two, or 1 when all differ.
template <typename Key>
std::size_t odd_one_out(const Key& a, const Key& b, const Key& c) {
    if (a == b) return 2;
    if (a == c) return 1;
    if (b == c) return 0;
    return 1;
}

} // namespace detail

/// Assembles a triple from three traces in any order. Roles are read from
/// the traces; IDs and sensors must agree and each role must occur once.
inline TransactionTriple validate_triple(SensorTrace a, SensorTrace b, SensorTrace c) {
    const std::array<const SensorTrace*, 3> t{&a, &b, &c};

    if (!(a.id() == b.id() && b.id() == c.id())) {
        const auto* bad = t[detail::odd_one_out(a.id(), b.id(), c.id())];
        throw IdMismatch(bad->describe() + " does not share the transaction ID of the others");
    }
    if (!(a.sensor() == b.sensor() && b.sensor() == c.sensor())) {
        const auto* bad = t[detail::odd_one_out(a.sensor(), b.sensor(), c.sensor())];
        throw SensorMismatch(bad->describe() + " records a different sensor than the others");
    }

    std::array<SensorTrace*, 3> slot{nullptr, nullptr, nullptr};
    for (SensorTrace* trace : {&a, &b, &c}) {
        auto& dst = slot[static_cast<std::size_t>(trace->role())];
        if (dst != nullptr) throw RoleError(trace->describe() + ": role occurs more than once");
        dst = trace;
    }
    return TransactionTriple(std::move(*slot[0]), std::move(*slot[1]), std::move(*slot[2]));
}

} // namespace proxeval
