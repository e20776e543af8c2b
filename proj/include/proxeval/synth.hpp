// Copyright 2026 The proxeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "proxeval/parallel.hpp"
#include "proxeval/trace.hpp"

namespace proxeval {

// ---------------------------------------------------------------------------
// Environment description
// ---------------------------------------------------------------------------

/// Ambient behaviour of one sensor at one location. All quantities are in
/// the sensor's unit (per second for rates).
struct SensorProfile {
    double base_level = 0.0;               // resting level (magnitude for vector sensors)
    double level_spread = 0.0;             // sd of a latent's per-axis offset from base_level
    double drift_rate = 0.0;               // slow linear drift, units/s
    double event_rate = 0.0;               // Poisson arrivals per second
    double event_magnitude = 0.0;          // peak of one transient event
    double event_width_ms = 20.0;          // duration of one triangular event
    double observation_noise_sigma = 0.0;  // per-axis Gaussian read noise
    double quantization_step = 0.0;        // reporting resolution; 0 = continuous

    friend bool operator==(const SensorProfile&, const SensorProfile&) = default;
};

struct LocationProfile {
    std::string name;
    std::map<SensorKind, SensorProfile> sensors;

    const SensorProfile& profile(SensorKind sensor) const {
        const auto it = sensors.find(sensor);
        if (it == sensors.end())
            throw ConfigError("location '" + name + "' has no profile for " +
                              std::string(sensor_name(sensor)));
        return it->second;
    }

    friend bool operator==(const LocationProfile&, const LocationProfile&) = default;
};

/// How the distant instrument's environment relates to the terminal's.
enum class DtiDistanceMode : std::uint8_t {
    SameRoomOffset,  // the terminal's latent plus a constant offset
    DifferentLatent, // an independently drawn latent
};

struct SynthScenario {
    std::size_t n_transactions = 1;  // per sensor
    std::vector<SensorKind> sensors;
    std::vector<LocationProfile> locations;
    DtiDistanceMode dti_distance_mode = DtiDistanceMode::SameRoomOffset;
    double co_location_correlation = 1.0;
    std::uint64_t seed = 0;

    double recording_ms = 500.0;
    double clock_skew_ms = 20.0;     // each device starts uniformly in [0, skew] late
    double timing_jitter_ms = 1.0;   // per-sample delivery jitter
    std::int64_t epoch_ms = 1483228800000;  // wall clock of transaction 0

    friend bool operator==(const SynthScenario&, const SynthScenario&) = default;
};

inline void validate(const SynthScenario& s) {
    if (s.n_transactions < 1) throw ConfigError("n_transactions must be >= 1");
    if (s.sensors.empty()) throw ConfigError("scenario lists no sensors");
    if (s.locations.empty()) throw ConfigError("scenario lists no locations");
    if (!(s.co_location_correlation >= 0.0 && s.co_location_correlation <= 1.0))
        throw ConfigError("co_location_correlation must lie in [0, 1]");
    if (!(s.recording_ms > 0.0)) throw ConfigError("recording_ms must be > 0");
    if (!(s.clock_skew_ms >= 0.0) || !(s.timing_jitter_ms >= 0.0))
        throw ConfigError("clock_skew_ms and timing_jitter_ms must be >= 0");
    for (const auto& loc : s.locations) {
        for (auto sensor : s.sensors) {
            const auto& p = loc.profile(sensor);
            for (double v : {p.level_spread, p.drift_rate, p.event_rate, p.event_magnitude,
                             p.observation_noise_sigma, p.quantization_step})
                if (!(v >= 0.0))
                    throw ConfigError("negative rate, sigma or step in location '" + loc.name +
                                      "' for " + std::string(sensor_name(sensor)));
            if (!(p.event_width_ms > 0.0))
                throw ConfigError("event_width_ms must be > 0 in location '" + loc.name + "'");
        }
    }
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = splitmix64(seed);
    for (auto p : parts) h = splitmix64(h ^ splitmix64(p));
    return h;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gaussian(std::mt19937_64& rng, double sigma) {
    if (sigma == 0.0) return 0.0;
    return std::normal_distribution<double>(0.0, sigma)(rng);
}

inline double magnitude_of(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

// Random direction scaled to `length`: a sign for scalars, a point on the
// sphere for vectors.
inline Vec3 random_direction(std::mt19937_64& rng, int arity, double length) {
    if (arity == 1) return {std::bernoulli_distribution(0.5)(rng) ? length : -length, 0.0, 0.0};
    Vec3 v{};
    double norm = 0.0;
    do {
        for (auto& c : v) c = std::normal_distribution<double>(0.0, 1.0)(rng);
        norm = magnitude_of(v);
    } while (norm == 0.0);
    for (auto& c : v) c *= length / norm;
    return v;
}

enum Stream : std::uint64_t {
    kStreamId = 1,
    kStreamShared,
    kStreamPrivateTi,
    kStreamDti,
    kStreamDtiOffset,
    kStreamSkew,
    kStreamObserve,
};

} // namespace detail

// ---------------------------------------------------------------------------
// Latent signals
// ---------------------------------------------------------------------------

/// Continuous-time ambient signal, piecewise linear between knots. Scalar
/// signals keep their value in component 0.
class LatentSignal {
public:
    LatentSignal(int arity, std::vector<double> knot_t, std::vector<Vec3> knot_v,
                 std::vector<double> event_times = {})
        : arity_(arity),
          knot_t_(std::move(knot_t)),
          knot_v_(std::move(knot_v)),
          event_times_(std::move(event_times)) {}

    int arity() const noexcept { return arity_; }
    const std::vector<double>& knots() const noexcept { return knot_t_; }
    const std::vector<double>& event_times() const noexcept { return event_times_; }
    double duration_ms() const noexcept { return knot_t_.back(); }

    /// Value at time t (ms), held constant outside the knot span.
    Vec3 at(double t) const {
        if (t <= knot_t_.front()) return knot_v_.front();
        if (t >= knot_t_.back()) return knot_v_.back();
        const auto hi = static_cast<std::size_t>(
            std::upper_bound(knot_t_.begin(), knot_t_.end(), t) - knot_t_.begin());
        const auto lo = hi - 1;
        const double w = (t - knot_t_[lo]) / (knot_t_[hi] - knot_t_[lo]);
        Vec3 out{};
        for (int c = 0; c < 3; ++c) out[c] = knot_v_[lo][c] + w * (knot_v_[hi][c] - knot_v_[lo][c]);
        return out;
    }

    /// wa * a + wb * b, exact on the union of both knot sets.
    static LatentSignal mix(const LatentSignal& a, double wa, const LatentSignal& b, double wb) {
        std::vector<double> t;
        std::merge(a.knot_t_.begin(), a.knot_t_.end(), b.knot_t_.begin(), b.knot_t_.end(),
                   std::back_inserter(t));
        t.erase(std::unique(t.begin(), t.end()), t.end());
        std::vector<Vec3> v;
        v.reserve(t.size());
        for (double x : t) {
            const auto va = a.at(x);
            const auto vb = b.at(x);
            v.push_back({wa * va[0] + wb * vb[0], wa * va[1] + wb * vb[1], wa * va[2] + wb * vb[2]});
        }
        return LatentSignal(a.arity_, std::move(t), std::move(v));
    }

    LatentSignal shifted(const Vec3& offset) const {
        auto v = knot_v_;
        for (auto& x : v)
            for (int c = 0; c < 3; ++c) x[c] += offset[c];
        return LatentSignal(arity_, knot_t_, std::move(v), event_times_);
    }

private:
    int arity_;
    std::vector<double> knot_t_;
    std::vector<Vec3> knot_v_;
    std::vector<double> event_times_;
};

/// Draws an environment signal over [0, duration_ms]: base level plus a
/// random per-axis offset, a linear drift in a random direction, and
/// Poisson-arriving triangular events of fixed magnitude and random
/// direction. Deterministic in `seed`.
inline LatentSignal generate_latent(const SensorProfile& profile, SensorKind sensor,
                                    double duration_ms, std::uint64_t seed) {
    if (!(duration_ms > 0.0)) throw ConfigError("latent duration must be > 0");
    const int arity = sensor_info(sensor).arity;
    std::mt19937_64 rng(seed);

    Vec3 base{};
    base[arity == 1 ? 0 : 2] = profile.base_level;
    for (int c = 0; c < arity; ++c) base[c] += detail::gaussian(rng, profile.level_spread);
    const Vec3 drift = detail::random_direction(rng, arity, profile.drift_rate);

    struct Event {
        double start;
        Vec3 peak;
    };
    std::vector<Event> events;
    if (profile.event_rate > 0.0) {
        std::exponential_distribution<double> gap(profile.event_rate / 1000.0);
        for (double t = gap(rng); t < duration_ms; t += gap(rng))
            events.push_back({t, detail::random_direction(rng, arity, profile.event_magnitude)});
    }

    const double width = profile.event_width_ms;
    std::vector<double> knots{0.0, duration_ms};
    for (const auto& e : events)
        for (double k : {e.start, e.start + 0.5 * width, e.start + width})
            if (k < duration_ms) knots.push_back(k);
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

    std::vector<Vec3> values;
    values.reserve(knots.size());
    for (double t : knots) {
        Vec3 v = base;
        for (int c = 0; c < 3; ++c) v[c] += drift[c] * t / 1000.0;
        for (const auto& e : events) {
            const double u = (t - e.start) / width;
            if (u <= 0.0 || u >= 1.0) continue;
            const double tri = u < 0.5 ? 2.0 * u : 2.0 * (1.0 - u);
            for (int c = 0; c < 3; ++c) v[c] += tri * e.peak[c];
        }
        values.push_back(v);
    }

    std::vector<double> times;
    times.reserve(events.size());
    for (const auto& e : events) times.push_back(e.start);
    return LatentSignal(arity, std::move(knots), std::move(values), std::move(times));
}

// ---------------------------------------------------------------------------
// Observation
// ---------------------------------------------------------------------------

struct ObserveTiming {
    double start_offset_ms = 0.0;  // device clock start relative to the latent's t = 0
    double jitter_ms = 0.0;        // uniform delay added to each candidate instant
};

/// Samples the latent the way a change-triggered mobile sensor delivers it:
/// candidate instants every 1/max_rate_hz (plus jitter), Gaussian read noise,
/// quantization, and a sample is emitted only when the quantized reading
/// differs from the previously emitted one.
inline std::vector<Sample> observe(const LatentSignal& latent, const SensorProfile& profile,
                                   double duration_ms, double max_rate_hz, std::uint64_t seed,
                                   ObserveTiming timing = {}) {
    if (!(max_rate_hz > 0.0)) throw ConfigError("max_rate_hz must be > 0");
    const double period = 1000.0 / max_rate_hz;
    const double jitter = std::min(timing.jitter_ms, 0.5 * period);
    const int arity = latent.arity();
    std::mt19937_64 rng(seed);

    auto quantize = [step = profile.quantization_step](double v) {
        return step > 0.0 ? std::round(v / step) * step : v;
    };

    std::vector<Sample> out;
    Vec3 last{};
    for (std::size_t k = 0;; ++k) {
        const double nominal = static_cast<double>(k) * period;
        if (nominal >= duration_ms) break;
        const double t = nominal + (jitter > 0.0 ? detail::uniform(rng, 0.0, jitter) : 0.0);
        if (t >= duration_ms) break;
        const Vec3 truth = latent.at(timing.start_offset_ms + t);
        Vec3 v{};
        for (int c = 0; c < arity; ++c)
            v[c] = quantize(truth[c] + detail::gaussian(rng, profile.observation_noise_sigma));
        if (!out.empty() && v == last) continue;
        last = v;
        if (arity == 1)
            out.push_back({t, v[0]});
        else
            out.push_back({t, v});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Transactions and datasets
// ---------------------------------------------------------------------------

/// Wall-clock spacing between consecutive transactions of the same sensor.
inline constexpr std::int64_t kTransactionSpacingMs = 60000;

inline std::size_t location_index(const SynthScenario& s, std::size_t index) {
    return index % s.locations.size();
}

inline TransactionId synth_transaction_id(const SynthScenario& s, SensorKind sensor,
                                          std::size_t index) {
    std::mt19937_64 rng(detail::derive_seed(
        s.seed, {detail::kStreamId, sensor_info(sensor).code, static_cast<std::uint64_t>(index)}));
    TransactionId::Bytes b{};
    for (auto& x : b) x = static_cast<std::uint8_t>(rng() >> 56);
    return TransactionId(b);
}

/// Recording of `role` for transaction `index` of `sensor`. TT observes the
/// shared latent; TI observes it mixed with a private latent according to
/// co_location_correlation; DTI observes the shared latent offset (same
/// room) or an independent latent. Every device starts within the clock
/// skew of the transaction start.
inline SensorTrace synthesize_recording(const SynthScenario& s, SensorKind sensor,
                                        std::size_t index, DeviceRole role, TransactionId id) {
    const auto code = sensor_info(sensor).code;
    const auto idx = static_cast<std::uint64_t>(index);
    const auto& loc = s.locations[location_index(s, index)];
    const auto& profile = loc.profile(sensor);
    const double span = s.recording_ms + s.clock_skew_ms;
    auto seed = [&](std::uint64_t stream, std::uint64_t extra = 0) {
        return detail::derive_seed(s.seed, {stream, code, idx, extra});
    };

    const auto shared = generate_latent(profile, sensor, span, seed(detail::kStreamShared));
    auto latent = [&]() -> LatentSignal {
        switch (role) {
        case DeviceRole::TT: return shared;
        case DeviceRole::TI: {
            const double rho = s.co_location_correlation;
            if (rho == 1.0) return shared;
            const auto priv = generate_latent(profile, sensor, span, seed(detail::kStreamPrivateTi));
            return LatentSignal::mix(shared, rho, priv, 1.0 - rho);
        }
        case DeviceRole::DTI: break;
        }
        if (s.dti_distance_mode == DtiDistanceMode::DifferentLatent)
            return generate_latent(profile, sensor, span, seed(detail::kStreamDti));
        std::mt19937_64 rng(seed(detail::kStreamDtiOffset));
        Vec3 offset{};
        for (int c = 0; c < sensor_info(sensor).arity; ++c)
            offset[c] = detail::gaussian(rng, profile.level_spread);
        return shared.shifted(offset);
    }();

    const auto r = static_cast<std::uint64_t>(role);
    std::mt19937_64 skew_rng(seed(detail::kStreamSkew, r));
    const double start =
        s.clock_skew_ms > 0.0 ? detail::uniform(skew_rng, 0.0, s.clock_skew_ms) : 0.0;

    auto samples = observe(latent, profile, s.recording_ms, sensor_info(sensor).max_rate_hz,
                           seed(detail::kStreamObserve, r), {start, s.timing_jitter_ms});
    const std::int64_t epoch = s.epoch_ms + static_cast<std::int64_t>(index) * kTransactionSpacingMs +
                               static_cast<std::int64_t>(code) * 1000 +
                               static_cast<std::int64_t>(std::llround(start));
    return SensorTrace(id, role, sensor, loc.name, epoch, std::move(samples));
}

inline TransactionTriple synthesize_transaction(const SynthScenario& s, SensorKind sensor,
                                                std::size_t index) {
    const auto id = synth_transaction_id(s, sensor, index);
    return validate_triple(synthesize_recording(s, sensor, index, DeviceRole::TT, id),
                           synthesize_recording(s, sensor, index, DeviceRole::TI, id),
                           synthesize_recording(s, sensor, index, DeviceRole::DTI, id));
}

/// All transactions of the scenario, grouped by sensor in scenario order.
/// Transactions rotate through the locations. Identical for any worker count.
inline std::vector<TransactionTriple> generate_dataset(const SynthScenario& s, unsigned workers = 0) {
    validate(s);
    const std::size_t per = s.n_transactions;
    const std::size_t total = per * s.sensors.size();
    std::vector<std::optional<TransactionTriple>> slots(total);
    const unsigned w = workers ? workers : detail::worker_count(total);
    detail::parallel_for(total, w, [&](std::size_t k, unsigned) {
        slots[k] = synthesize_transaction(s, s.sensors[k / per], k % per);
    });
    std::vector<TransactionTriple> out;
    out.reserve(total);
    for (auto& t : slots) out.push_back(std::move(*t));
    return out;
}

// ---------------------------------------------------------------------------
// Defaults
// ---------------------------------------------------------------------------

/// Resting-state behaviour of each sensor on a handset lying on a table.
/// Chosen so that 500 ms windows yield a few dozen change-triggered samples
/// and the terminal/instrument similarity is dominated by read noise, the
/// regime in which ambient sensing fails to separate nearby from distant
/// devices.
inline SensorProfile default_profile(SensorKind sensor) {
    switch (sensor) {
    case SensorKind::Accelerometer: return {9.81, 0.08, 0.1, 12.0, 0.15, 30.0, 0.03, 0.0096};
    case SensorKind::Gravity: return {9.80665, 2e-6, 4e-6, 4.0, 4e-6, 60.0, 2e-6, 1e-7};
    case SensorKind::Gyroscope: return {0.0, 0.01, 0.02, 15.0, 0.03, 20.0, 0.004, 0.0011};
    case SensorKind::Light: return {300.0, 25.0, 20.0, 3.0, 30.0, 80.0, 2.0, 1.0};
    case SensorKind::LinearAcceleration: return {0.0, 0.03, 0.05, 12.0, 0.12, 30.0, 0.03, 0.001};
    case SensorKind::MagneticField: return {45.0, 3.0, 1.0, 2.0, 2.0, 100.0, 0.5, 0.06};
    case SensorKind::RotationVector: return {0.6, 0.01, 0.005, 5.0, 0.003, 50.0, 5e-4, 1e-6};
    }
    return {};
}

/// Four campus-like locations; they differ in lighting and magnetic
/// background, the other sensors behave alike.
inline std::vector<LocationProfile> default_locations() {
    struct Site {
        const char* name;
        double light;
        double magnetic;
    };
    static constexpr Site sites[] = {
        {"library", 420.0, 44.0},
        {"cafeteria", 650.0, 51.0},
        {"lecture_hall", 280.0, 39.0},
        {"office", 180.0, 57.0},
    };
    std::vector<LocationProfile> out;
    for (const auto& site : sites) {
        LocationProfile loc{site.name, {}};
        for (auto sensor : kAllSensors) loc.sensors[sensor] = default_profile(sensor);
        loc.sensors[SensorKind::Light].base_level = site.light;
        loc.sensors[SensorKind::MagneticField].base_level = site.magnetic;
        out.push_back(std::move(loc));
    }
    return out;
}

/// 1000 transactions per sensor over four locations, distant device in the
/// same room.
inline SynthScenario paper_like_scenario() {
    SynthScenario s;
    s.n_transactions = 1000;
    s.sensors.assign(kAllSensors.begin(), kAllSensors.end());
    s.locations = default_locations();
    s.dti_distance_mode = DtiDistanceMode::SameRoomOffset;
    s.co_location_correlation = 0.6;
    s.seed = 20170101;
    return s;
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

inline std::string_view mode_name(DtiDistanceMode m) {
    return m == DtiDistanceMode::SameRoomOffset ? "same_room_offset" : "different_latent";
}

inline nlohmann::ordered_json scenario_to_json(const SynthScenario& s) {
    using nlohmann::ordered_json;
    ordered_json j;
    j["n_transactions"] = s.n_transactions;
    ordered_json sensors = ordered_json::array();
    for (auto k : s.sensors) sensors.push_back(std::string(sensor_name(k)));
    j["sensors"] = sensors;
    j["dti_distance_mode"] = std::string(mode_name(s.dti_distance_mode));
    j["co_location_correlation"] = s.co_location_correlation;
    j["seed"] = s.seed;
    j["recording_ms"] = s.recording_ms;
    j["clock_skew_ms"] = s.clock_skew_ms;
    j["timing_jitter_ms"] = s.timing_jitter_ms;
    j["epoch_ms"] = s.epoch_ms;
    ordered_json locs = ordered_json::array();
    for (const auto& loc : s.locations) {
        ordered_json l;
        l["name"] = loc.name;
        ordered_json ps = ordered_json::object();
        for (auto k : kAllSensors) {
            const auto it = loc.sensors.find(k);
            if (it == loc.sensors.end()) continue;
            const auto& p = it->second;
            ps[std::string(sensor_name(k))] = {
                {"base_level", p.base_level},
                {"level_spread", p.level_spread},
                {"drift_rate", p.drift_rate},
                {"event_rate", p.event_rate},
                {"event_magnitude", p.event_magnitude},
                {"event_width_ms", p.event_width_ms},
                {"observation_noise_sigma", p.observation_noise_sigma},
                {"quantization_step", p.quantization_step},
            };
        }
        l["sensors"] = ps;
        locs.push_back(l);
    }
    j["locations"] = locs;
    return j;
}

inline SynthScenario scenario_from_json(const nlohmann::json& j) {
    try {
        SynthScenario s;
        s.n_transactions = j.at("n_transactions").get<std::size_t>();
        for (const auto& name : j.at("sensors")) {
            const auto k = parse_sensor(name.get<std::string>());
            if (!k) throw ConfigError("unknown sensor '" + name.get<std::string>() + "'");
            s.sensors.push_back(*k);
        }
        const auto mode = j.at("dti_distance_mode").get<std::string>();
        if (mode == "same_room_offset")
            s.dti_distance_mode = DtiDistanceMode::SameRoomOffset;
        else if (mode == "different_latent")
            s.dti_distance_mode = DtiDistanceMode::DifferentLatent;
        else
            throw ConfigError("unknown dti_distance_mode '" + mode + "'");
        s.co_location_correlation = j.at("co_location_correlation").get<double>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.recording_ms = j.value("recording_ms", s.recording_ms);
        s.clock_skew_ms = j.value("clock_skew_ms", s.clock_skew_ms);
        s.timing_jitter_ms = j.value("timing_jitter_ms", s.timing_jitter_ms);
        s.epoch_ms = j.value("epoch_ms", s.epoch_ms);
        for (const auto& l : j.at("locations")) {
            LocationProfile loc{l.at("name").get<std::string>(), {}};
            for (const auto& [name, p] : l.at("sensors").items()) {
                const auto k = parse_sensor(name);
                if (!k) throw ConfigError("unknown sensor '" + name + "' in location " + loc.name);
                SensorProfile sp;
                sp.base_level = p.at("base_level").get<double>();
                sp.level_spread = p.value("level_spread", 0.0);
                sp.drift_rate = p.at("drift_rate").get<double>();
                sp.event_rate = p.at("event_rate").get<double>();
                sp.event_magnitude = p.at("event_magnitude").get<double>();
                sp.event_width_ms = p.value("event_width_ms", sp.event_width_ms);
                sp.observation_noise_sigma = p.at("observation_noise_sigma").get<double>();
                sp.quantization_step = p.at("quantization_step").get<double>();
                loc.sensors[*k] = sp;
            }
            s.locations.push_back(std::move(loc));
        }
        validate(s);
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scenario: ") + e.what());
    }
}

inline SynthScenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    try {
        return scenario_from_json(j);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

} // namespace proxeval
