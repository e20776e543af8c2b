// Copyright 2026 The proxeval Authors
// SPDX-License-Identifier: Apache-2.0

// Fixture builders and hand-rolled random generators shared by the suites.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "proxeval/preprocess.hpp"
#include "proxeval/synth.hpp"
#include "proxeval/trace.hpp"

namespace proxeval::testing {

inline TransactionId id_from(std::uint64_t x) {
    TransactionId::Bytes b{};
    for (std::size_t i = 0; i < b.size(); ++i) b[b.size() - 1 - i] = static_cast<std::uint8_t>(x >> (8 * i));
    return TransactionId(b);
}

inline SensorTrace light_trace(TransactionId id, DeviceRole role,
                               const std::vector<std::pair<double, double>>& tv,
                               std::string location = "lab") {
    std::vector<Sample> s;
    for (const auto& [t, v] : tv) s.push_back({t, v});
    return SensorTrace(id, role, SensorKind::Light, std::move(location), 0, std::move(s));
}

inline SensorTrace vector_trace(TransactionId id, DeviceRole role, SensorKind sensor,
                                const std::vector<std::pair<double, Vec3>>& tv) {
    std::vector<Sample> s;
    for (const auto& [t, v] : tv) s.push_back({t, v});
    return SensorTrace(id, role, sensor, "lab", 0, std::move(s));
}

struct Rng {
    std::mt19937_64 g;
    explicit Rng(std::uint64_t seed) : g(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(g); }
    std::size_t index(std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(g);
    }
    double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(g); }
    bool coin() { return std::bernoulli_distribution(0.5)(g); }
};

inline std::vector<double> random_series(Rng& r, std::size_t n, double scale = 10.0) {
    std::vector<double> out(n);
    for (auto& x : out) x = r.uniform(-scale, scale);
    return out;
}

/// n samples at strictly increasing random times in [0, max_t].
inline std::vector<ScalarSample> random_samples(Rng& r, std::size_t n, double max_t) {
    std::vector<double> t(n);
    for (auto& x : t) x = r.uniform(0.0, max_t);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    std::vector<ScalarSample> out;
    for (double x : t) out.push_back({x, r.uniform(-5.0, 5.0)});
    return out;
}

inline SensorTrace random_light_trace(Rng& r, TransactionId id, DeviceRole role, std::size_t n,
                                      double max_t) {
    std::vector<std::pair<double, double>> tv;
    for (const auto& s : random_samples(r, n, max_t)) tv.push_back({s.t_ms, s.value});
    return light_trace(id, role, tv);
}

/// The given scenario with read noise, quantization, clock skew and jitter
/// switched off.
inline SynthScenario without_noise(SynthScenario s) {
    for (auto& loc : s.locations)
        for (auto& [sensor, p] : loc.sensors) {
            p.observation_noise_sigma = 0.0;
            p.quantization_step = 0.0;
        }
    s.clock_skew_ms = 0.0;
    s.timing_jitter_ms = 0.0;
    return s;
}

inline SynthScenario small_scenario(std::size_t n, std::vector<SensorKind> sensors,
                                    std::uint64_t seed = 7) {
    auto s = paper_like_scenario();
    s.n_transactions = n;
    s.sensors = std::move(sensors);
    s.seed = seed;
    return s;
}

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("proxeval-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

} // namespace proxeval::testing
