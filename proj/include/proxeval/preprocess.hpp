// Copyright 2026 The proxeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "proxeval/trace.hpp"

namespace proxeval {

/// Spacing of the common resampling grid.
inline constexpr double kGridStepMs = 10.0;

/// Upper bound on recording time for a contactless transaction.
inline constexpr double kTransactionWindowMs = 500.0;

struct ScalarSample {
    double t_ms;
    double value;

    friend bool operator==(const ScalarSample&, const ScalarSample&) = default;
};

struct SeriesOrigin {
    TransactionId id;
    DeviceRole role = DeviceRole::TT;
    SensorKind sensor = SensorKind::Accelerometer;
};

/// A trace collapsed to one value per grid point: values[k] is the signal at
/// k * kGridStepMs from the recording start.
struct ScalarSeries {
    std::vector<double> values;
    SeriesOrigin origin;

    std::size_t size() const noexcept { return values.size(); }
};

inline double magnitude(double x, double y, double z) { return std::sqrt(x * x + y * y + z * z); }

/// Vector sensors are reduced to their magnitude; Light passes through.
inline std::vector<ScalarSample> scalarize(const SensorTrace& trace) {
    std::vector<ScalarSample> out;
    out.reserve(trace.size());
    for (const auto& s : trace.samples()) {
        if (const auto* v = std::get_if<double>(&s.value)) {
            out.push_back({s.t_ms, *v});
        } else {
            const auto& xyz = std::get<Vec3>(s.value);
            out.push_back({s.t_ms, magnitude(xyz[0], xyz[1], xyz[2])});
        }
    }
    return out;
}

/// Samples beyond the transaction window are dropped (t_ms <= limit kept).
inline std::vector<ScalarSample> truncate_window(std::span<const ScalarSample> samples,
                                                 double limit_ms = kTransactionWindowMs) {
    const auto end = std::upper_bound(samples.begin(), samples.end(), limit_ms,
                                      [](double t, const ScalarSample& s) { return t < s.t_ms; });
    return {samples.begin(), end};
}

namespace detail {

inline std::size_t count_at_or_before(std::span<const ScalarSample> s, double t) {
    return static_cast<std::size_t>(
        std::upper_bound(s.begin(), s.end(), t,
                         [](double v, const ScalarSample& x) { return v < x.t_ms; }) -
        s.begin());
}

// Sizes of a and b after dropping samples later than the other side's last
// sample. Both inputs sorted.
inline std::pair<std::size_t, std::size_t> cross_truncated_sizes(std::span<const ScalarSample> a,
                                                                 std::span<const ScalarSample> b) {
    if (a.empty() || b.empty()) return {0, 0};
    return {count_at_or_before(a, b.back().t_ms), count_at_or_before(b, a.back().t_ms)};
}

// Number of grid points covered by sorted samples whose last time is last_t.
inline std::size_t grid_length(double last_t) {
    return static_cast<std::size_t>(std::floor(last_t / kGridStepMs)) + 1;
}

// Piecewise-linear interpolation of `samples` at grid points 0..n-1, holding
// the first/last value outside the sampled span.
inline void resample_into(std::span<const ScalarSample> samples, std::size_t n,
                          std::vector<double>& out) {
    out.resize(n);
    std::size_t seg = 0;  // samples[seg] is the last sample with t <= grid time
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * kGridStepMs;
        if (t <= samples.front().t_ms) {
            out[k] = samples.front().value;
            continue;
        }
        while (seg + 1 < samples.size() && samples[seg + 1].t_ms <= t) ++seg;
        if (seg + 1 == samples.size()) {
            out[k] = samples.back().value;
            continue;
        }
        const auto& lo = samples[seg];
        const auto& hi = samples[seg + 1];
        if (t == lo.t_ms) {
            out[k] = lo.value;
        } else {
            const double w = (t - lo.t_ms) / (hi.t_ms - lo.t_ms);
            out[k] = lo.value + w * (hi.value - lo.value);
        }
    }
}

} // namespace detail

/// Drops samples of each side recorded after the other side's last sample.
inline std::pair<std::vector<ScalarSample>, std::vector<ScalarSample>>
cross_truncate(std::span<const ScalarSample> a, std::span<const ScalarSample> b) {
    const auto [na, nb] = detail::cross_truncated_sizes(a, b);
    return {{a.begin(), a.begin() + static_cast<std::ptrdiff_t>(na)},
            {b.begin(), b.begin() + static_cast<std::ptrdiff_t>(nb)}};
}

/// Linear interpolation onto the 10 ms grid anchored at t = 0, spanning up to
/// the largest grid time not after the last sample. Grid points before the
/// first sample hold its value.
///
/// Throws TooFewSamples when fewer than two samples are supplied or the
/// samples do not reach the second grid point.
inline ScalarSeries resample(std::span<const ScalarSample> samples, SeriesOrigin origin = {}) {
    if (samples.size() < 2)
        throw TooFewSamples(std::to_string(samples.size()) + " sample(s) in " + origin.id.hex() +
                            "/" + std::string(role_name(origin.role)) + "; need at least 2");
    const auto n = detail::grid_length(samples.back().t_ms);
    if (n < 2)
        throw TooFewSamples("samples of " + origin.id.hex() + "/" +
                            std::string(role_name(origin.role)) + " end before " +
                            std::to_string(kGridStepMs) + " ms");
    ScalarSeries out;
    out.origin = origin;
    detail::resample_into(samples, n, out.values);
    return out;
}

/// Full pre-processing of one pair: scalarize, window-truncate,
/// cross-truncate, resample, then cut both series to the shorter length.
inline std::pair<ScalarSeries, ScalarSeries> preprocess_pair(const SensorTrace& a,
                                                             const SensorTrace& b) {
    if (a.sensor() != b.sensor())
        throw SensorMismatch(a.describe() + " and " + b.describe() + " record different sensors");
    const auto wa = truncate_window(scalarize(a));
    const auto wb = truncate_window(scalarize(b));
    const auto [ca, cb] = cross_truncate(wa, wb);
    auto sa = resample(ca, {a.id(), a.role(), a.sensor()});
    auto sb = resample(cb, {b.id(), b.role(), b.sensor()});
    const auto n = std::min(sa.size(), sb.size());
    sa.values.resize(n);
    sb.values.resize(n);
    return {std::move(sa), std::move(sb)};
}

/// Reusable buffers for scoring many pairs of already scalarized,
/// window-truncated traces without per-pair allocation. Produces exactly the
/// values preprocess_pair would.
class PairPreprocessor {
public:
    /// Returns false when either side has too few samples to resample.
    bool run(std::span<const ScalarSample> a, std::span<const ScalarSample> b) {
        const auto [na, nb] = detail::cross_truncated_sizes(a, b);
        if (na < 2 || nb < 2) return false;
        const auto ga = detail::grid_length(a[na - 1].t_ms);
        const auto gb = detail::grid_length(b[nb - 1].t_ms);
        if (ga < 2 || gb < 2) return false;
        const auto n = std::min(ga, gb);
        detail::resample_into(a.first(na), n, a_);
        detail::resample_into(b.first(nb), n, b_);
        return true;
    }

    std::span<const double> first() const noexcept { return a_; }
    std::span<const double> second() const noexcept { return b_; }

private:
    std::vector<double> a_;
    std::vector<double> b_;
};

} // namespace proxeval
