// Copyright 2026 The proxeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "proxeval/preprocess.hpp"

namespace proxeval {

enum class SimilarityMetric : std::uint8_t {
    MAE,                 // distance: accept when score <= threshold
    PearsonCorrelation,  // similarity: accept when score >= threshold
};

inline constexpr std::array<SimilarityMetric, 2> kAllMetrics{SimilarityMetric::MAE,
                                                             SimilarityMetric::PearsonCorrelation};

constexpr bool is_distance(SimilarityMetric m) { return m == SimilarityMetric::MAE; }

constexpr std::string_view metric_name(SimilarityMetric m) {
    return m == SimilarityMetric::MAE ? "MAE" : "Pearson";
}

constexpr std::string_view metric_slug(SimilarityMetric m) {
    return m == SimilarityMetric::MAE ? "mae" : "pearson";
}

inline std::optional<SimilarityMetric> parse_metric(std::string_view text) {
    const auto key = detail::fold_name(text);
    if (key == "mae") return SimilarityMetric::MAE;
    if (key == "pearson" || key == "corr" || key == "correlation" || key == "pearsoncorrelation")
        return SimilarityMetric::PearsonCorrelation;
    return std::nullopt;
}

/// Which two series a score compares.
struct PairRef {
    TransactionId a_id;
    DeviceRole a_role = DeviceRole::TI;
    TransactionId b_id;
    DeviceRole b_role = DeviceRole::TT;

    friend bool operator==(const PairRef&, const PairRef&) = default;
};

struct SimilarityScore {
    SimilarityMetric metric = SimilarityMetric::MAE;
    double value = 0.0;
    PairRef pair;
};

namespace detail {

inline void check_lengths(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size())
        throw LengthMismatch("series lengths differ: " + std::to_string(u.size()) + " vs " +
                             std::to_string(v.size()));
    if (u.empty()) throw EmptySeries("similarity of empty series");
}

inline double mean(std::span<const double> u) {
    double sum = 0.0;
    for (double x : u) sum += x;
    return sum / static_cast<double>(u.size());
}

inline bool is_constant(std::span<const double> u) {
    return std::all_of(u.begin(), u.end(), [&](double x) { return x == u.front(); });
}

} // namespace detail

/// (1/N) * sum |u_j - v_j|
inline double mean_absolute_error(std::span<const double> u, std::span<const double> v) {
    detail::check_lengths(u, v);
    double sum = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) sum += std::abs(u[j] - v[j]);
    return sum / static_cast<double>(u.size());
}

/// Population covariance (divides by N).
inline double covariance(std::span<const double> u, std::span<const double> v) {
    detail::check_lengths(u, v);
    const double mu = detail::mean(u);
    const double mv = detail::mean(v);
    double sum = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) sum += (u[j] - mu) * (v[j] - mv);
    return sum / static_cast<double>(u.size());
}

/// Pearson correlation with population statistics, clamped to [-1, 1];
/// nullopt when either input is constant. Lengths must already match.
inline std::optional<double> try_pearson_correlation(std::span<const double> u,
                                                     std::span<const double> v) {
    if (u.size() < 2 || detail::is_constant(u) || detail::is_constant(v)) return std::nullopt;
    const double n = static_cast<double>(u.size());
    const double mu = detail::mean(u);
    const double mv = detail::mean(v);
    double suv = 0.0, suu = 0.0, svv = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        const double du = u[j] - mu;
        const double dv = v[j] - mv;
        suv += du * dv;
        suu += du * du;
        svv += dv * dv;
    }
    const double r = (suv / n) / (std::sqrt(suu / n) * std::sqrt(svv / n));
    return std::clamp(r, -1.0, 1.0);
}

/// Throwing form of try_pearson_correlation: constant inputs have no
/// defined correlation and raise DegenerateSeries.
inline double pearson_correlation(std::span<const double> u, std::span<const double> v) {
    detail::check_lengths(u, v);
    if (u.size() < 2) throw DegenerateSeries("correlation needs at least 2 points");
    const auto r = try_pearson_correlation(u, v);
    if (!r) throw DegenerateSeries("correlation of a constant series is undefined");
    return *r;
}

inline double similarity(SimilarityMetric metric, std::span<const double> u,
                         std::span<const double> v) {
    return metric == SimilarityMetric::MAE ? mean_absolute_error(u, v) : pearson_correlation(u, v);
}

inline PairRef pair_of(const ScalarSeries& u, const ScalarSeries& v) {
    return {u.origin.id, u.origin.role, v.origin.id, v.origin.role};
}

inline SimilarityScore mae(const ScalarSeries& u, const ScalarSeries& v) {
    return {SimilarityMetric::MAE, mean_absolute_error(u.values, v.values), pair_of(u, v)};
}

inline SimilarityScore pearson(const ScalarSeries& u, const ScalarSeries& v) {
    return {SimilarityMetric::PearsonCorrelation, pearson_correlation(u.values, v.values),
            pair_of(u, v)};
}

inline double covariance(const ScalarSeries& u, const ScalarSeries& v) {
    return covariance(u.values, v.values);
}

inline SimilarityScore score(SimilarityMetric metric, const ScalarSeries& u, const ScalarSeries& v) {
    return metric == SimilarityMetric::MAE ? mae(u, v) : pearson(u, v);
}

} // namespace proxeval
