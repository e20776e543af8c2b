// Copyright 2026 The proxeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "proxeval/parallel.hpp"
#include "proxeval/preprocess.hpp"
#include "proxeval/similarity.hpp"
#include "proxeval/trace.hpp"

namespace proxeval {

// ---------------------------------------------------------------------------
// Labels and counts
// ---------------------------------------------------------------------------

enum class PairLabel : std::uint8_t {
    GenuineMatch,  // (TI_i, TT_i)
    NonMatch,      // (TI_i, TT_j), i != j
    RelayPair,     // (DTI_i, TT_i)
};

constexpr bool is_positive(PairLabel label) { return label == PairLabel::GenuineMatch; }

struct ScoredPair {
    SimilarityScore score;
    PairLabel label = PairLabel::GenuineMatch;
};

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    std::size_t positives() const noexcept { return tp + fn; }
    std::size_t negatives() const noexcept { return tn + fp; }

    double tpr() const noexcept { return positives() ? double(tp) / double(positives()) : 0.0; }
    double tnr() const noexcept { return negatives() ? double(tn) / double(negatives()) : 0.0; }
    double fpr() const noexcept { return 1.0 - tnr(); }
    double fnr() const noexcept { return 1.0 - tpr(); }

    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

constexpr bool accepts(SimilarityMetric metric, double score, double threshold) {
    return is_distance(metric) ? score <= threshold : score >= threshold;
}

inline ConfusionCounts confusion_at(std::span<const ScoredPair> scored, double threshold,
                                    SimilarityMetric metric) {
    ConfusionCounts c;
    for (const auto& p : scored) {
        const bool accepted = accepts(metric, p.score.value, threshold);
        if (is_positive(p.label))
            accepted ? ++c.tp : ++c.fn;
        else
            accepted ? ++c.fp : ++c.tn;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Pair scoring
// ---------------------------------------------------------------------------

/// Bookkeeping for one scoring run: every attempted pair is either scored or
/// excluded for one of the listed reasons.
struct EvalDiagnostics {
    std::size_t attempted = 0;
    std::size_t scored = 0;
    std::size_t too_few_samples = 0;
    std::size_t degenerate = 0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::vector<std::string> notes;  // first few exclusions, for humans

    std::size_t excluded() const noexcept { return too_few_samples + degenerate; }

    static constexpr std::size_t kMaxNotes = 20;

    bool wants_notes() const noexcept { return notes.size() < kMaxNotes; }

    void note(std::string text) {
        if (wants_notes()) notes.push_back(std::move(text));
    }
};

struct EvalScores {
    std::vector<ScoredPair> pairs;
    EvalDiagnostics diagnostics;
};

namespace detail {

enum class PairStatus : std::uint8_t { Scored, TooFewSamples, Degenerate };

struct PairResult {
    double value = 0.0;
    PairStatus status = PairStatus::Scored;
};

inline PairResult score_prepared(PairPreprocessor& pre, SimilarityMetric metric,
                                 std::span<const ScalarSample> a, std::span<const ScalarSample> b) {
    if (!pre.run(a, b)) return {0.0, PairStatus::TooFewSamples};
    if (metric == SimilarityMetric::MAE) return {mean_absolute_error(pre.first(), pre.second())};
    const auto r = try_pearson_correlation(pre.first(), pre.second());
    if (!r) return {0.0, PairStatus::Degenerate};
    return {*r};
}

inline std::vector<ScalarSample> prepared(const SensorTrace& t) {
    return truncate_window(scalarize(t));
}

inline std::vector<const TransactionTriple*> select(std::span<const TransactionTriple> triples,
                                                    SensorKind sensor) {
    std::vector<const TransactionTriple*> out;
    for (const auto& t : triples)
        if (t.sensor() == sensor) out.push_back(&t);
    return out;
}

inline void record(EvalDiagnostics& d, std::vector<ScoredPair>& out, const PairResult& r,
                   SimilarityMetric metric, PairLabel label, const SensorTrace& a,
                   const SensorTrace& b) {
    ++d.attempted;
    switch (r.status) {
    case PairStatus::Scored:
        ++d.scored;
        is_positive(label) ? ++d.positives : ++d.negatives;
        out.push_back({{metric, r.value, {a.id(), a.role(), b.id(), b.role()}}, label});
        return;
    case PairStatus::TooFewSamples:
        ++d.too_few_samples;
        if (d.wants_notes()) d.note("too few samples: " + a.describe() + " vs " + b.describe());
        return;
    case PairStatus::Degenerate:
        ++d.degenerate;
        if (d.wants_notes()) d.note("constant series: " + a.describe() + " vs " + b.describe());
        return;
    }
}

} // namespace detail

/// Proximity pairing: every TI is scored against every TT of the same sensor.
/// Pairs on the diagonal are GenuineMatch, all others NonMatch. Pairs that
/// fail pre-processing or are constant (correlation only) are excluded and
/// counted in the diagnostics. Output order is row-major in (i, j).
inline EvalScores score_eval1(std::span<const TransactionTriple> triples, SensorKind sensor,
                              SimilarityMetric metric, unsigned workers = 0) {
    const auto sel = detail::select(triples, sensor);
    const std::size_t n = sel.size();
    if (n < 2)
        throw InsufficientData(std::string(sensor_name(sensor)) + ": " + std::to_string(n) +
                               " transaction(s), need at least 2");

    std::vector<std::vector<ScalarSample>> ti(n), tt(n);
    for (std::size_t i = 0; i < n; ++i) {
        ti[i] = detail::prepared(sel[i]->ti());
        tt[i] = detail::prepared(sel[i]->tt());
    }

    std::vector<detail::PairResult> grid(n * n);
    const unsigned w = workers ? workers : detail::worker_count(n);
    std::vector<PairPreprocessor> scratch(w);
    detail::parallel_for(n, w, [&](std::size_t i, unsigned worker) {
        for (std::size_t j = 0; j < n; ++j)
            grid[i * n + j] = detail::score_prepared(scratch[worker], metric, ti[i], tt[j]);
    });

    std::size_t usable = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (grid[i * n + i].status == detail::PairStatus::Scored) ++usable;
    if (usable < 2)
        throw InsufficientData(std::string(sensor_name(sensor)) + ": only " +
                               std::to_string(usable) + " transaction(s) survive pre-processing");

    EvalScores out;
    out.pairs.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const auto label = i == j ? PairLabel::GenuineMatch : PairLabel::NonMatch;
            detail::record(out.diagnostics, out.pairs, grid[i * n + j], metric, label,
                           sel[i]->ti(), sel[j]->tt());
        }
    }
    return out;
}

/// Relay inclusion: per transaction, (TI_i, TT_i) is GenuineMatch and
/// (DTI_i, TT_i) is RelayPair. Output order: genuine then relay, per i.
inline EvalScores score_eval2(std::span<const TransactionTriple> triples, SensorKind sensor,
                              SimilarityMetric metric) {
    const auto sel = detail::select(triples, sensor);
    if (sel.size() < 2)
        throw InsufficientData(std::string(sensor_name(sensor)) + ": " +
                               std::to_string(sel.size()) + " transaction(s), need at least 2");

    PairPreprocessor pre;
    EvalScores out;
    out.pairs.reserve(2 * sel.size());
    std::size_t usable = 0;
    for (const auto* t : sel) {
        const auto tt = detail::prepared(t->tt());
        const auto genuine = detail::score_prepared(pre, metric, detail::prepared(t->ti()), tt);
        const auto relay = detail::score_prepared(pre, metric, detail::prepared(t->dti()), tt);
        if (genuine.status == detail::PairStatus::Scored) ++usable;
        detail::record(out.diagnostics, out.pairs, genuine, metric, PairLabel::GenuineMatch,
                       t->ti(), t->tt());
        detail::record(out.diagnostics, out.pairs, relay, metric, PairLabel::RelayPair, t->dti(),
                       t->tt());
    }
    if (usable < 2)
        throw InsufficientData(std::string(sensor_name(sensor)) + ": only " +
                               std::to_string(usable) + " transaction(s) survive pre-processing");
    return out;
}

// ---------------------------------------------------------------------------
// Threshold sweep
// ---------------------------------------------------------------------------

inline constexpr std::size_t kSweepPoints = 100;

struct SweepResult {
    SimilarityMetric metric = SimilarityMetric::MAE;
    std::array<double, kSweepPoints> thresholds{};
    std::array<double, kSweepPoints> fpr{};
    std::array<double, kSweepPoints> fnr{};
    double eer = 0.0;
    double optimum_threshold = 0.0;
    ConfusionCounts counts_at_optimum;
};

/// Evaluates 100 evenly spaced thresholds (observed [min, max] for MAE,
/// [-1, 1] for correlation) and locates the equal error rate.
///
/// The EER is read where FPR - FNR changes sign, by linear interpolation
/// between the two grid points that bracket the change. When grid points hit
/// FPR = FNR exactly the optimum threshold is the middle of that run. Without
/// any sign change the grid point with the smallest |FPR - FNR| is used.
inline SweepResult sweep(std::span<const ScoredPair> scored, SimilarityMetric metric) {
    std::vector<double> pos, neg;
    for (const auto& p : scored) (is_positive(p.label) ? pos : neg).push_back(p.score.value);
    if (pos.empty() || neg.empty())
        throw DegenerateLabels("sweep needs both positive and negative pairs (got " +
                               std::to_string(pos.size()) + " positive, " +
                               std::to_string(neg.size()) + " negative)");
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());

    double lo = -1.0, hi = 1.0;
    if (is_distance(metric)) {
        lo = std::min(pos.front(), neg.front());
        hi = std::max(pos.back(), neg.back());
    }

    // Number of values in sorted v accepted at threshold t.
    auto accepted = [metric](const std::vector<double>& v, double t) -> std::size_t {
        if (is_distance(metric))
            return static_cast<std::size_t>(std::upper_bound(v.begin(), v.end(), t) - v.begin());
        return static_cast<std::size_t>(v.end() - std::lower_bound(v.begin(), v.end(), t));
    };
    auto counts = [&](double t) {
        ConfusionCounts c;
        c.tp = accepted(pos, t);
        c.fn = pos.size() - c.tp;
        c.fp = accepted(neg, t);
        c.tn = neg.size() - c.fp;
        return c;
    };

    SweepResult r;
    r.metric = metric;
    std::array<double, kSweepPoints> diff{};
    for (std::size_t k = 0; k < kSweepPoints; ++k) {
        const double t = k + 1 == kSweepPoints
                             ? hi
                             : lo + (hi - lo) * static_cast<double>(k) / double(kSweepPoints - 1);
        const auto c = counts(t);
        r.thresholds[k] = t;
        r.fpr[k] = c.fpr();
        r.fnr[k] = c.fnr();
        diff[k] = r.fpr[k] - r.fnr[k];
    }

    // FPR - FNR is monotone along the grid, so zeros form one run and a
    // strict sign change happens at most once.
    std::optional<std::size_t> first_zero, last_zero, cross;
    for (std::size_t k = 0; k < kSweepPoints; ++k) {
        if (diff[k] == 0.0) {
            if (!first_zero) first_zero = k;
            last_zero = k;
        } else if (k + 1 < kSweepPoints && diff[k + 1] != 0.0 && (diff[k] > 0.0) != (diff[k + 1] > 0.0)) {
            cross = k;
        }
    }
    if (first_zero) {
        r.optimum_threshold = 0.5 * (r.thresholds[*first_zero] + r.thresholds[*last_zero]);
        r.eer = r.fpr[*first_zero];
    } else if (cross) {
        const std::size_t k = *cross;
        const double f = diff[k] / (diff[k] - diff[k + 1]);
        r.optimum_threshold = r.thresholds[k] + f * (r.thresholds[k + 1] - r.thresholds[k]);
        r.eer = r.fpr[k] + f * (r.fpr[k + 1] - r.fpr[k]);
    } else {
        std::size_t best = 0;
        for (std::size_t k = 1; k < kSweepPoints; ++k)
            if (std::abs(diff[k]) < std::abs(diff[best])) best = k;
        r.optimum_threshold = r.thresholds[best];
        r.eer = 0.5 * (r.fpr[best] + r.fnr[best]);
    }
    r.counts_at_optimum = counts(r.optimum_threshold);
    return r;
}

// ---------------------------------------------------------------------------
// Curve export
// ---------------------------------------------------------------------------

struct CurvePoint {
    double threshold;
    double fpr;
    double fnr;

    friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

inline std::vector<CurvePoint> curve_points(const SweepResult& r) {
    std::vector<CurvePoint> out;
    out.reserve(kSweepPoints);
    for (std::size_t k = 0; k < kSweepPoints; ++k) out.push_back({r.thresholds[k], r.fpr[k], r.fnr[k]});
    return out;
}

namespace detail {

inline std::string round_trip(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

/// CSV with header `threshold,fpr,fnr` and one row per grid threshold.
inline void curve_export(const SweepResult& r, std::ostream& os) {
    os << "threshold,fpr,fnr\n";
    for (const auto& p : curve_points(r))
        os << detail::round_trip(p.threshold) << ',' << detail::round_trip(p.fpr) << ','
           << detail::round_trip(p.fnr) << '\n';
}

inline std::string curve_export(const SweepResult& r) {
    std::ostringstream os;
    curve_export(r, os);
    return os.str();
}

inline std::vector<CurvePoint> parse_curve_csv(std::istream& is, const std::string& where = "curve") {
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(is, line) || line != "threshold,fpr,fnr")
        throw ParseError(where, 1, "expected header 'threshold,fpr,fnr'");
    std::vector<CurvePoint> out;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        CurvePoint p{};
        char extra = 0;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf%c", &p.threshold, &p.fpr, &p.fnr, &extra) != 3)
            throw ParseError(where, lineno, "expected three numeric fields");
        out.push_back(p);
    }
    return out;
}

} // namespace proxeval
