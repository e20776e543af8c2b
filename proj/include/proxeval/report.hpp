// Copyright 2026 The proxeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "proxeval/evaluation.hpp"
#include "proxeval/store.hpp"

namespace proxeval {

enum class EvalMethod : std::uint8_t { Eval1, Eval2 };

inline constexpr std::array<EvalMethod, 2> kAllEvals{EvalMethod::Eval1, EvalMethod::Eval2};

constexpr std::string_view eval_slug(EvalMethod e) {
    return e == EvalMethod::Eval1 ? "eval1" : "eval2";
}

inline std::optional<EvalMethod> parse_eval(std::string_view text) {
    if (text == "eval1") return EvalMethod::Eval1;
    if (text == "eval2") return EvalMethod::Eval2;
    return std::nullopt;
}

/// One (sensor, metric) line of a summary CSV.
struct SummaryRow {
    SensorKind sensor = SensorKind::Accelerometer;
    SimilarityMetric metric = SimilarityMetric::MAE;
    double optimum_threshold = 0.0;
    double eer = 0.0;
    ConfusionCounts counts;
};

inline SummaryRow summary_row(SensorKind sensor, const SweepResult& r) {
    return {sensor, r.metric, r.optimum_threshold, r.eer, r.counts_at_optimum};
}

inline constexpr std::string_view kSummaryHeader = "sensor,metric,optimum_threshold,eer,tp,tn,fp,fn";

inline void write_summary_csv(std::ostream& os, std::span<const SummaryRow> rows) {
    os << kSummaryHeader << '\n';
    for (const auto& r : rows)
        os << sensor_slug(r.sensor) << ',' << metric_slug(r.metric) << ','
           << detail::round_trip(r.optimum_threshold) << ',' << detail::round_trip(r.eer) << ','
           << r.counts.tp << ',' << r.counts.tn << ',' << r.counts.fp << ',' << r.counts.fn << '\n';
}

/// Sensor and metric columns accept any spelling parse_sensor/parse_metric do.
inline std::vector<SummaryRow> read_summary_csv(std::istream& is, const std::string& where = "summary") {
    std::string line;
    if (!std::getline(is, line) || line != kSummaryHeader)
        throw ParseError(where, 1, "expected header '" + std::string(kSummaryHeader) + "'");
    std::vector<SummaryRow> out;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto f = detail::csv_split(line);
            if (f.size() != 8) throw detail::SchemaError{"expected 8 fields"};
            SummaryRow r;
            const auto sensor = parse_sensor(f[0]);
            if (!sensor) throw detail::SchemaError{"unknown sensor '" + f[0] + "'"};
            const auto metric = parse_metric(f[1]);
            if (!metric) throw detail::SchemaError{"unknown metric '" + f[1] + "'"};
            r.sensor = *sensor;
            r.metric = *metric;
            r.optimum_threshold = detail::csv_double(f[2], "optimum_threshold");
            r.eer = detail::csv_double(f[3], "eer");
            std::size_t* counts[] = {&r.counts.tp, &r.counts.tn, &r.counts.fp, &r.counts.fn};
            const char* names[] = {"tp", "tn", "fp", "fn"};
            for (std::size_t k = 0; k < 4; ++k) {
                const auto v = detail::csv_int(f[4 + k], names[k]);
                if (v < 0) throw detail::SchemaError{std::string(names[k]) + " is negative"};
                *counts[k] = static_cast<std::size_t>(v);
            }
            out.push_back(r);
        } catch (const detail::SchemaError& e) {
            throw ParseError(where, lineno, e.what);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Number formatting
// ---------------------------------------------------------------------------

/// Thresholds: 4 significant figures at or above 1, 3 decimals down to 1e-3,
/// exponent notation below (88.12, 2.961, 0.038, 1.00e-06).
inline std::string format_threshold(double x) {
    char buf[64];
    const double a = std::fabs(x);
    if (!std::isfinite(x)) {
        std::snprintf(buf, sizeof buf, "%g", x);
    } else if (a >= 1.0) {
        const int exponent = static_cast<int>(std::floor(std::log10(a)));
        int decimals = std::max(0, 3 - exponent);
        std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
        // Rounding can carry into a new leading digit (9.9996 -> 10.000).
        const double shown = std::fabs(std::strtod(buf, nullptr));
        if (decimals > 0 && shown >= std::pow(10.0, exponent + 1))
            std::snprintf(buf, sizeof buf, "%.*f", decimals - 1, x);
    } else if (a >= 1e-3 || a == 0.0) {
        std::snprintf(buf, sizeof buf, "%.3f", x);
    } else {
        std::snprintf(buf, sizeof buf, "%.2e", x);
    }
    return buf;
}

inline std::string format_rate(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", x);
    return buf;
}

// ---------------------------------------------------------------------------
// Table rendering
// ---------------------------------------------------------------------------

namespace detail {

// Column 0 left-aligned, the rest right-aligned, two spaces between columns.
inline std::string render_columns(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& r : rows) {
        width.resize(std::max(width.size(), r.size()), 0);
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    std::string out;
    for (const auto& r : rows) {
        std::string line;
        for (std::size_t c = 0; c < r.size(); ++c) {
            const auto pad = std::string(width[c] - r[c].size(), ' ');
            if (c == 0) {
                line += r[c] + pad;
            } else {
                line += "  " + pad + r[c];
            }
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + '\n';
    }
    return out;
}

inline std::vector<SensorKind> sensors_in_order(std::span<const SummaryRow> rows) {
    std::vector<SensorKind> out;
    for (const auto& r : rows)
        if (std::find(out.begin(), out.end(), r.sensor) == out.end()) out.push_back(r.sensor);
    return out;
}

inline const SummaryRow* find_row(std::span<const SummaryRow> rows, SensorKind s, SimilarityMetric m) {
    for (const auto& r : rows)
        if (r.sensor == s && r.metric == m) return &r;
    return nullptr;
}

} // namespace detail

/// Per-sensor optimum thresholds and EERs for MAE then correlation.
inline std::string render_threshold_table(std::span<const SummaryRow> rows) {
    std::vector<std::vector<std::string>> cells{
        {"Sensor", "MAE threshold", "MAE EER", "Corr threshold", "Corr EER"}};
    for (auto s : detail::sensors_in_order(rows)) {
        std::vector<std::string> line{std::string(sensor_name(s))};
        for (auto m : kAllMetrics) {
            if (const auto* r = detail::find_row(rows, s, m)) {
                line.push_back(format_threshold(r->optimum_threshold));
                line.push_back(format_rate(r->eer));
            } else {
                line.insert(line.end(), {"-", "-"});
            }
        }
        cells.push_back(std::move(line));
    }
    return detail::render_columns(cells);
}

/// Per-sensor TP/TN/FP/FN at the optimum threshold, MAE then correlation.
inline std::string render_breakdown_table(std::span<const SummaryRow> rows) {
    std::vector<std::vector<std::string>> cells{{"Sensor", "MAE TP", "MAE TN", "MAE FP", "MAE FN",
                                                 "Corr TP", "Corr TN", "Corr FP", "Corr FN"}};
    for (auto s : detail::sensors_in_order(rows)) {
        std::vector<std::string> line{std::string(sensor_name(s))};
        for (auto m : kAllMetrics) {
            if (const auto* r = detail::find_row(rows, s, m)) {
                for (auto v : {r->counts.tp, r->counts.tn, r->counts.fp, r->counts.fn})
                    line.push_back(std::to_string(v));
            } else {
                line.insert(line.end(), {"-", "-", "-", "-"});
            }
        }
        cells.push_back(std::move(line));
    }
    return detail::render_columns(cells);
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

struct DiagnosticsRow {
    EvalMethod eval = EvalMethod::Eval1;
    SensorKind sensor = SensorKind::Accelerometer;
    SimilarityMetric metric = SimilarityMetric::MAE;
    EvalDiagnostics d;
};

inline constexpr std::string_view kDiagnosticsHeader =
    "eval,sensor,metric,attempted,scored,too_few_samples,degenerate,positives,negatives";

/// CSV rows under kDiagnosticsHeader; exclusion notes and skipped
/// combinations follow as `#` comment lines.
inline void write_diagnostics(std::ostream& os, std::span<const DiagnosticsRow> rows,
                              std::span<const std::string> skipped = {}) {
    os << kDiagnosticsHeader << '\n';
    for (const auto& r : rows)
        os << eval_slug(r.eval) << ',' << sensor_slug(r.sensor) << ',' << metric_slug(r.metric) << ','
           << r.d.attempted << ',' << r.d.scored << ',' << r.d.too_few_samples << ','
           << r.d.degenerate << ',' << r.d.positives << ',' << r.d.negatives << '\n';
    for (const auto& r : rows)
        for (const auto& n : r.d.notes)
            os << "# " << eval_slug(r.eval) << ' ' << sensor_slug(r.sensor) << ' '
               << metric_slug(r.metric) << ": " << n << '\n';
    for (const auto& s : skipped) os << "# skipped: " << s << '\n';
}

struct DiagnosticsFile {
    std::vector<DiagnosticsRow> rows;
    std::vector<std::string> skipped;
};

inline DiagnosticsFile read_diagnostics(std::istream& is, const std::string& where = "diagnostics") {
    std::string line;
    if (!std::getline(is, line) || line != kDiagnosticsHeader)
        throw ParseError(where, 1, "expected header '" + std::string(kDiagnosticsHeader) + "'");
    DiagnosticsFile out;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line.front() == '#') {
            constexpr std::string_view tag = "# skipped: ";
            if (line.starts_with(tag)) out.skipped.push_back(line.substr(tag.size()));
            continue;
        }
        try {
            const auto f = detail::csv_split(line);
            if (f.size() != 9) throw detail::SchemaError{"expected 9 fields"};
            DiagnosticsRow r;
            const auto eval = parse_eval(f[0]);
            const auto sensor = parse_sensor(f[1]);
            const auto metric = parse_metric(f[2]);
            if (!eval) throw detail::SchemaError{"unknown evaluation '" + f[0] + "'"};
            if (!sensor) throw detail::SchemaError{"unknown sensor '" + f[1] + "'"};
            if (!metric) throw detail::SchemaError{"unknown metric '" + f[2] + "'"};
            r.eval = *eval;
            r.sensor = *sensor;
            r.metric = *metric;
            std::size_t* fields[] = {&r.d.attempted, &r.d.scored,    &r.d.too_few_samples,
                                     &r.d.degenerate, &r.d.positives, &r.d.negatives};
            for (std::size_t k = 0; k < 6; ++k) {
                const auto v = detail::csv_int(f[3 + k], "count");
                if (v < 0) throw detail::SchemaError{"negative count"};
                *fields[k] = static_cast<std::size_t>(v);
            }
            out.rows.push_back(std::move(r));
        } catch (const detail::SchemaError& e) {
            throw ParseError(where, lineno, e.what);
        }
    }
    return out;
}

/// One line per summary row checking tp+fn and tn+fp against the scored
/// label totals (from diagnostics when available, otherwise against the
/// sensor's other rows).
struct ConservationCheck {
    SensorKind sensor;
    SimilarityMetric metric;
    std::size_t positives;
    std::size_t negatives;
    std::size_t expected_positives;
    std::size_t expected_negatives;

    bool ok() const noexcept {
        return positives == expected_positives && negatives == expected_negatives;
    }
};

inline std::vector<ConservationCheck> conservation_checks(std::span<const SummaryRow> rows,
                                                          std::span<const DiagnosticsRow> diags = {},
                                                          std::optional<EvalMethod> eval = {}) {
    std::vector<ConservationCheck> out;
    for (const auto& r : rows) {
        ConservationCheck c{r.sensor, r.metric, r.counts.positives(), r.counts.negatives(), 0, 0};
        const DiagnosticsRow* match = nullptr;
        for (const auto& d : diags)
            if (d.sensor == r.sensor && d.metric == r.metric && (!eval || d.eval == *eval)) match = &d;
        if (match) {
            c.expected_positives = match->d.positives;
            c.expected_negatives = match->d.negatives;
        } else {
            const auto* first = detail::find_row(rows, r.sensor, SimilarityMetric::MAE);
            if (!first) first = &r;
            c.expected_positives = first->counts.positives();
            c.expected_negatives = first->counts.negatives();
        }
        out.push_back(c);
    }
    return out;
}

inline std::string render_conservation(std::span<const ConservationCheck> checks) {
    std::string out;
    for (const auto& c : checks) {
        out += "label conservation " + std::string(sensor_name(c.sensor)) + " " +
               std::string(metric_name(c.metric)) + ": tp+fn=" + std::to_string(c.positives) +
               " tn+fp=" + std::to_string(c.negatives);
        if (c.ok()) {
            out += " OK\n";
        } else {
            out += " MISMATCH (expected " + std::to_string(c.expected_positives) + "/" +
                   std::to_string(c.expected_negatives) + ")\n";
        }
    }
    return out;
}

inline std::string render_reconciliation(std::span<const DiagnosticsRow> rows) {
    std::vector<std::vector<std::string>> cells{{"Pairs", "attempted", "scored", "excluded",
                                                 "too few samples", "degenerate", "balance"}};
    for (const auto& r : rows) {
        const bool balanced = r.d.attempted == r.d.scored + r.d.excluded() &&
                              r.d.scored == r.d.positives + r.d.negatives;
        cells.push_back({std::string(eval_slug(r.eval)) + " " + std::string(sensor_name(r.sensor)) +
                             " " + std::string(metric_name(r.metric)),
                         std::to_string(r.d.attempted), std::to_string(r.d.scored),
                         std::to_string(r.d.excluded()), std::to_string(r.d.too_few_samples),
                         std::to_string(r.d.degenerate), balanced ? "OK" : "MISMATCH"});
    }
    return detail::render_columns(cells);
}

// ---------------------------------------------------------------------------
// Evaluation bundles
// ---------------------------------------------------------------------------

struct CurveEntry {
    EvalMethod eval;
    SensorKind sensor;
    SimilarityMetric metric;
    SweepResult result;
};

inline std::string curve_file_name(EvalMethod e, SensorKind s, SimilarityMetric m) {
    return std::string(sensor_slug(s)) + "_" + std::string(metric_slug(m)) + "_" +
           std::string(eval_slug(e)) + ".csv";
}

/// Everything one evaluation run produces.
struct EvalBundle {
    std::vector<SummaryRow> eval1;
    std::vector<SummaryRow> eval2;
    std::vector<DiagnosticsRow> diagnostics;
    std::vector<CurveEntry> curves;
    std::vector<std::string> skipped;  // combinations that could not be evaluated

    std::vector<SummaryRow>& summary(EvalMethod e) { return e == EvalMethod::Eval1 ? eval1 : eval2; }
    const std::vector<SummaryRow>& summary(EvalMethod e) const {
        return e == EvalMethod::Eval1 ? eval1 : eval2;
    }
};

/// Runs both evaluations for one sensor's triples and every requested metric.
/// Insufficient data or single-class scores skip that combination.
inline void evaluate_sensor(EvalBundle& bundle, std::span<const TransactionTriple> triples,
                            SensorKind sensor, std::span<const SimilarityMetric> metrics,
                            unsigned workers = 0) {
    for (auto eval : kAllEvals) {
        for (auto metric : metrics) {
            const auto label = std::string(eval_slug(eval)) + " " + std::string(sensor_name(sensor)) +
                               " " + std::string(metric_name(metric));
            try {
                auto scores = eval == EvalMethod::Eval1 ? score_eval1(triples, sensor, metric, workers)
                                                        : score_eval2(triples, sensor, metric);
                bundle.diagnostics.push_back({eval, sensor, metric, scores.diagnostics});
                auto result = sweep(scores.pairs, metric);
                bundle.summary(eval).push_back(summary_row(sensor, result));
                bundle.curves.push_back({eval, sensor, metric, std::move(result)});
            } catch (const InsufficientData& e) {
                bundle.skipped.push_back(label + ": " + e.what());
            } catch (const DegenerateLabels& e) {
                bundle.skipped.push_back(label + ": " + e.what());
            }
        }
    }
}

inline EvalBundle evaluate_store(const RecordStore& store, std::span<const SensorKind> sensors,
                                 std::span<const SimilarityMetric> metrics, unsigned workers = 0) {
    EvalBundle bundle;
    for (auto sensor : sensors) {
        const auto triples = join_triples(store, sensor);
        evaluate_sensor(bundle, triples, sensor, metrics, workers);
    }
    return bundle;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + p.string());
    return os;
}

} // namespace detail

/// Layout: summary_eval1.csv, summary_eval2.csv, diagnostics.txt and
/// curves/<sensor>_<metric>_<eval>.csv.
inline void write_bundle(const EvalBundle& b, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "curves", ec);
    if (ec) throw IoError("cannot create " + (dir / "curves").string() + ": " + ec.message());
    for (auto e : kAllEvals) {
        auto os = detail::open_out(dir / ("summary_" + std::string(eval_slug(e)) + ".csv"));
        write_summary_csv(os, b.summary(e));
    }
    {
        auto os = detail::open_out(dir / "diagnostics.txt");
        write_diagnostics(os, b.diagnostics, b.skipped);
    }
    for (const auto& c : b.curves) {
        auto os = detail::open_out(dir / "curves" / curve_file_name(c.eval, c.sensor, c.metric));
        curve_export(c.result, os);
    }
}

/// The parts of a written bundle the report needs.
struct ReportInput {
    std::vector<SummaryRow> eval1;
    std::vector<SummaryRow> eval2;
    DiagnosticsFile diagnostics;
    bool has_diagnostics = false;

    bool empty() const noexcept { return eval1.empty() && eval2.empty(); }
};

/// Reads whatever summary and diagnostics files exist under `dir`.
inline ReportInput load_report_input(const std::filesystem::path& dir) {
    ReportInput in;
    for (auto e : kAllEvals) {
        const auto p = dir / ("summary_" + std::string(eval_slug(e)) + ".csv");
        if (!std::filesystem::exists(p)) continue;
        std::ifstream is(p);
        if (!is) throw IoError("cannot read " + p.string());
        (e == EvalMethod::Eval1 ? in.eval1 : in.eval2) = read_summary_csv(is, p.string());
    }
    const auto dp = dir / "diagnostics.txt";
    if (std::filesystem::exists(dp)) {
        std::ifstream is(dp);
        if (!is) throw IoError("cannot read " + dp.string());
        in.diagnostics = read_diagnostics(is, dp.string());
        in.has_diagnostics = true;
    }
    return in;
}

inline ReportInput report_input(const EvalBundle& b) {
    return {b.eval1, b.eval2, {b.diagnostics, b.skipped}, true};
}

inline std::string render_report(const ReportInput& in) {
    std::ostringstream os;
    const std::pair<EvalMethod, const std::vector<SummaryRow>*> parts[] = {
        {EvalMethod::Eval1, &in.eval1}, {EvalMethod::Eval2, &in.eval2}};
    for (const auto& [eval, rows] : parts) {
        if (rows->empty()) continue;
        const auto title = eval == EvalMethod::Eval1 ? "Evaluation 1 (proximity pairing)"
                                                     : "Evaluation 2 (relay inclusion)";
        os << title << ": optimum thresholds and EERs\n"
           << render_threshold_table(*rows) << '\n'
           << title << ": confusion breakdown at the optimum threshold\n"
           << render_breakdown_table(*rows) << '\n';
        const auto checks = conservation_checks(*rows, in.diagnostics.rows, eval);
        os << render_conservation(checks) << '\n';
    }
    if (!in.diagnostics.rows.empty())
        os << "Exclusions\n" << render_reconciliation(in.diagnostics.rows);
    for (const auto& s : in.diagnostics.skipped) os << "skipped: " << s << '\n';
    return os.str();
}

} // namespace proxeval
