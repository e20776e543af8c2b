// Copyright 2026 The proxeval Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: synthesize or simulate sensor stores, move them in
// and out of external formats, evaluate them and render reports.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <typeinfo>
#include <vector>

#include "proxeval/harness.hpp"
#include "proxeval/report.hpp"
#include "proxeval/store.hpp"
#include "proxeval/synth.hpp"

namespace fs = std::filesystem;
using namespace proxeval;

namespace {

struct RunConfig {
    std::string scenario;
    std::string store;
    std::string sensors = "all";
    std::string metrics = "all";
    double recording_ms = kTransactionWindowMs;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> transactions;
    std::string out;
    std::string input;
    std::string format;
    std::optional<int> live_port;
    std::string faults;
    unsigned jobs = 0;
};

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<SensorKind> parse_sensors(const std::string& text) {
    if (text == "all") return {kAllSensors.begin(), kAllSensors.end()};
    std::vector<SensorKind> out;
    for (const auto& item : split_list(text)) {
        const auto s = parse_sensor(item);
        if (!s) throw ConfigError("unknown sensor '" + item + "'");
        if (std::find(out.begin(), out.end(), *s) == out.end()) out.push_back(*s);
    }
    if (out.empty()) throw ConfigError("empty sensor list");
    return out;
}

std::vector<SimilarityMetric> parse_metrics(const std::string& text) {
    if (text == "all") return {kAllMetrics.begin(), kAllMetrics.end()};
    std::vector<SimilarityMetric> out;
    for (const auto& item : split_list(text)) {
        const auto m = parse_metric(item);
        if (!m) throw ConfigError("unknown metric '" + item + "'");
        if (std::find(out.begin(), out.end(), *m) == out.end()) out.push_back(*m);
    }
    if (out.empty()) throw ConfigError("empty metric list");
    return out;
}

std::string output_root(const RunConfig& c) {
    if (!c.out.empty()) return c.out;
    if (const char* env = std::getenv("PROXEVAL_OUT"); env && *env) return env;
    return "proxeval-out";
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

SynthScenario scenario_for(const RunConfig& c) {
    require(!c.scenario.empty(), "--scenario is required");
    auto s = load_scenario(c.scenario);
    if (c.seed) s.seed = *c.seed;
    if (c.transactions) s.n_transactions = *c.transactions;
    if (c.sensors != "all") s.sensors = parse_sensors(c.sensors);
    s.recording_ms = c.recording_ms;
    validate(s);
    return s;
}

RecordStore open_existing_store(const std::string& dir) {
    require(!dir.empty(), "--store is required");
    if (!fs::is_directory(dir)) throw IoError("store directory not found: " + dir);
    return RecordStore::open(dir);
}

void require_fresh_store(const std::string& dir) {
    require(!dir.empty(), "--store is required");
    if (fs::exists(dir) && !fs::is_directory(dir)) throw IoError(dir + " is not a directory");
    if (fs::is_directory(dir) && !RecordStore::open(dir).empty())
        throw IoError("store " + dir + " already holds records");
}

void print_store_summary(const RecordStore& store, std::ostream& os) {
    std::vector<std::vector<std::string>> cells{{"Sensor", "Location", "Triples"}};
    for (auto sensor : store.sensors()) {
        std::map<std::string, std::size_t> per_location;
        const auto triples = join_triples(store, sensor);
        for (const auto& t : triples) ++per_location[t.location()];
        for (const auto& [loc, n] : per_location)
            cells.push_back({std::string(sensor_name(sensor)), loc, std::to_string(n)});
        cells.push_back({std::string(sensor_name(sensor)), "(all)", std::to_string(triples.size())});
    }
    os << detail::render_columns(cells);
}

int cmd_synth(const RunConfig& c) {
    const auto s = scenario_for(c);
    require_fresh_store(c.store);
    RecordStore store;
    for (const auto& t : generate_dataset(s, c.jobs)) {
        store.append(t.tt());
        store.append(t.ti());
        store.append(t.dti());
    }
    store.save(c.store);
    std::cout << "wrote " << store.size() << " traces to " << c.store << '\n';
    print_store_summary(store, std::cout);
    return 0;
}

int cmd_simulate(const RunConfig& c) {
    auto s = scenario_for(c);
    require_fresh_store(c.store);
    FaultSchedule faults;
    if (!c.faults.empty()) faults = FaultSchedule::load(c.faults);
    std::optional<Environment> env;
    if (c.live_port) {
        require(*c.live_port >= 0 && *c.live_port <= 65535, "--live-port out of range");
        env.emplace(live_mode_bind(s, static_cast<std::uint16_t>(*c.live_port)));
    } else {
        env.emplace(make_emulated_environment(s));
    }
    const auto stats = run_session(*env, s.sensors, s.n_transactions, faults, c.recording_ms);
    env->store().save(c.store);
    std::cout << "attempted " << stats.attempted << ", stored " << stats.stored
              << ", discarded " << stats.discarded() << " (inconsistent "
              << stats.discarded_inconsistent << ", incomplete " << stats.discarded_incomplete
              << ")\n";
    print_store_summary(env->store(), std::cout);
    return 0;
}

ExternalFormat format_for(const RunConfig& c, const fs::path& path) {
    if (c.format == "jsonl") return ExternalFormat::Jsonl;
    if (c.format == "csv") return ExternalFormat::Csv;
    require(c.format.empty(), "unknown format '" + c.format + "' (jsonl or csv)");
    const auto f = format_from_extension(path);
    if (!f) throw ConfigError("cannot infer format of " + path.string() + "; pass --format");
    return *f;
}

int cmd_ingest(const RunConfig& c) {
    require(!c.input.empty(), "--input is required");
    require_fresh_store(c.store);
    const auto store = ingest_external(c.input, format_for(c, c.input));
    store.save(c.store);
    std::cout << "ingested " << store.size() << " traces into " << c.store << '\n';
    print_store_summary(store, std::cout);
    return 0;
}

int cmd_export(const RunConfig& c) {
    const auto store = open_existing_store(c.store);
    require(!c.out.empty(), "--out is required");
    const auto format = format_for(c, c.out);
    std::ofstream os(c.out, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + c.out);
    if (format == ExternalFormat::Jsonl)
        export_jsonl(store, os);
    else
        export_csv(store, os);
    if (!os) throw IoError("write failed: " + c.out);
    std::cout << "exported " << store.size() << " traces to " << c.out << '\n';
    return 0;
}

int cmd_evaluate(const RunConfig& c) {
    const auto store = open_existing_store(c.store);
    if (store.empty()) throw IoError("store " + c.store + " is empty");
    auto sensors = c.sensors == "all" ? store.sensors() : parse_sensors(c.sensors);
    const auto metrics = parse_metrics(c.metrics);
    const auto bundle = evaluate_store(store, sensors, metrics, c.jobs);
    const auto out = output_root(c);
    write_bundle(bundle, out);
    std::cout << render_report(report_input(bundle));
    std::cout << "outputs written to " << out << '\n';
    return 0;
}

int cmd_report(const RunConfig& c) {
    const auto dir = output_root(c);
    if (!fs::is_directory(dir)) throw IoError("evaluation directory not found: " + dir);
    const auto in = load_report_input(dir);
    if (in.empty()) {
        std::cerr << "nothing to report: no evaluation summaries in " << dir << '\n';
        return 3;
    }
    std::cout << render_report(in);
    return 0;
}

int cmd_scenario(const RunConfig& c) {
    auto s = paper_like_scenario();
    if (c.seed) s.seed = *c.seed;
    if (c.transactions) s.n_transactions = *c.transactions;
    const auto text = scenario_to_json(s).dump(2) + "\n";
    if (c.out.empty()) {
        std::cout << text;
        return 0;
    }
    std::ofstream os(c.out, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + c.out);
    os << text;
    return 0;
}

std::string error_kind(const std::exception& e) {
#define PROXEVAL_KIND(T) \
    if (dynamic_cast<const T*>(&e)) return #T
    PROXEVAL_KIND(ParseError);
    PROXEVAL_KIND(InvalidTrace);
    PROXEVAL_KIND(IdMismatch);
    PROXEVAL_KIND(SensorMismatch);
    PROXEVAL_KIND(RoleError);
    PROXEVAL_KIND(ConfigError);
    PROXEVAL_KIND(TooFewSamples);
    PROXEVAL_KIND(LengthMismatch);
    PROXEVAL_KIND(EmptySeries);
    PROXEVAL_KIND(DegenerateSeries);
    PROXEVAL_KIND(InsufficientData);
    PROXEVAL_KIND(DegenerateLabels);
    PROXEVAL_KIND(DuplicateKey);
    PROXEVAL_KIND(IoError);
    PROXEVAL_KIND(ChannelError);
    PROXEVAL_KIND(BindError);
#undef PROXEVAL_KIND
    return "Error";
}

std::string one_line(std::string text) {
    for (auto& ch : text)
        if (ch == '\n' || ch == '\r') ch = ' ';
    return text;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ambient-sensor proximity evaluation toolkit"};
    app.require_subcommand(1);
    RunConfig c;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--jobs", c.jobs, "Worker threads (0 = hardware concurrency)");
    };
    auto add_scenario = [&](CLI::App* sub) {
        sub->add_option("--scenario", c.scenario, "Scenario JSON file")->required();
        sub->add_option("--store", c.store, "Record store directory to create")->required();
        sub->add_option("--sensors", c.sensors, "Comma-separated sensors or 'all'");
        sub->add_option("--seed", c.seed, "Override the scenario seed");
        sub->add_option("-n,--transactions", c.transactions, "Override transactions per sensor");
        sub->add_option("--recording-ms", c.recording_ms, "Recording window in ms")
            ->check(CLI::PositiveNumber);
    };

    auto* synth = app.add_subcommand("synth", "Generate a synthetic record store");
    add_scenario(synth);
    add_common(synth);

    auto* simulate = app.add_subcommand("simulate", "Run the three-device protocol into a store");
    add_scenario(simulate);
    add_common(simulate);
    simulate->add_option("--faults", c.faults, "Fault schedule file");
    simulate->add_option("--live-port", c.live_port, "Use UDP on 127.0.0.1 with this broadcast port");

    auto* ingest = app.add_subcommand("ingest", "Load external JSONL or CSV into a new store");
    ingest->add_option("--input", c.input, "External data file")->required();
    ingest->add_option("--store", c.store, "Record store directory to create")->required();
    ingest->add_option("--format", c.format, "jsonl or csv (default: from extension)");

    auto* exp = app.add_subcommand("export", "Write a store as JSONL or CSV");
    exp->add_option("--store", c.store, "Record store directory")->required();
    exp->add_option("--out", c.out, "Output file")->required();
    exp->add_option("--format", c.format, "jsonl or csv (default: from extension)");

    auto* evaluate = app.add_subcommand("evaluate", "Run both evaluations over a store");
    evaluate->add_option("--store", c.store, "Record store directory")->required();
    evaluate->add_option("--sensors", c.sensors, "Comma-separated sensors or 'all'");
    evaluate->add_option("--metrics", c.metrics, "mae, pearson or 'all'");
    evaluate->add_option("--out", c.out, "Output directory (default $PROXEVAL_OUT)");
    add_common(evaluate);

    auto* report = app.add_subcommand("report", "Render the tables of an evaluation directory");
    report->add_option("--out", c.out, "Evaluation directory (default $PROXEVAL_OUT)");

    auto* scenario = app.add_subcommand("scenario", "Print the default scenario");
    scenario->add_option("--out", c.out, "Write to a file instead of stdout");
    scenario->add_option("--seed", c.seed, "Override the seed");
    scenario->add_option("-n,--transactions", c.transactions, "Override transactions per sensor");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error[Usage]: " << one_line(e.what()) << '\n';
        return 2;
    }

    try {
        if (*synth) return cmd_synth(c);
        if (*simulate) return cmd_simulate(c);
        if (*ingest) return cmd_ingest(c);
        if (*exp) return cmd_export(c);
        if (*evaluate) return cmd_evaluate(c);
        if (*report) return cmd_report(c);
        if (*scenario) return cmd_scenario(c);
    } catch (const std::exception& e) {
        std::cerr << "error[" << error_kind(e) << "]: " << one_line(e.what()) << '\n';
        return 1;
    }
    return 2;
}
