// Copyright 2026 The proxeval Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "proxeval/trace.hpp"

namespace proxeval {

// ---------------------------------------------------------------------------
// JSON encoding of traces
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json samples_to_json(std::span<const Sample> samples) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& s : samples) {
        nlohmann::ordered_json o;
        o["t_ms"] = s.t_ms;
        if (const auto* v = std::get_if<double>(&s.value)) {
            o["v"] = *v;
        } else {
            const auto& xyz = std::get<Vec3>(s.value);
            o["x"] = xyz[0];
            o["y"] = xyz[1];
            o["z"] = xyz[2];
        }
        arr.push_back(std::move(o));
    }
    return arr;
}

inline nlohmann::ordered_json trace_to_json(const SensorTrace& t) {
    nlohmann::ordered_json o;
    o["transaction_id"] = t.id().hex();
    o["role"] = std::string(role_name(t.role()));
    o["sensor"] = std::string(sensor_name(t.sensor()));
    o["location"] = t.location();
    o["start_epoch_ms"] = t.start_epoch_ms();
    o["samples"] = samples_to_json(t.samples());
    return o;
}

// Field-level schema errors; turned into ParseError with a location by callers.
struct SchemaError {
    std::string what;
};

inline TransactionId parse_id_strict(const std::string& hex) {
    const auto id = TransactionId::from_hex(hex);
    if (!id || id->hex() != hex)
        throw SchemaError{"transaction_id must be 14 lowercase hex characters, got '" + hex + "'"};
    return *id;
}

inline SensorKind parse_sensor_strict(const std::string& name) {
    for (const auto& info : kSensorTable)
        if (info.name == name) return info.kind;
    throw SchemaError{"unknown sensor '" + name + "'"};
}

inline DeviceRole parse_role_strict(const std::string& name) {
    const auto r = parse_role(name);
    if (!r) throw SchemaError{"role must be TT, TI or DTI, got '" + name + "'"};
    return *r;
}

inline SensorTrace trace_from_json(const nlohmann::json& o) {
    if (!o.is_object()) throw SchemaError{"expected a JSON object"};
    try {
        const auto id = parse_id_strict(o.at("transaction_id").get<std::string>());
        const auto role = parse_role_strict(o.at("role").get<std::string>());
        const auto sensor = parse_sensor_strict(o.at("sensor").get<std::string>());
        const auto& epoch = o.at("start_epoch_ms");
        if (!epoch.is_number_integer()) throw SchemaError{"start_epoch_ms must be an integer"};
        std::vector<Sample> samples;
        const bool scalar = is_scalar(sensor);
        for (const auto& s : o.at("samples")) {
            Sample smp;
            smp.t_ms = s.at("t_ms").get<double>();
            if (scalar) {
                if (s.contains("x")) throw SchemaError{"scalar sensor sample carries x/y/z"};
                smp.value = s.at("v").get<double>();
            } else {
                if (s.contains("v")) throw SchemaError{"vector sensor sample carries v"};
                smp.value = Vec3{s.at("x").get<double>(), s.at("y").get<double>(),
                                 s.at("z").get<double>()};
            }
            samples.push_back(smp);
        }
        return SensorTrace(id, role, sensor, o.at("location").get<std::string>(),
                           epoch.get<std::int64_t>(), std::move(samples));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError{e.what()};
    } catch (const InvalidTrace& e) {
        throw SchemaError{e.what()};
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Record store
// ---------------------------------------------------------------------------

/// Per (sensor, role) append-only tables of traces, keyed by transaction ID.
/// Optionally backed by a directory holding one JSON-lines file per table;
/// each append is written through before it becomes visible to readers.
///
/// Appends are serialized; concurrent readers see only complete rows.
class RecordStore {
public:
    struct Row {
        std::size_t seq;
        SensorTrace trace;
    };

    RecordStore() : mu_(std::make_unique<std::shared_mutex>()) {}

    /// Opens (creating if needed) a directory-backed store and loads every
    /// table file found there.
    static RecordStore open(const std::filesystem::path& dir) {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw IoError("cannot create store directory " + dir.string() + ": " + ec.message());
        RecordStore store;
        for (auto sensor : kAllSensors) {
            for (auto role : kAllRoles) {
                const auto path = dir / table_file_name(sensor, role);
                if (std::filesystem::exists(path)) store.load_table(path, sensor, role);
            }
        }
        store.dir_ = dir;
        return store;
    }

    static std::string table_file_name(SensorKind sensor, DeviceRole role) {
        return std::string(sensor_slug(sensor)) + "_" + std::string(role_name(role)) + ".jsonl";
    }

    /// Appends a trace to its (sensor, role) table and returns its sequence
    /// number there (1-based, strictly increasing).
    std::size_t append(const SensorTrace& trace) {
        std::unique_lock lock(*mu_);
        auto& table = tables_[key(trace.sensor(), trace.role())];
        if (table.index.contains(trace.id()))
            throw DuplicateKey(trace.describe() + " is already stored");
        const std::size_t seq = table.rows.empty() ? 1 : table.rows.back().seq + 1;
        if (dir_) write_through(trace, seq);
        table.index.emplace(trace.id(), table.rows.size());
        table.rows.push_back({seq, trace});
        return seq;
    }

    std::vector<Row> rows(SensorKind sensor, DeviceRole role) const {
        std::shared_lock lock(*mu_);
        const auto it = tables_.find(key(sensor, role));
        return it == tables_.end() ? std::vector<Row>{} : it->second.rows;
    }

    std::optional<SensorTrace> find(const TransactionId& id, DeviceRole role, SensorKind sensor) const {
        std::shared_lock lock(*mu_);
        const auto it = tables_.find(key(sensor, role));
        if (it == tables_.end()) return std::nullopt;
        const auto row = it->second.index.find(id);
        if (row == it->second.index.end()) return std::nullopt;
        return it->second.rows[row->second].trace;
    }

    /// Every stored trace, by sensor, then role, then sequence number.
    std::vector<SensorTrace> traces() const {
        std::shared_lock lock(*mu_);
        std::vector<SensorTrace> out;
        for (const auto& [k, table] : tables_)
            for (const auto& row : table.rows) out.push_back(row.trace);
        return out;
    }

    std::size_t size() const {
        std::shared_lock lock(*mu_);
        std::size_t n = 0;
        for (const auto& [k, table] : tables_) n += table.rows.size();
        return n;
    }

    bool empty() const { return size() == 0; }

    /// Sensors that have at least one stored row, in canonical order.
    std::vector<SensorKind> sensors() const {
        std::shared_lock lock(*mu_);
        std::vector<SensorKind> out;
        for (auto s : kAllSensors)
            for (auto r : kAllRoles)
                if (tables_.contains(key(s, r))) {
                    out.push_back(s);
                    break;
                }
        return out;
    }

    /// Writes every table into `dir` (one file per non-empty table).
    void save(const std::filesystem::path& dir) const {
        std::shared_lock lock(*mu_);
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
        for (const auto& [k, table] : tables_) {
            const auto path = dir / table_file_name(k.first, k.second);
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            if (!out) throw IoError("cannot write " + path.string());
            for (const auto& row : table.rows) out << row_line(row.trace, row.seq) << '\n';
            if (!out) throw IoError("write failed: " + path.string());
        }
    }

    const std::optional<std::filesystem::path>& directory() const noexcept { return dir_; }

private:
    using Key = std::pair<SensorKind, DeviceRole>;

    struct Table {
        std::vector<Row> rows;
        std::map<TransactionId, std::size_t> index;
    };

    static Key key(SensorKind s, DeviceRole r) { return {s, r}; }

    static std::string row_line(const SensorTrace& trace, std::size_t seq) {
        nlohmann::ordered_json o;
        o["seq"] = seq;
        const auto body = detail::trace_to_json(trace);
        for (auto it = body.begin(); it != body.end(); ++it) o[it.key()] = it.value();
        return o.dump();
    }

    void write_through(const SensorTrace& trace, std::size_t seq) {
        const auto path = *dir_ / table_file_name(trace.sensor(), trace.role());
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out << row_line(trace, seq) << '\n';
        out.flush();
        if (!out) throw IoError("append failed: " + path.string());
    }

    void load_table(const std::filesystem::path& path, SensorKind sensor, DeviceRole role) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot read " + path.string());
        auto& table = tables_[key(sensor, role)];
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                const auto seq = j.at("seq").get<std::size_t>();
                auto trace = detail::trace_from_json(j);
                if (trace.sensor() != sensor || trace.role() != role)
                    throw detail::SchemaError{"row belongs to a different table"};
                if (!table.rows.empty() && seq <= table.rows.back().seq)
                    throw detail::SchemaError{"seq not strictly increasing"};
                if (table.index.contains(trace.id()))
                    throw detail::SchemaError{"duplicate transaction " + trace.id().hex()};
                table.index.emplace(trace.id(), table.rows.size());
                table.rows.push_back({seq, std::move(trace)});
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(path.string(), lineno, e.what());
            } catch (const detail::SchemaError& e) {
                throw ParseError(path.string(), lineno, e.what);
            }
        }
    }

    std::unique_ptr<std::shared_mutex> mu_;
    std::map<Key, Table> tables_;
    std::optional<std::filesystem::path> dir_;
};

/// Transactions present in all three role tables of `sensor`, in TT
/// sequence order. IDs missing from any table are skipped.
inline std::vector<TransactionTriple> join_triples(const RecordStore& store, SensorKind sensor) {
    std::vector<TransactionTriple> out;
    for (const auto& row : store.rows(sensor, DeviceRole::TT)) {
        auto ti = store.find(row.trace.id(), DeviceRole::TI, sensor);
        if (!ti) continue;
        auto dti = store.find(row.trace.id(), DeviceRole::DTI, sensor);
        if (!dti) continue;
        out.push_back(validate_triple(row.trace, std::move(*ti), std::move(*dti)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// External datasets
// ---------------------------------------------------------------------------

enum class ExternalFormat { Jsonl, Csv };

inline constexpr std::string_view kCsvHeader =
    "transaction_id,role,sensor,location,start_epoch_ms,t_ms,v,x,y,z";

/// One JSON object per line, fields transaction_id, role, sensor, location,
/// start_epoch_ms and samples.
inline void export_jsonl(const RecordStore& store, std::ostream& os) {
    for (const auto& t : store.traces()) os << detail::trace_to_json(t).dump() << '\n';
}

namespace detail {

inline std::string csv_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

// Splits one CSV record (RFC 4180 quoting, no embedded newlines).
inline std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> out(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                out.back().push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                out.back().push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back();
        } else {
            out.back().push_back(c);
        }
    }
    if (quoted) throw SchemaError{"unterminated quoted field"};
    return out;
}

inline double csv_double(const std::string& field, const char* name) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(field, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != field.size())
        throw SchemaError{std::string(name) + " is not a number: '" + field + "'"};
    return v;
}

inline std::int64_t csv_int(const std::string& field, const char* name) {
    std::size_t used = 0;
    std::int64_t v = 0;
    try {
        v = std::stoll(field, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != field.size())
        throw SchemaError{std::string(name) + " is not an integer: '" + field + "'"};
    return v;
}

} // namespace detail

/// One sample per row under the mandatory header
/// `transaction_id,role,sensor,location,start_epoch_ms,t_ms,v,x,y,z`.
/// Scalar sensors fill `v`, vector sensors fill `x,y,z`. Traces without
/// samples cannot be represented and are skipped.
inline void export_csv(const RecordStore& store, std::ostream& os) {
    os << kCsvHeader << '\n';
    for (const auto& t : store.traces()) {
        const std::string prefix = t.id().hex() + "," + std::string(role_name(t.role())) + "," +
                                   detail::csv_field(std::string(sensor_name(t.sensor()))) + "," +
                                   detail::csv_field(t.location()) + "," +
                                   std::to_string(t.start_epoch_ms()) + ",";
        for (const auto& s : t.samples()) {
            os << prefix << detail::csv_number(s.t_ms) << ',';
            if (const auto* v = std::get_if<double>(&s.value)) {
                os << detail::csv_number(*v) << ",,,\n";
            } else {
                const auto& xyz = std::get<Vec3>(s.value);
                os << ',' << detail::csv_number(xyz[0]) << ',' << detail::csv_number(xyz[1]) << ','
                   << detail::csv_number(xyz[2]) << '\n';
            }
        }
    }
}

inline RecordStore ingest_jsonl(std::istream& in, const std::string& where) {
    RecordStore store;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            store.append(detail::trace_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(where, lineno, e.what());
        } catch (const detail::SchemaError& e) {
            throw ParseError(where, lineno, e.what);
        } catch (const DuplicateKey& e) {
            throw ParseError(where, lineno, e.what());
        }
    }
    return store;
}

inline RecordStore ingest_csv(std::istream& in, const std::string& where) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(where, 1, "empty file, header row required");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCsvHeader) throw ParseError(where, 1, "expected header '" + std::string(kCsvHeader) + "'");

    struct Pending {
        TransactionId id;
        DeviceRole role;
        SensorKind sensor;
        std::string location;
        std::int64_t epoch;
        std::vector<Sample> samples;
        std::size_t first_line;
    };
    std::vector<Pending> pending;
    std::map<std::tuple<TransactionId, DeviceRole, SensorKind>, std::size_t> where_of;

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            const auto f = detail::csv_split(line);
            if (f.size() != 10)
                throw detail::SchemaError{"expected 10 fields, got " + std::to_string(f.size())};
            const auto id = detail::parse_id_strict(f[0]);
            const auto role = detail::parse_role_strict(f[1]);
            const auto sensor = detail::parse_sensor_strict(f[2]);
            const auto epoch = detail::csv_int(f[4], "start_epoch_ms");
            Sample s;
            s.t_ms = detail::csv_double(f[5], "t_ms");
            if (is_scalar(sensor)) {
                if (!f[7].empty() || !f[8].empty() || !f[9].empty())
                    throw detail::SchemaError{"scalar sensor row fills x/y/z"};
                s.value = detail::csv_double(f[6], "v");
            } else {
                if (!f[6].empty()) throw detail::SchemaError{"vector sensor row fills v"};
                s.value = Vec3{detail::csv_double(f[7], "x"), detail::csv_double(f[8], "y"),
                               detail::csv_double(f[9], "z")};
            }
            const auto k = std::make_tuple(id, role, sensor);
            auto it = where_of.find(k);
            if (it == where_of.end()) {
                it = where_of.emplace(k, pending.size()).first;
                pending.push_back({id, role, sensor, f[3], epoch, {}, lineno});
            }
            auto& p = pending[it->second];
            if (p.location != f[3] || p.epoch != epoch)
                throw detail::SchemaError{"location/start_epoch_ms differ from earlier rows of the trace"};
            p.samples.push_back(s);
        } catch (const detail::SchemaError& e) {
            throw ParseError(where, lineno, e.what);
        }
    }

    RecordStore store;
    for (auto& p : pending) {
        try {
            store.append(SensorTrace(p.id, p.role, p.sensor, p.location, p.epoch, std::move(p.samples)));
        } catch (const InvalidTrace& e) {
            throw ParseError(where, p.first_line, e.what());
        }
    }
    return store;
}

/// Reads an external dataset. Throws ParseError naming the offending line.
inline RecordStore ingest_external(const std::filesystem::path& path, ExternalFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return format == ExternalFormat::Jsonl ? ingest_jsonl(in, path.string())
                                           : ingest_csv(in, path.string());
}

inline std::optional<ExternalFormat> format_from_extension(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".jsonl" || ext == ".ndjson") return ExternalFormat::Jsonl;
    if (ext == ".csv") return ExternalFormat::Csv;
    return std::nullopt;
}

} // namespace proxeval
