// SPDX-License-Identifier: Apache-2.0

#include "cdca/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "cdca/tensor.hpp"

namespace cdca {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::uint64_t parse_u64(const std::string& s) {
    std::size_t used = 0;
    if (s.empty() || s[0] == '-') throw ParameterError("expected unsigned integer, got '" + s + "'");
    const auto v = std::stoull(s, &used);
    if (used != s.size()) throw ParameterError("expected unsigned integer, got '" + s + "'");
    return v;
}

double parse_real(const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ParameterError("expected number, got '" + s + "'");
    return v;
}

} // namespace

void MetricsSink::append(const MetricsRecord& r) {
    std::lock_guard lock(mutex_);
    records_.push_back(r);
}

void MetricsSink::append(const CloudRecord& r) {
    std::lock_guard lock(mutex_);
    cloud_.push_back(r);
}

MetricsTable MetricsSink::table() const {
    std::lock_guard lock(mutex_);
    return records_;
}

std::vector<CloudRecord> MetricsSink::cloud_log() const {
    std::lock_guard lock(mutex_);
    return cloud_;
}

std::string to_csv(const MetricsTable& table) {
    std::string out = std::string(kCsvHeader) + '\n';
    for (const auto& r : table) {
        out += std::to_string(r.round) + ',' + std::to_string(r.domain) + ',' + std::to_string(r.batch) + ',' +
               fmt(r.accuracy) + ',' + fmt(r.v_unc_mean) + ',' + fmt(r.uplink_frac) + ',' +
               std::to_string(r.up_bytes) + ',' + std::to_string(r.down_bytes) + ',' + std::to_string(r.version) +
               '\n';
    }
    return out;
}

MetricsTable parse_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != kCsvHeader) throw ParameterError("metrics CSV: missing or wrong header");
    MetricsTable table;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 9) {
            throw ParameterError("metrics CSV line " + std::to_string(lineno) + ": expected 9 fields");
        }
        MetricsRecord r;
        r.round = parse_u64(cells[0]);
        r.domain = parse_u64(cells[1]);
        r.batch = parse_u64(cells[2]);
        r.accuracy = parse_real(cells[3]);
        r.v_unc_mean = parse_real(cells[4]);
        r.uplink_frac = parse_real(cells[5]);
        r.up_bytes = parse_u64(cells[6]);
        r.down_bytes = parse_u64(cells[7]);
        r.version = static_cast<std::uint32_t>(parse_u64(cells[8]));
        table.push_back(r);
    }
    return table;
}

std::string to_json(const MetricsTable& table) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : table) {
        arr.push_back({{"round", r.round},
                       {"domain", r.domain},
                       {"batch", r.batch},
                       {"accuracy", r.accuracy},
                       {"v_unc_mean", r.v_unc_mean},
                       {"uplink_frac", r.uplink_frac},
                       {"up_bytes", r.up_bytes},
                       {"down_bytes", r.down_bytes},
                       {"version", r.version}});
    }
    return arr.dump(1) + '\n';
}

MetricsTable parse_json(const std::string& text) {
    MetricsTable table;
    try {
        const auto arr = nlohmann::json::parse(text);
        if (!arr.is_array()) throw ParameterError("metrics JSON: expected an array");
        for (const auto& o : arr) {
            MetricsRecord r;
            r.round = o.at("round").get<std::size_t>();
            r.domain = o.at("domain").get<std::size_t>();
            r.batch = o.at("batch").get<std::size_t>();
            r.accuracy = o.at("accuracy").get<double>();
            r.v_unc_mean = o.at("v_unc_mean").get<double>();
            r.uplink_frac = o.at("uplink_frac").get<double>();
            r.up_bytes = o.at("up_bytes").get<std::uint64_t>();
            r.down_bytes = o.at("down_bytes").get<std::uint64_t>();
            r.version = o.at("version").get<std::uint32_t>();
            table.push_back(r);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("metrics JSON: ") + e.what());
    }
    return table;
}

std::string cloud_log_csv(const std::vector<CloudRecord>& log) {
    std::string out = "update,l_sup,l_align,l_stu,kept_frac,batch_v_unc,beta\n";
    for (const auto& r : log) {
        out += std::to_string(r.update) + ',' + fmt(r.l_sup) + ',' + fmt(r.l_align) + ',' + fmt(r.l_stu) + ',' +
               fmt(r.kept_frac) + ',' + fmt(r.batch_v_unc) + ',' + fmt(r.beta) + '\n';
    }
    return out;
}

void write_text(const std::string& text, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("failed writing '" + path + "'");
}

void emit(const MetricsTable& table, EmitFormat format, const std::string& path) {
    write_text(format == EmitFormat::csv ? to_csv(table) : to_json(table), path);
}

double mean_accuracy(const MetricsTable& table) {
    if (table.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : table) s += r.accuracy;
    return s / static_cast<double>(table.size());
}

std::map<std::pair<std::size_t, std::size_t>, double> domain_round_accuracy(const MetricsTable& table) {
    std::map<std::pair<std::size_t, std::size_t>, std::pair<double, std::size_t>> acc;
    for (const auto& r : table) {
        auto& cell = acc[{r.domain, r.round}];
        cell.first += r.accuracy;
        ++cell.second;
    }
    std::map<std::pair<std::size_t, std::size_t>, double> out;
    for (const auto& [key, cell] : acc) out[key] = cell.first / static_cast<double>(cell.second);
    return out;
}

double forgetting_metric(const MetricsTable& table, std::size_t domain) {
    const auto cells = domain_round_accuracy(table);
    std::size_t first = 0, last = 0, count = 0;
    for (const auto& [key, value] : cells) {
        if (key.first != domain) continue;
        if (count == 0) first = key.second;
        last = key.second;
        ++count;
    }
    if (count < 2) {
        throw ParameterError("forgetting_metric: domain " + std::to_string(domain) + " has " + std::to_string(count) +
                             " round(s), need at least 2");
    }
    return cells.at({domain, last}) - cells.at({domain, first});
}

} // namespace cdca
