// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

#include "doctest.h"

#include "cdca/metrics.hpp"
#include "cdca/tensor.hpp"

using namespace cdca;

namespace {

MetricsTable table_with(const std::vector<std::pair<std::size_t, double>>& round_acc, std::size_t domain = 0) {
    MetricsTable t;
    std::size_t batch = 0;
    for (const auto& [round, acc] : round_acc) {
        MetricsRecord r;
        r.round = round;
        r.domain = domain;
        r.batch = batch++;
        r.accuracy = acc;
        t.push_back(r);
    }
    return t;
}

MetricsTable random_table(Rng& rng, std::size_t n) {
    MetricsTable t;
    for (std::size_t i = 0; i < n; ++i) {
        MetricsRecord r;
        r.round = 1 + rng.index(10);
        r.domain = rng.index(5);
        r.batch = i;
        r.accuracy = rng.uniform();
        r.v_unc_mean = rng.uniform(0.0, 0.5) / 3.0;
        r.uplink_frac = rng.uniform();
        r.up_bytes = rng.next_u64() >> 8;
        r.down_bytes = rng.next_u64() >> 8;
        r.version = static_cast<std::uint32_t>(rng.index(1000));
        t.push_back(r);
    }
    return t;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("empty table is header-only CSV") {
    CHECK(to_csv({}) == std::string(kCsvHeader) + "\n");
    CHECK(parse_csv(to_csv({})).empty());
    CHECK(parse_json(to_json({})).empty());
}

TEST_CASE("CSV and JSON round trips are exact") {
    Rng rng(61);
    const MetricsTable t = random_table(rng, 200);
    CHECK(parse_csv(to_csv(t)) == t);
    CHECK(parse_json(to_json(t)) == t);
    CHECK(to_csv(parse_csv(to_csv(t))) == to_csv(t));
}

TEST_CASE("CSV layout") {
    MetricsRecord r;
    r.round = 2;
    r.domain = 1;
    r.batch = 30;
    r.accuracy = 0.875;
    r.up_bytes = 100;
    r.down_bytes = 7;
    r.version = 3;
    const std::string csv = to_csv({r});
    std::istringstream is(csv);
    std::string header, row;
    std::getline(is, header);
    std::getline(is, row);
    CHECK(header == kCsvHeader);
    CHECK(row.rfind("2,1,30,0.875,", 0) == 0);
    CHECK(row.substr(row.size() - 8) == ",100,7,3");
}

TEST_CASE("malformed input") {
    CHECK_THROWS_AS(parse_csv("round,domain\n"), ParameterError);
    CHECK_THROWS_AS(parse_csv(std::string(kCsvHeader) + "\n1,2,3\n"), ParameterError);
    CHECK_THROWS_AS(parse_json("{}"), ParameterError);
    CHECK_THROWS(parse_json("[{\"round\": 1"));
}

TEST_CASE("emit writes files and reports unwritable paths") {
    Rng rng(62);
    const MetricsTable t = random_table(rng, 5);
    emit(t, EmitFormat::csv, "test_metrics_tmp.csv");
    emit(t, EmitFormat::json, "test_metrics_tmp.json");
    CHECK(parse_csv(slurp("test_metrics_tmp.csv")) == t);
    CHECK(parse_json(slurp("test_metrics_tmp.json")) == t);
    std::remove("test_metrics_tmp.csv");
    std::remove("test_metrics_tmp.json");
    try {
        emit(t, EmitFormat::csv, "/nonexistent/dir/out.csv");
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("/nonexistent/dir/out.csv") != std::string::npos);
    }
}

TEST_CASE("forgetting examples") {
    CHECK(forgetting_metric(table_with({{1, 0.7}, {2, 0.7}, {3, 0.7}}), 0) == 0.0);
    CHECK(forgetting_metric(table_with({{1, 0.5}, {5, 0.9}, {10, 0.6}}), 0) == doctest::Approx(0.1));
    // Per-round means are taken before differencing.
    CHECK(forgetting_metric(table_with({{1, 0.4}, {1, 0.6}, {2, 0.3}, {2, 0.5}}), 0) == doctest::Approx(-0.1));
    CHECK_THROWS_AS(forgetting_metric(table_with({{1, 0.5}, {1, 0.6}}), 0), ParameterError);
    CHECK_THROWS_AS(forgetting_metric(table_with({{1, 0.5}, {2, 0.6}}, 3), 0), ParameterError);
}

TEST_CASE("aggregates") {
    const MetricsTable t = table_with({{1, 0.2}, {1, 0.4}, {2, 1.0}});
    CHECK(mean_accuracy(t) == doctest::Approx(1.6 / 3));
    const auto cells = domain_round_accuracy(t);
    CHECK(cells.at({0, 1}) == doctest::Approx(0.3));
    CHECK(cells.at({0, 2}) == 1.0);
}

TEST_CASE("sink accepts concurrent appends") {
    MetricsSink sink;
    std::vector<std::thread> threads;
    for (int k = 0; k < 4; ++k) {
        threads.emplace_back([&sink, k] {
            for (int i = 0; i < 250; ++i) {
                MetricsRecord r;
                r.batch = static_cast<std::size_t>(k * 1000 + i);
                sink.append(r);
                sink.append(CloudRecord{static_cast<std::uint64_t>(i)});
            }
        });
    }
    for (auto& t : threads) t.join();
    CHECK(sink.table().size() == 1000);
    CHECK(sink.cloud_log().size() == 1000);
    CHECK(cloud_log_csv(sink.cloud_log()).find('\n') != std::string::npos);
}
