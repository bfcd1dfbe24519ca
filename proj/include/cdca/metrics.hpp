// SPDX-License-Identifier: Apache-2.0
//
// Per-batch metrics records, cloud loss records, and their CSV/JSON forms.
//
// CSV header (fixed):
//   round,domain,batch,accuracy,v_unc_mean,uplink_frac,up_bytes,down_bytes,version
//
// round is 1-based, domain and batch are 0-based. Byte columns are cumulative.

#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cdca {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MetricsRecord {
    std::size_t round = 1;
    std::size_t domain = 0;
    std::size_t batch = 0;
    double accuracy = 0.0;
    double v_unc_mean = 0.0;
    double uplink_frac = 0.0;
    std::uint64_t up_bytes = 0;
    std::uint64_t down_bytes = 0;
    std::uint32_t version = 0;

    friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

using MetricsTable = std::vector<MetricsRecord>;

/// One cloud update.
struct CloudRecord {
    std::uint64_t update = 0;
    double l_sup = 0.0;
    double l_align = 0.0;
    double l_stu = 0.0;
    double kept_frac = 0.0;
    double batch_v_unc = 0.0;
    double beta = 0.0;

    friend bool operator==(const CloudRecord&, const CloudRecord&) = default;
};

/// Append-only, safe to feed from several threads.
class MetricsSink {
public:
    void append(const MetricsRecord& r);
    void append(const CloudRecord& r);
    MetricsTable table() const;
    std::vector<CloudRecord> cloud_log() const;

private:
    mutable std::mutex mutex_;
    MetricsTable records_;
    std::vector<CloudRecord> cloud_;
};

inline constexpr const char* kCsvHeader =
    "round,domain,batch,accuracy,v_unc_mean,uplink_frac,up_bytes,down_bytes,version";

std::string to_csv(const MetricsTable& table);
MetricsTable parse_csv(const std::string& text);
std::string to_json(const MetricsTable& table);
MetricsTable parse_json(const std::string& text);
std::string cloud_log_csv(const std::vector<CloudRecord>& log);

enum class EmitFormat { csv, json };

/// Throws IoError naming the path when it cannot be written.
void emit(const MetricsTable& table, EmitFormat format, const std::string& path);
void write_text(const std::string& text, const std::string& path);

double mean_accuracy(const MetricsTable& table);

/// Mean batch accuracy keyed by (domain, round).
std::map<std::pair<std::size_t, std::size_t>, double> domain_round_accuracy(const MetricsTable& table);

/// accuracy(domain, last round) - accuracy(domain, first round).
/// Throws ParameterError when the domain has fewer than two rounds.
double forgetting_metric(const MetricsTable& table, std::size_t domain);

} // namespace cdca
