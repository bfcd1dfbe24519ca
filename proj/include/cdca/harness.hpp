// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration: source pretraining, the test-then-train loop
// over stream -> device -> channel -> cloud -> channel -> device, threshold
// calibration and multi-seed preset suites.

#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "cdca/cloud.hpp"
#include "cdca/config.hpp"
#include "cdca/device.hpp"
#include "cdca/metrics.hpp"
#include "cdca/stream.hpp"

namespace cdca {

/// Everything that depends only on (config, seed) and not on the preset.
struct PretrainedModels {
    BaseTask task;
    LabeledSet source;
    Network student; // device and cloud student start from this
    Network teacher;
    Discriminator disc;
};

/// Plain minibatch SGD on cross-entropy with dropout active.
void train_supervised(Network& net, const LabeledSet& data, std::size_t epochs, std::size_t batch, double lr, Rng& rng);

double accuracy_on(const Network& net, const Tensor& inputs, std::span<const int> labels);

PretrainedModels pretrain(const ExperimentConfig& cfg, std::uint64_t seed);

/// Stream seed used by every preset for a given run seed.
std::uint64_t stream_seed(std::uint64_t seed);

struct RunOptions {
    /// Stop after this many batches; 0 runs the whole stream.
    std::size_t max_batches = 0;
    /// Reuse models instead of pretraining again.
    const PretrainedModels* pretrained = nullptr;
    /// Overrides stream_seed(seed).
    std::optional<std::uint64_t> stream_seed;
    /// Lockstep only: after every applied downlink compare device and cloud
    /// student predictions on a probe batch.
    bool check_consistency = false;
};

struct RunResult {
    MetricsTable records;
    std::vector<CloudRecord> cloud_log;
    double mean_accuracy = 0.0;
    std::size_t samples = 0;
    std::size_t selected = 0;
    double uplink_fraction = 0.0; // selected / samples
    ByteCounter bytes;
    std::uint32_t final_version = 0;
    std::size_t consistency_checks = 0;
    std::size_t consistency_failures = 0;
};

/// Throws ConfigError before doing any work when the config is invalid.
RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, const RunOptions& opts = {});

/// Whole warm-up stream. The uplink fraction keeps falling as the student
/// sharpens, so a short prefix overestimates it.
inline constexpr std::size_t kCalibrationBatches = 0;

/// UGS threshold whose uplink fraction on a warm-up stream (same schedule,
/// independent seed, first `batches` batches or all of it for 0) is closest
/// to `target`, found by bisection.
double calibrate_threshold(const ExperimentConfig& cfg, std::uint64_t seed, double target,
                           const PretrainedModels& pretrained, std::size_t batches = kCalibrationBatches);

struct SuiteOptions {
    std::vector<std::string> presets;
    /// Adds ugs@f, random@f and confidence@f rows for each target fraction,
    /// with per-seed calibrated UGS thresholds.
    bool sweep = false;
    std::vector<double> sweep_targets{0.25, 0.5, 0.75};
    /// Called after each finished run with a short description.
    std::function<void(const std::string&)> progress;
};

struct SuiteRow {
    std::string label;
    std::string preset;
    double target_frac = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::uint64_t> seeds;
    std::vector<double> accuracy;      // per seed
    std::vector<double> uplink_frac;   // per seed
    std::vector<std::uint64_t> up_bytes;
    std::vector<std::uint64_t> down_bytes;
    std::vector<double> thresholds;    // per seed, UGS threshold in use
    std::vector<std::vector<double>> domain_accuracy; // [seed][domain]
    std::vector<std::vector<double>> forgetting;      // [seed][domain]

    double median_accuracy() const;
    double median_uplink_frac() const;
    double median_up_bytes() const;
    std::vector<double> median_domain_accuracy() const;
    std::vector<double> median_forgetting() const;
};

double median(std::vector<double> values);

std::vector<SuiteRow> run_suite(const ExperimentConfig& base, const SuiteOptions& opts);

/// One line per row: label, preset, target, medians, then per-domain medians.
std::string suite_csv(const std::vector<SuiteRow>& rows);

} // namespace cdca
