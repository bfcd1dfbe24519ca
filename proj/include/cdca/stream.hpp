// SPDX-License-Identifier: Apache-2.0
//
// Synthetic source task and the continually shifting target stream.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cdca/tensor.hpp"

namespace cdca {

/// Gaussian class clusters around fixed centers.
struct BaseTask {
    std::size_t dim = 0;
    std::size_t classes = 0;
    Tensor centers; // [classes, dim]
    double noise = 0.0;

    /// Centers drawn i.i.d. N(0, center_scale^2) per coordinate.
    static BaseTask generate(std::size_t dim, std::size_t classes, double center_scale, double noise,
                             std::uint64_t seed);
};

struct LabeledSet {
    Tensor inputs;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

/// n samples with class i % C before shuffling, so counts differ by at most one.
LabeledSet gen_source(const BaseTask& task, std::size_t n, std::uint64_t seed);

enum class CorruptionKind { bias, gauss_noise, rotate, scale, mask };

std::string to_string(CorruptionKind k);
CorruptionKind parse_corruption_kind(const std::string& s);

struct DomainSpec {
    CorruptionKind kind = CorruptionKind::bias;
    double severity = 0.0;
    /// Fixes the rotation plane and the mask subset.
    std::uint64_t seed = 0;

    void validate() const;

    /// "kind:severity"
    std::string str() const;
    static DomainSpec parse(const std::string& s);

    friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

/// Apply a corruption row-wise. `rng` is only consumed by gauss_noise.
Tensor corrupt(const Tensor& x, const DomainSpec& domain, Rng& rng);

struct StreamConfig {
    std::vector<DomainSpec> sequence;
    std::size_t rounds = 10;
    std::size_t batches_per_domain = 25;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;

    std::size_t total_batches() const { return rounds * sequence.size() * batches_per_domain; }
    void validate() const;
};

/// One test-time batch. Labels are for metrics only; adaptation code paths
/// take `inputs` and never see this struct.
struct Batch {
    Tensor inputs;
    std::vector<int> labels;
    std::size_t domain_id = 0;
    std::size_t round = 0;
    std::size_t index = 0;
};

class DomainStream {
public:
    DomainStream(BaseTask task, StreamConfig config);

    /// nullopt once all rounds are consumed.
    std::optional<Batch> next();

    std::size_t position() const noexcept { return position_; }
    std::size_t total() const noexcept { return config_.total_batches(); }
    const StreamConfig& config() const noexcept { return config_; }
    const BaseTask& task() const noexcept { return task_; }

private:
    BaseTask task_;
    StreamConfig config_;
    Rng rng_;
    std::size_t position_ = 0;
};

} // namespace cdca
