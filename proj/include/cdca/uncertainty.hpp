// SPDX-License-Identifier: Apache-2.0
//
// Monte-Carlo dropout uncertainty and the sample selection strategies that
// decide what the device uplinks.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cdca/tensor.hpp"

namespace cdca {

/// Standard deviation of probabilities; always within [0, 0.5].
class UncertaintyScore {
public:
    UncertaintyScore() = default;
    explicit UncertaintyScore(double value);

    double value() const noexcept { return value_; }

    friend auto operator<=>(const UncertaintyScore&, const UncertaintyScore&) = default;

private:
    double value_ = 0.0;
};

inline constexpr double kMaxUncertainty = 0.5;
inline constexpr double kDefaultUncertaintyThreshold = 0.008;

enum class UncAggregate {
    predicted_class, // std-dev of the mean-argmax class probability
    class_mean,      // mean over classes of per-class std-dev
};

std::string to_string(UncAggregate a);
UncAggregate parse_unc_aggregate(const std::string& s);

/// Population standard deviation across `runs` (one probability vector per
/// stochastic pass) of the tracked class probability. Requires at least two
/// normalized runs of equal length.
UncertaintyScore v_unc(const std::vector<std::vector<double>>& runs,
                       UncAggregate aggregate = UncAggregate::predicted_class);

/// Per-row scores for a batch: runs[i] is pass i's [B, C] probabilities.
std::vector<UncertaintyScore> batch_v_unc(const std::vector<Tensor>& runs,
                                          UncAggregate aggregate = UncAggregate::predicted_class);

/// Largest class probability.
double confidence_score(std::span<const double> probs);

struct Partition {
    std::vector<std::size_t> selected;
    std::vector<std::size_t> rejected;
};

/// Uncertainty guided sampling: selected iff score > threshold.
Partition select_uplink(const Tensor& batch, std::span<const UncertaintyScore> scores,
                        double threshold = kDefaultUncertaintyThreshold);

/// floor(frac * n) rows with the lowest confidence; ties keep index order.
Partition select_by_confidence(std::span<const double> confidences, double frac);

/// floor(frac * n) rows drawn uniformly without replacement.
Partition select_random(std::size_t n, double frac, Rng& rng);

enum class SelectionKind { ugs, confidence, random, all };

std::string to_string(SelectionKind k);
SelectionKind parse_selection_kind(const std::string& s);

double mean_score(std::span<const UncertaintyScore> scores);

} // namespace cdca
