// SPDX-License-Identifier: Apache-2.0

#include "cdca/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cdca {

namespace {

constexpr double kNormTolerance = 1e-9;

double population_std(std::span<const double> xs) {
    // Deviations from the first value: identical inputs give exactly zero.
    const double x0 = xs.front();
    const double n = static_cast<double>(xs.size());
    double mu = 0.0;
    for (double x : xs) mu += x - x0;
    mu /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - x0 - mu) * (x - x0 - mu);
    return std::sqrt(ss / n);
}

void check_fraction(double frac) {
    if (!(frac >= 0.0 && frac <= 1.0)) throw ParameterError("selection fraction must be in [0,1]");
}

std::vector<std::size_t> complement(std::size_t n, const std::vector<std::size_t>& sorted_selected) {
    std::vector<std::size_t> out;
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (j < sorted_selected.size() && sorted_selected[j] == i) {
            ++j;
        } else {
            out.push_back(i);
        }
    }
    return out;
}

} // namespace

UncertaintyScore::UncertaintyScore(double value) : value_(value) {
    // Rounding can push a saturated std-dev a hair past 0.5.
    if (!(value >= 0.0 && value <= kMaxUncertainty + 1e-12)) {
        throw ParameterError("uncertainty score out of [0, 0.5]: " + std::to_string(value));
    }
    value_ = std::min(value, kMaxUncertainty);
}

std::string to_string(UncAggregate a) {
    return a == UncAggregate::predicted_class ? "predicted_class" : "class_mean";
}

UncAggregate parse_unc_aggregate(const std::string& s) {
    if (s == "predicted_class") return UncAggregate::predicted_class;
    if (s == "class_mean") return UncAggregate::class_mean;
    throw ParameterError("unknown uncertainty aggregate '" + s + "'");
}

UncertaintyScore v_unc(const std::vector<std::vector<double>>& runs, UncAggregate aggregate) {
    if (runs.size() < 2) throw ParameterError("v_unc needs at least two stochastic passes");
    const std::size_t classes = runs.front().size();
    if (classes == 0) throw ParameterError("v_unc: empty probability vector");
    for (const auto& r : runs) {
        if (r.size() != classes) throw ParameterError("v_unc: runs have different class counts");
        const double s = std::accumulate(r.begin(), r.end(), 0.0);
        if (std::abs(s - 1.0) > kNormTolerance) throw ParameterError("v_unc: run is not normalized");
    }
    const std::size_t n = runs.size();
    std::vector<double> column(n);
    if (aggregate == UncAggregate::predicted_class) {
        std::vector<double> mean(classes, 0.0);
        for (const auto& r : runs) {
            for (std::size_t c = 0; c < classes; ++c) mean[c] += r[c];
        }
        const auto top = static_cast<std::size_t>(std::max_element(mean.begin(), mean.end()) - mean.begin());
        for (std::size_t i = 0; i < n; ++i) column[i] = runs[i][top];
        return UncertaintyScore(population_std(column));
    }
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < n; ++i) column[i] = runs[i][c];
        total += population_std(column);
    }
    return UncertaintyScore(total / static_cast<double>(classes));
}

std::vector<UncertaintyScore> batch_v_unc(const std::vector<Tensor>& runs, UncAggregate aggregate) {
    if (runs.size() < 2) throw ParameterError("batch_v_unc needs at least two stochastic passes");
    const Shape shape = runs.front().shape();
    for (const auto& r : runs) {
        if (r.shape() != shape) throw DimensionError("batch_v_unc: passes have different shapes");
    }
    const std::size_t batch = runs.front().rows();
    std::vector<UncertaintyScore> scores;
    scores.reserve(batch);
    std::vector<std::vector<double>> sample(runs.size());
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < runs.size(); ++i) {
            auto row = runs[i].row(b);
            sample[i].assign(row.begin(), row.end());
        }
        scores.push_back(v_unc(sample, aggregate));
    }
    return scores;
}

double confidence_score(std::span<const double> probs) {
    if (probs.empty()) throw ParameterError("confidence_score: empty probability vector");
    return *std::max_element(probs.begin(), probs.end());
}

Partition select_uplink(const Tensor& batch, std::span<const UncertaintyScore> scores, double threshold) {
    if (!(threshold >= 0.0)) throw ParameterError("uplink threshold must be non-negative");
    if (scores.size() != batch.rows()) {
        throw ParameterError("select_uplink: " + std::to_string(scores.size()) + " scores for " +
                             std::to_string(batch.rows()) + " samples");
    }
    Partition p;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        (scores[i].value() > threshold ? p.selected : p.rejected).push_back(i);
    }
    return p;
}

Partition select_by_confidence(std::span<const double> confidences, double frac) {
    check_fraction(frac);
    const std::size_t n = confidences.size();
    const auto k = static_cast<std::size_t>(std::floor(frac * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return confidences[a] < confidences[b]; });
    Partition p;
    p.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(p.selected.begin(), p.selected.end());
    p.rejected = complement(n, p.selected);
    return p;
}

Partition select_random(std::size_t n, double frac, Rng& rng) {
    check_fraction(frac);
    const auto k = static_cast<std::size_t>(std::floor(frac * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Partial Fisher-Yates over the first k slots.
    for (std::size_t i = 0; i < k; ++i) {
        std::swap(order[i], order[i + rng.index(n - i)]);
    }
    Partition p;
    p.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(p.selected.begin(), p.selected.end());
    p.rejected = complement(n, p.selected);
    return p;
}

std::string to_string(SelectionKind k) {
    switch (k) {
    case SelectionKind::ugs: return "ugs";
    case SelectionKind::confidence: return "confidence";
    case SelectionKind::random: return "random";
    case SelectionKind::all: return "all";
    }
    return "?";
}

SelectionKind parse_selection_kind(const std::string& s) {
    if (s == "ugs") return SelectionKind::ugs;
    if (s == "confidence") return SelectionKind::confidence;
    if (s == "random") return SelectionKind::random;
    if (s == "all") return SelectionKind::all;
    throw ParameterError("unknown selection strategy '" + s + "'");
}

double mean_score(std::span<const UncertaintyScore> scores) {
    if (scores.empty()) return 0.0;
    double s = 0.0;
    for (const auto& v : scores) s += v.value();
    return s / static_cast<double>(scores.size());
}

} // namespace cdca
