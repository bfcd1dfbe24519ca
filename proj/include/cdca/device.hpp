// SPDX-License-Identifier: Apache-2.0
//
// Device runtime: test-first inference through the current prompt, MC
// dropout scoring, uplink selection and versioned downlink application.

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cdca/models.hpp"
#include "cdca/prompt.hpp"
#include "cdca/uncertainty.hpp"
#include "cdca/wire.hpp"

namespace cdca {

struct SelectionStrategy {
    SelectionKind kind = SelectionKind::ugs;
    /// Fraction for confidence and random selection.
    double frac = 0.5;

    friend bool operator==(const SelectionStrategy&, const SelectionStrategy&) = default;
};

struct DeviceState {
    Network net;
    Prompt prompt;
    double threshold = kDefaultUncertaintyThreshold;
    std::uint32_t model_version = 0;
    Rng rng;
    SelectionStrategy strategy;
    std::size_t mc_passes = kDefaultMcPasses;
    UncAggregate aggregate = UncAggregate::predicted_class;
    /// When false the device never uplinks (source-only operation).
    bool uplink_enabled = true;
};

struct DeviceStepResult {
    Tensor probs;                 // deterministic, prompted
    std::vector<int> predictions; // argmax of probs
    std::vector<UncertaintyScore> scores;
    std::vector<std::size_t> selected;
    std::optional<UplinkMsg> uplink;
};

/// Takes inputs only: target labels are not reachable from here.
DeviceStepResult device_step(DeviceState& state, const Tensor& inputs);

enum class DownlinkStatus { applied, stale };

/// Replaces network and prompt together when msg.version is newer;
/// otherwise leaves the state untouched and reports `stale`.
DownlinkStatus apply_downlink(DeviceState& state, const DownlinkMsg& msg);

} // namespace cdca
