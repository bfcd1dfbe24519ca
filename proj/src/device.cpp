// SPDX-License-Identifier: Apache-2.0

#include "cdca/device.hpp"

#include <algorithm>

namespace cdca {

DeviceStepResult device_step(DeviceState& state, const Tensor& inputs) {
    if (inputs.rank() != 2 || inputs.cols() != state.net.input_width()) {
        throw DimensionError("device expects inputs of width " + std::to_string(state.net.input_width()) + ", got " +
                             shape_str(inputs.shape()));
    }
    DeviceStepResult r;
    const Tensor prompted = apply(inputs, state.prompt);
    r.probs = predict(state.net, prompted);
    r.predictions = argmax_rows(r.probs);

    const std::size_t passes = std::max<std::size_t>(state.mc_passes, 2);
    r.scores = batch_v_unc(mc_predict(state.net, prompted, passes, state.rng), state.aggregate);

    if (!state.uplink_enabled) return r;

    switch (state.strategy.kind) {
    case SelectionKind::ugs:
        r.selected = select_uplink(inputs, r.scores, state.threshold).selected;
        break;
    case SelectionKind::confidence: {
        std::vector<double> conf(inputs.rows());
        for (std::size_t i = 0; i < conf.size(); ++i) conf[i] = confidence_score(r.probs.row(i));
        r.selected = select_by_confidence(conf, state.strategy.frac).selected;
        break;
    }
    case SelectionKind::random:
        r.selected = select_random(inputs.rows(), state.strategy.frac, state.rng).selected;
        break;
    case SelectionKind::all:
        r.selected.resize(inputs.rows());
        for (std::size_t i = 0; i < r.selected.size(); ++i) r.selected[i] = i;
        break;
    }

    if (!r.selected.empty()) {
        std::vector<double> scores;
        scores.reserve(r.selected.size());
        for (auto i : r.selected) scores.push_back(r.scores[i].value());
        // Original inputs go up; the cloud applies its own prompt.
        r.uplink = UplinkMsg::from(inputs.gather_rows(r.selected), scores);
    }
    return r;
}

DownlinkStatus apply_downlink(DeviceState& state, const DownlinkMsg& msg) {
    if (msg.version <= state.model_version) return DownlinkStatus::stale;
    if (!msg.prompt.same_layout(state.prompt)) throw DimensionError("downlink prompt layout does not match the device");
    // Build both replacements before touching the state.
    Network next = state.net;
    next.assign_layers(msg.layers);
    Prompt prompt(msg.prompt.layout(), msg.prompt.input_width(), msg.prompt.values(), state.prompt.alpha());
    state.net = std::move(next);
    state.prompt = std::move(prompt);
    state.model_version = msg.version;
    return DownlinkStatus::applied;
}

} // namespace cdca
