// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <type_traits>
#include <vector>

#include "doctest.h"

#include "cdca/cloud.hpp"
#include "cdca/device.hpp"
#include "cdca/stream.hpp"

using namespace cdca;

// The device entry point accepts a Tensor of inputs and nothing that carries labels.
static_assert(std::is_invocable_v<decltype(&device_step), DeviceState&, const Tensor&>);
static_assert(!std::is_invocable_v<decltype(&device_step), DeviceState&, const Batch&>);
static_assert(!std::is_invocable_v<decltype(&device_step), DeviceState&, const LabeledSet&>);

namespace {

DeviceState make_device(double dropout, std::uint64_t seed) {
    Rng rng(seed);
    DeviceState s;
    s.net = build_network({{6, 16, 16, 3}, dropout}, rng);
    s.prompt = Prompt::full(6);
    s.rng = Rng(seed + 1);
    return s;
}

Tensor inputs(std::size_t rows, std::uint64_t seed) {
    Rng rng(seed);
    Tensor x({rows, 6});
    for (double& v : x.data()) v = rng.normal();
    return x;
}

DownlinkMsg perturbed(const DeviceState& s, std::uint32_t version, double delta) {
    DownlinkMsg m;
    m.version = version;
    m.layers = s.net.layers();
    for (auto& l : m.layers) {
        for (double& v : l.weight.data()) v += delta;
    }
    Tensor phi({6}, delta);
    m.prompt = Prompt(PromptLayout::full_vector, 6, phi);
    return m;
}

} // namespace

TEST_CASE("predictions use the prompt and the deterministic pass") {
    DeviceState s = make_device(0.2, 1);
    s.prompt = Prompt(PromptLayout::full_vector, 6, Tensor({6}, 0.3));
    const Tensor x = inputs(8, 2);
    const DeviceStepResult r = device_step(s, x);
    CHECK(bit_equal(r.probs, predict(s.net, apply(x, s.prompt))));
    CHECK(r.predictions == argmax_rows(r.probs));
    CHECK(r.scores.size() == 8);
    CHECK_THROWS_AS(device_step(s, Tensor({2, 5})), DimensionError);
}

TEST_CASE("threshold above the score bound uplinks nothing") {
    DeviceState s = make_device(0.3, 3);
    s.threshold = 0.6;
    const DeviceStepResult r = device_step(s, inputs(8, 4));
    CHECK_FALSE(r.uplink.has_value());
    CHECK(r.predictions.size() == 8);
}

TEST_CASE("dropout-free device has zero scores and no UGS uplink") {
    DeviceState s = make_device(0.0, 5);
    const DeviceStepResult r = device_step(s, inputs(8, 6));
    for (const auto& v : r.scores) CHECK(v.value() == 0.0);
    CHECK_FALSE(r.uplink.has_value());
}

TEST_CASE("strategy all uplinks every original input in order") {
    DeviceState s = make_device(0.1, 7);
    s.strategy.kind = SelectionKind::all;
    s.prompt = Prompt(PromptLayout::full_vector, 6, Tensor({6}, 5.0));
    const Tensor x = inputs(8, 8);
    const DeviceStepResult r = device_step(s, x);
    REQUIRE(r.uplink.has_value());
    CHECK(r.uplink->count() == 8);
    CHECK(r.uplink->input_tensor() == x);
    // Byte-level: the encoded payload carries x, not x + prompt.
    const Bytes p = encode(*r.uplink);
    double v = 0.0;
    std::memcpy(&v, p.data() + kUplinkHeaderBytes, 8);
    CHECK(v == x[0]);
    for (std::size_t i = 0; i < 8; ++i) CHECK(r.uplink->scores[i] == r.scores[i].value());
}

TEST_CASE("confidence and random strategies select the configured fraction") {
    DeviceState s = make_device(0.1, 9);
    s.strategy = {SelectionKind::confidence, 0.5};
    auto r = device_step(s, inputs(8, 10));
    CHECK(r.selected.size() == 4);
    s.strategy = {SelectionKind::random, 0.25};
    r = device_step(s, inputs(8, 11));
    CHECK(r.selected.size() == 2);
    s.uplink_enabled = false;
    r = device_step(s, inputs(8, 12));
    CHECK_FALSE(r.uplink.has_value());
    CHECK(r.selected.empty());
}

TEST_CASE("UGS selection matches the strict threshold rule") {
    DeviceState s = make_device(0.3, 13);
    s.threshold = 0.01;
    const DeviceStepResult r = device_step(s, inputs(64, 14));
    for (std::size_t i = 0, j = 0; i < 64; ++i) {
        const bool up = r.scores[i].value() > 0.01;
        if (up) {
            REQUIRE(j < r.selected.size());
            CHECK(r.selected[j++] == i);
        }
    }
}

TEST_CASE("downlink version gate") {
    DeviceState s = make_device(0.1, 15);
    const DownlinkMsg v1 = perturbed(s, 1, 0.01);
    CHECK(apply_downlink(s, v1) == DownlinkStatus::applied);
    CHECK(s.model_version == 1);
    const Network after = s.net;
    const Prompt prompt_after = s.prompt;
    CHECK(apply_downlink(s, perturbed(s, 1, 0.5)) == DownlinkStatus::stale);
    CHECK(s.net == after);
    CHECK(s.prompt == prompt_after);
    CHECK(apply_downlink(s, perturbed(s, 2, 0.01)) == DownlinkStatus::applied);
    CHECK(apply_downlink(s, perturbed(s, 3, 0.01)) == DownlinkStatus::applied);
    CHECK(s.model_version == 3);
    CHECK(apply_downlink(s, perturbed(s, 0, 0.01)) == DownlinkStatus::stale);
}

TEST_CASE("a malformed downlink leaves the state untouched") {
    DeviceState s = make_device(0.1, 16);
    const DeviceState before = s;
    DownlinkMsg bad = perturbed(s, 5, 0.1);
    bad.layers.pop_back();
    CHECK_THROWS(apply_downlink(s, bad));
    CHECK(s.net == before.net);
    CHECK(s.prompt == before.prompt);
    CHECK(s.model_version == 0);
}

TEST_CASE("after a downlink device predictions equal the cloud student's") {
    Rng rng(17);
    const Network teacher = build_network(MLPSpec::default_teacher(6, 3), rng);
    const Network student = build_network({{6, 16, 16, 3}, 0.1}, rng);
    const Discriminator disc = build_discriminator(MLPSpec::default_discriminator(64), rng);
    LabeledSet src{inputs(40, 18), std::vector<int>(40, 0)};
    for (std::size_t i = 0; i < 40; ++i) src.labels[i] = static_cast<int>(i % 3);
    CloudConfig cc;
    cc.sync_interval = 1;
    CloudState cloud = make_cloud_state(teacher, student, disc, Prompt::full(6), src, cc, Rng(19));
    DeviceState dev = make_device(0.1, 20);
    dev.strategy.kind = SelectionKind::all;
    const Tensor probe = inputs(32, 21);
    for (int step = 0; step < 5; ++step) {
        const auto r = device_step(dev, inputs(8, 100 + step));
        REQUIRE(r.uplink.has_value());
        const auto u = cloud_update(cloud, decode_uplink(encode(*r.uplink)));
        REQUIRE(u.downlink.has_value());
        REQUIRE(apply_downlink(dev, decode_downlink(encode(*u.downlink))) == DownlinkStatus::applied);
        CHECK(bit_equal(predict(dev.net, apply(probe, dev.prompt)),
                        predict(cloud.student, apply(probe, cloud.prompt))));
    }
}

TEST_CASE("test-then-train: batch predictions depend only on earlier downlinks") {
    // Replaying the same batch with the downlink it caused suppressed gives
    // the same predictions, since the update lands after the batch.
    DeviceState a = make_device(0.1, 22);
    DeviceState b = a;
    const Tensor x0 = inputs(8, 23), x1 = inputs(8, 24);
    const auto ra = device_step(a, x0);
    apply_downlink(a, perturbed(a, 1, 0.2));
    const auto rb = device_step(b, x0);
    CHECK(ra.predictions == rb.predictions);
    CHECK(bit_equal(ra.probs, rb.probs));
    // The next batch does see the new model.
    CHECK_FALSE(bit_equal(device_step(a, x1).probs, device_step(b, x1).probs));
}
