// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <limits>
#include <vector>

#include "doctest.h"

#include "cdca/wire.hpp"

using namespace cdca;

namespace {

// Arbitrary bit patterns, including NaNs, infinities and subnormals.
double random_bits(Rng& rng) {
    switch (rng.index(8)) {
    case 0: return std::bit_cast<double>(rng.next_u64());
    case 1: return -0.0;
    case 2: return std::numeric_limits<double>::denorm_min();
    default: return rng.normal() * 10.0;
    }
}

UplinkMsg random_uplink(Rng& rng) {
    UplinkMsg m;
    const std::size_t count = rng.index(6);
    m.width = static_cast<std::uint32_t>(1 + rng.index(12));
    for (std::size_t i = 0; i < count * m.width; ++i) m.inputs.push_back(random_bits(rng));
    for (std::size_t i = 0; i < count; ++i) m.scores.push_back(rng.uniform(0.0, 0.5));
    return m;
}

DownlinkMsg random_downlink(Rng& rng) {
    DownlinkMsg m;
    m.version = static_cast<std::uint32_t>(rng.next_u64());
    const std::size_t layers = 1 + rng.index(3);
    std::size_t in = 1 + rng.index(6);
    const std::size_t input_width = in;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t out = 1 + rng.index(6);
        DenseLayer d{Tensor({in, out}), Tensor({out})};
        for (double& v : d.weight.data()) v = random_bits(rng);
        for (double& v : d.bias.data()) v = random_bits(rng);
        m.layers.push_back(std::move(d));
        in = out;
    }
    const auto layout = rng.index(2) == 0 ? PromptLayout::full_vector : PromptLayout::prefix;
    const std::size_t k = layout == PromptLayout::full_vector ? input_width : 1 + rng.index(input_width);
    Tensor phi({k});
    for (double& v : phi.data()) v = random_bits(rng);
    m.prompt = Prompt(layout, input_width, phi);
    return m;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * 8) == 0);
}

} // namespace

TEST_CASE("frame layout") {
    const Frame f{FrameTag::downlink, Bytes(100, 0xAB)};
    const Bytes b = encode_frame(f);
    REQUIRE(b.size() == 105);
    CHECK(b[0] == 0x02);
    CHECK(b[1] == 100);
    CHECK(b[2] == 0);
    CHECK(b[3] == 0);
    CHECK(b[4] == 0);
    CHECK(decode_frame(b) == f);
    const auto [tag, len] = decode_frame_header(std::span(b).first(5));
    CHECK(tag == FrameTag::downlink);
    CHECK(len == 100);
}

TEST_CASE("frame decode errors") {
    const Bytes b = encode_frame({FrameTag::uplink, Bytes{1, 2, 3}});
    Bytes bad = b;
    bad[0] = 0x07;
    CHECK_THROWS_AS(decode_frame(bad), DecodeError);
    CHECK_THROWS_AS(decode_frame(std::span(b).first(6)), DecodeError);
    Bytes extra = b;
    extra.push_back(0);
    CHECK_THROWS_AS(decode_frame(extra), DecodeError);
    CHECK_THROWS_AS(decode_frame_header(std::span(b).first(4)), DecodeError);
    try {
        decode_frame(bad);
    } catch (const DecodeError& e) {
        CHECK(e.offset() == 0);
    }
}

TEST_CASE("uplink encoding") {
    const UplinkMsg m = UplinkMsg::from(Tensor::matrix({{1.5, -2.0}, {0.25, 8.0}}), std::vector<double>{0.01, 0.2});
    const Bytes p = encode(m);
    CHECK(p.size() == uplink_payload_size(2, 2));
    CHECK(p.size() == 9 + 2 * 24);
    CHECK(p[0] == 0x01);
    double first = 0.0;
    std::memcpy(&first, p.data() + 9, 8);
    CHECK(first == 1.5);
    double score = 0.0;
    std::memcpy(&score, p.data() + 9 + 16, 8);
    CHECK(score == 0.01);
    CHECK(decode_uplink(p) == m);
    CHECK(m.input_tensor() == Tensor::matrix({{1.5, -2.0}, {0.25, 8.0}}));

    UplinkMsg empty;
    empty.width = 4;
    const Bytes e = encode(empty);
    CHECK(e.size() == 9);
    const UplinkMsg back = decode_uplink(e);
    CHECK(back.count() == 0);
    CHECK(back.inputs.empty());

    CHECK_THROWS_AS(UplinkMsg::from(Tensor({2, 2}), std::vector<double>{0.1}), DimensionError);
}

TEST_CASE("uplink size is affine in the sample count") {
    Rng rng(51);
    for (int t = 0; t < 50; ++t) {
        const std::size_t count = rng.index(20), width = 1 + rng.index(20);
        std::vector<double> s(count, 0.1);
        const UplinkMsg m = count == 0 ? UplinkMsg{static_cast<std::uint32_t>(width), {}, {}}
                                       : UplinkMsg::from(Tensor({count, width}), s);
        CHECK(encode(m).size() == 9 + count * (8 * width + 8));
        CHECK(make_frame(m).wire_size() == 14 + count * (8 * width + 8));
    }
}

TEST_CASE("downlink encoding and size split") {
    Rng rng(52);
    const DownlinkMsg m = random_downlink(rng);
    const Bytes p = encode(m);
    const DownlinkSizes s = downlink_sizes(m);
    CHECK(s.total_payload == p.size());
    CHECK(s.parameter_bytes + s.prompt_bytes + 1 + 4 == s.total_payload);
    CHECK(s.prompt_bytes == 1 + 4 + 4 + 8 * m.prompt.length());
    CHECK(decode_downlink(p) == m);
    CHECK(std::holds_alternative<DownlinkMsg>(decode(p)));
    CHECK_THROWS_AS(decode_uplink(p), DecodeError);
}

TEST_CASE("property: random round trips are bit exact") {
    Rng rng(53);
    for (int t = 0; t < 10000; ++t) {
        if (t % 2 == 0) {
            const UplinkMsg m = random_uplink(rng);
            const Frame f = decode_frame(encode_frame(make_frame(m)));
            CHECK(f.tag == FrameTag::uplink);
            const auto back = std::get<UplinkMsg>(decode(f.payload));
            CHECK(back.width == m.width);
            CHECK(same_bits(back.inputs, m.inputs));
            CHECK(same_bits(back.scores, m.scores));
        } else {
            const DownlinkMsg m = random_downlink(rng);
            const Frame f = decode_frame(encode_frame(make_frame(m)));
            CHECK(f.tag == FrameTag::downlink);
            CHECK(std::get<DownlinkMsg>(decode(f.payload)) == m);
        }
    }
}

TEST_CASE("corrupted downlink shape field is a decode error") {
    Rng rng(54);
    DownlinkMsg m = random_downlink(rng);
    Bytes p = encode(m);
    // tag, version, layer count, then the first layer's input width.
    p[9] ^= 0x40;
    CHECK_THROWS_AS(decode_downlink(p), DecodeError);
}

TEST_CASE("property: corrupted and truncated payloads never escape as anything but DecodeError") {
    Rng rng(55);
    std::size_t errors = 0;
    for (int t = 0; t < 5000; ++t) {
        Bytes p = t % 2 == 0 ? encode(random_uplink(rng)) : encode(random_downlink(rng));
        switch (rng.index(3)) {
        case 0: p[rng.index(p.size())] ^= static_cast<std::uint8_t>(1 + rng.index(255)); break;
        case 1: p.resize(rng.index(p.size())); break;
        default: p.push_back(static_cast<std::uint8_t>(rng.index(256))); break;
        }
        try {
            (void)decode(p);
        } catch (const DecodeError&) {
            ++errors;
        }
    }
    CHECK(errors > 0);
}

TEST_CASE("byte counting") {
    ByteCounter c;
    CHECK(c == ByteCounter{});
    count_bytes(c, Direction::uplink, Frame{FrameTag::uplink, Bytes(100)});
    CHECK(c.uplink_bytes == 105);
    CHECK(c.downlink_bytes == 0);
    count_bytes(c, Direction::downlink, Frame{FrameTag::downlink, Bytes(3)});
    CHECK(c.downlink_bytes == 8);
    CHECK(direction_of(FrameTag::uplink) == Direction::uplink);
    CHECK(direction_of(FrameTag::downlink) == Direction::downlink);
}
