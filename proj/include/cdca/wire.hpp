// SPDX-License-Identifier: Apache-2.0
//
// Binary uplink/downlink messages. All integers are little-endian u32,
// all reals little-endian IEEE-754 binary64.
//
// Frame:     tag u8 | payload length u32 | payload
// Uplink:    0x01 | count u32 | width u32 | count x (width x f64 input, f64 v_unc)
// Downlink:  0x02 | version u32 | layers u32 | per layer (in u32, out u32,
//            in*out f64 weight, out f64 bias) | prompt layout u8 |
//            input width u32 | length u32 | length x f64
//
// Payloads repeat the tag so a payload decodes on its own.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cdca/models.hpp"
#include "cdca/prompt.hpp"
#include "cdca/tensor.hpp"

namespace cdca {

using Bytes = std::vector<std::uint8_t>;

enum class FrameTag : std::uint8_t { uplink = 0x01, downlink = 0x02 };

inline constexpr std::size_t kFrameHeaderBytes = 5;
inline constexpr std::size_t kUplinkHeaderBytes = 9;

class DecodeError : public std::runtime_error {
public:
    DecodeError(const std::string& what, std::size_t offset);
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

struct Frame {
    FrameTag tag = FrameTag::uplink;
    Bytes payload;

    std::size_t wire_size() const noexcept { return kFrameHeaderBytes + payload.size(); }
    friend bool operator==(const Frame&, const Frame&) = default;
};

Bytes encode_frame(const Frame& frame);
/// Exactly one frame; trailing bytes are an error.
Frame decode_frame(std::span<const std::uint8_t> bytes);
/// Header only: tag and payload length. Needs 5 bytes.
std::pair<FrameTag, std::uint32_t> decode_frame_header(std::span<const std::uint8_t> header);

/// Unlabelled samples sent device -> cloud, with their uncertainty scores.
struct UplinkMsg {
    std::uint32_t width = 0;
    std::vector<double> inputs; // count * width, row-major
    std::vector<double> scores; // count

    std::size_t count() const noexcept { return scores.size(); }
    /// [count, width]; count must be positive.
    Tensor input_tensor() const;

    static UplinkMsg from(const Tensor& inputs, std::span<const double> scores);

    friend bool operator==(const UplinkMsg&, const UplinkMsg&) = default;
};

/// Student parameters and prompt sent cloud -> device.
struct DownlinkMsg {
    std::uint32_t version = 0;
    std::vector<DenseLayer> layers;
    Prompt prompt;

    friend bool operator==(const DownlinkMsg& a, const DownlinkMsg& b);
};

Bytes encode(const UplinkMsg& msg);
Bytes encode(const DownlinkMsg& msg);

UplinkMsg decode_uplink(std::span<const std::uint8_t> payload);
DownlinkMsg decode_downlink(std::span<const std::uint8_t> payload);
std::variant<UplinkMsg, DownlinkMsg> decode(std::span<const std::uint8_t> payload);

Frame make_frame(const UplinkMsg& msg);
Frame make_frame(const DownlinkMsg& msg);

/// Encoded payload size of an uplink with `count` samples of `width`.
constexpr std::size_t uplink_payload_size(std::size_t count, std::size_t width) {
    return kUplinkHeaderBytes + count * (8 * width + 8);
}

struct DownlinkSizes {
    std::size_t parameter_bytes = 0; // layer count field and layer blocks
    std::size_t prompt_bytes = 0;    // layout, width, length and values
    std::size_t total_payload = 0;
};

DownlinkSizes downlink_sizes(const DownlinkMsg& msg);

enum class Direction { uplink, downlink };

struct ByteCounter {
    std::uint64_t uplink_bytes = 0;
    std::uint64_t downlink_bytes = 0;

    friend bool operator==(const ByteCounter&, const ByteCounter&) = default;
};

/// Adds the full frame size (header + payload) to the direction's total.
void count_bytes(ByteCounter& counter, Direction direction, const Frame& frame);
Direction direction_of(FrameTag tag) noexcept;

} // namespace cdca
