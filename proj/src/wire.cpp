// SPDX-License-Identifier: Apache-2.0

#include "cdca/wire.hpp"

#include <bit>

namespace cdca {

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double d) {
        const auto v = std::bit_cast<std::uint64_t>(d);
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64s(std::span<const double> ds) {
        for (double d : ds) f64(d);
    }
    void reserve(std::size_t n) { out_.reserve(n); }
    Bytes take() { return std::move(out_); }

private:
    Bytes out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return in_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw DecodeError(std::string("truncated ") + what + ": need " + std::to_string(n) + " bytes, have " +
                                  std::to_string(remaining()),
                              pos_);
        }
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return in_[pos_++];
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(v);
    }
    std::vector<double> f64s(std::uint64_t n, const char* what) {
        if (n > remaining() / 8) {
            throw DecodeError(std::string("truncated ") + what + ": " + std::to_string(n) + " reals declared, " +
                                  std::to_string(remaining()) + " bytes left",
                              pos_);
        }
        std::vector<double> out(static_cast<std::size_t>(n));
        for (auto& d : out) d = f64();
        return out;
    }
    void finish() const {
        if (remaining() != 0) throw DecodeError(std::to_string(remaining()) + " trailing bytes after message", pos_);
    }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

void expect_tag(Reader& r, FrameTag want) {
    const std::size_t at = r.offset();
    const auto tag = r.u8("message tag");
    if (tag != static_cast<std::uint8_t>(want)) {
        throw DecodeError("unexpected message tag " + std::to_string(tag), at);
    }
}

} // namespace

DecodeError::DecodeError(const std::string& what, std::size_t offset)
    : std::runtime_error("decode error at offset " + std::to_string(offset) + ": " + what), offset_(offset) {}

Bytes encode_frame(const Frame& frame) {
    Writer w;
    w.reserve(frame.wire_size());
    w.u8(static_cast<std::uint8_t>(frame.tag));
    w.u32(static_cast<std::uint32_t>(frame.payload.size()));
    Bytes out = w.take();
    out.insert(out.end(), frame.payload.begin(), frame.payload.end());
    return out;
}

std::pair<FrameTag, std::uint32_t> decode_frame_header(std::span<const std::uint8_t> header) {
    Reader r(header);
    const auto tag = r.u8("frame tag");
    if (tag != 0x01 && tag != 0x02) throw DecodeError("unknown frame tag " + std::to_string(tag), 0);
    const auto len = r.u32("frame length");
    return {static_cast<FrameTag>(tag), len};
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
    const auto [tag, len] = decode_frame_header(bytes);
    if (bytes.size() - kFrameHeaderBytes != len) {
        throw DecodeError("frame declares " + std::to_string(len) + " payload bytes, has " +
                              std::to_string(bytes.size() - kFrameHeaderBytes),
                          1);
    }
    return Frame{tag, Bytes(bytes.begin() + kFrameHeaderBytes, bytes.end())};
}

Tensor UplinkMsg::input_tensor() const {
    return Tensor({count(), width}, inputs);
}

UplinkMsg UplinkMsg::from(const Tensor& inputs, std::span<const double> scores) {
    if (inputs.rank() != 2 || inputs.rows() != scores.size()) {
        throw DimensionError("uplink: " + std::to_string(scores.size()) + " scores for inputs " +
                             shape_str(inputs.shape()));
    }
    return UplinkMsg{static_cast<std::uint32_t>(inputs.cols()), inputs.values(),
                     std::vector<double>(scores.begin(), scores.end())};
}

bool operator==(const DownlinkMsg& a, const DownlinkMsg& b) {
    if (a.version != b.version || a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        if (!bit_equal(a.layers[l].weight, b.layers[l].weight) || !bit_equal(a.layers[l].bias, b.layers[l].bias)) {
            return false;
        }
    }
    return a.prompt.layout() == b.prompt.layout() && a.prompt.input_width() == b.prompt.input_width() &&
           bit_equal(a.prompt.values(), b.prompt.values());
}

Bytes encode(const UplinkMsg& msg) {
    if (msg.inputs.size() != msg.count() * msg.width) throw DimensionError("uplink inputs do not match count x width");
    Writer w;
    w.reserve(uplink_payload_size(msg.count(), msg.width));
    w.u8(static_cast<std::uint8_t>(FrameTag::uplink));
    w.u32(static_cast<std::uint32_t>(msg.count()));
    w.u32(msg.width);
    for (std::size_t i = 0; i < msg.count(); ++i) {
        w.f64s(std::span<const double>(msg.inputs).subspan(i * msg.width, msg.width));
        w.f64(msg.scores[i]);
    }
    return w.take();
}

Bytes encode(const DownlinkMsg& msg) {
    Writer w;
    w.reserve(downlink_sizes(msg).total_payload);
    w.u8(static_cast<std::uint8_t>(FrameTag::downlink));
    w.u32(msg.version);
    w.u32(static_cast<std::uint32_t>(msg.layers.size()));
    for (const auto& l : msg.layers) {
        w.u32(static_cast<std::uint32_t>(l.weight.rows()));
        w.u32(static_cast<std::uint32_t>(l.weight.cols()));
        w.f64s(l.weight.data());
        w.f64s(l.bias.data());
    }
    w.u8(static_cast<std::uint8_t>(msg.prompt.layout()));
    w.u32(static_cast<std::uint32_t>(msg.prompt.input_width()));
    w.u32(static_cast<std::uint32_t>(msg.prompt.length()));
    w.f64s(msg.prompt.values().data());
    return w.take();
}

UplinkMsg decode_uplink(std::span<const std::uint8_t> payload) {
    Reader r(payload);
    expect_tag(r, FrameTag::uplink);
    UplinkMsg m;
    const std::size_t count_at = r.offset();
    const std::uint64_t count = r.u32("uplink count");
    m.width = r.u32("uplink width");
    if (count > 0 && m.width == 0) throw DecodeError("uplink width is zero", count_at + 4);
    const std::uint64_t per_sample = 8ULL * m.width + 8;
    if (count > r.remaining() / per_sample || count * per_sample != r.remaining()) {
        throw DecodeError("uplink declares " + std::to_string(count) + " samples of width " +
                              std::to_string(m.width) + " but carries " + std::to_string(r.remaining()) + " bytes",
                          count_at);
    }
    m.inputs.reserve(count * m.width);
    m.scores.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        for (std::uint32_t c = 0; c < m.width; ++c) m.inputs.push_back(r.f64());
        m.scores.push_back(r.f64());
    }
    r.finish();
    return m;
}

DownlinkMsg decode_downlink(std::span<const std::uint8_t> payload) {
    Reader r(payload);
    expect_tag(r, FrameTag::downlink);
    DownlinkMsg m;
    m.version = r.u32("downlink version");
    const std::size_t count_at = r.offset();
    const std::uint32_t layer_count = r.u32("layer count");
    // Smallest possible layer block: two u32 plus one weight and one bias.
    if (layer_count == 0 || layer_count > r.remaining() / 24) {
        throw DecodeError("implausible layer count " + std::to_string(layer_count), count_at);
    }
    std::uint32_t prev_out = 0;
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        const std::size_t shape_at = r.offset();
        const std::uint32_t in = r.u32("layer input width");
        const std::uint32_t out = r.u32("layer output width");
        if (in == 0 || out == 0) throw DecodeError("layer " + std::to_string(l) + " has a zero extent", shape_at);
        if (l > 0 && in != prev_out) {
            throw DecodeError("layer " + std::to_string(l) + " input width " + std::to_string(in) +
                                  " does not match previous output " + std::to_string(prev_out),
                              shape_at);
        }
        prev_out = out;
        auto w = r.f64s(static_cast<std::uint64_t>(in) * out, "layer weights");
        auto b = r.f64s(out, "layer bias");
        m.layers.push_back({Tensor({in, out}, std::move(w)), Tensor({out}, std::move(b))});
    }
    const std::size_t prompt_at = r.offset();
    const std::uint8_t layout = r.u8("prompt layout");
    if (layout > 1) throw DecodeError("unknown prompt layout " + std::to_string(layout), prompt_at);
    const std::uint32_t width = r.u32("prompt width");
    const std::uint32_t length = r.u32("prompt length");
    if (width != m.layers.front().weight.rows()) {
        throw DecodeError("prompt width " + std::to_string(width) + " does not match network input " +
                              std::to_string(m.layers.front().weight.rows()),
                          prompt_at + 1);
    }
    const auto lay = static_cast<PromptLayout>(layout);
    if (length == 0 || length > width || (lay == PromptLayout::full_vector && length != width)) {
        throw DecodeError("prompt length " + std::to_string(length) + " invalid for width " + std::to_string(width),
                          prompt_at + 5);
    }
    auto values = r.f64s(length, "prompt values");
    r.finish();
    m.prompt = Prompt(lay, width, Tensor({length}, std::move(values)));
    return m;
}

std::variant<UplinkMsg, DownlinkMsg> decode(std::span<const std::uint8_t> payload) {
    if (payload.empty()) throw DecodeError("empty payload", 0);
    switch (payload[0]) {
    case 0x01: return decode_uplink(payload);
    case 0x02: return decode_downlink(payload);
    default: throw DecodeError("unknown message tag " + std::to_string(payload[0]), 0);
    }
}

Frame make_frame(const UplinkMsg& msg) {
    return Frame{FrameTag::uplink, encode(msg)};
}

Frame make_frame(const DownlinkMsg& msg) {
    return Frame{FrameTag::downlink, encode(msg)};
}

DownlinkSizes downlink_sizes(const DownlinkMsg& msg) {
    DownlinkSizes s;
    s.parameter_bytes = 4;
    for (const auto& l : msg.layers) s.parameter_bytes += 8 + 8 * (l.weight.size() + l.bias.size());
    s.prompt_bytes = 1 + 4 + 4 + 8 * msg.prompt.length();
    s.total_payload = 1 + 4 + s.parameter_bytes + s.prompt_bytes;
    return s;
}

void count_bytes(ByteCounter& counter, Direction direction, const Frame& frame) {
    (direction == Direction::uplink ? counter.uplink_bytes : counter.downlink_bytes) += frame.wire_size();
}

Direction direction_of(FrameTag tag) noexcept {
    return tag == FrameTag::uplink ? Direction::uplink : Direction::downlink;
}

} // namespace cdca
