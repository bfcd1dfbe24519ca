// SPDX-License-Identifier: Apache-2.0
//
// Reliable ordered frame transport between the device and cloud roles.
// Each endpoint counts the bytes it sends, split by frame direction.

#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <utility>

#include "cdca/wire.hpp"

namespace cdca {

class ChannelClosed : public std::runtime_error {
public:
    ChannelClosed() : std::runtime_error("channel closed") {}
};

enum class RecvStatus { ok, timeout, closed };

struct RecvResult {
    RecvStatus status = RecvStatus::closed;
    Frame frame;
};

class Channel {
public:
    virtual ~Channel() = default;

    /// Throws ChannelClosed if either side has closed.
    virtual void send(const Frame& frame) = 0;
    /// Blocks up to `timeout`. Returns `closed` only once the peer has
    /// closed and every frame it sent has been received.
    virtual RecvResult recv(std::chrono::milliseconds timeout) = 0;
    /// Non-blocking drain helper.
    RecvResult try_recv() { return recv(std::chrono::milliseconds(0)); }
    virtual void close() = 0;

    ByteCounter counter() const;

protected:
    void record_sent(const Frame& frame);

private:
    mutable std::mutex counter_mutex_;
    ByteCounter sent_;
};

inline constexpr std::size_t kDefaultQueueCapacity = 1024;

/// Two connected in-process endpoints backed by bounded FIFO queues.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_inprocess_pair(
    std::size_t capacity = kDefaultQueueCapacity);

/// Listening TCP socket; accept() yields one connected endpoint.
class TcpListener {
public:
    /// Port 0 picks an ephemeral port; see port().
    TcpListener(const std::string& host, std::uint16_t port);
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    std::uint16_t port() const noexcept { return port_; }
    std::unique_ptr<Channel> accept();

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

std::unique_ptr<Channel> tcp_connect(const std::string& host, std::uint16_t port);

} // namespace cdca
