// SPDX-License-Identifier: Apache-2.0

#include "cdca/channel.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <optional>
#include <algorithm>

namespace cdca {

ByteCounter Channel::counter() const {
    std::lock_guard lock(counter_mutex_);
    return sent_;
}

void Channel::record_sent(const Frame& frame) {
    std::lock_guard lock(counter_mutex_);
    count_bytes(sent_, direction_of(frame.tag), frame);
}

namespace {

struct SharedQueues {
    std::mutex mutex;
    std::condition_variable changed;
    std::array<std::deque<Frame>, 2> queues;
    std::size_t capacity = kDefaultQueueCapacity;
    bool closed = false;
};

class InProcessEndpoint final : public Channel {
public:
    InProcessEndpoint(std::shared_ptr<SharedQueues> shared, int side) : shared_(std::move(shared)), side_(side) {}
    ~InProcessEndpoint() override { close(); }

    void send(const Frame& frame) override {
        std::unique_lock lock(shared_->mutex);
        auto& out = shared_->queues[static_cast<std::size_t>(side_)];
        shared_->changed.wait(lock, [&] { return shared_->closed || out.size() < shared_->capacity; });
        if (shared_->closed) throw ChannelClosed();
        out.push_back(frame);
        lock.unlock();
        record_sent(frame);
        shared_->changed.notify_all();
    }

    RecvResult recv(std::chrono::milliseconds timeout) override {
        std::unique_lock lock(shared_->mutex);
        auto& in = shared_->queues[static_cast<std::size_t>(1 - side_)];
        shared_->changed.wait_for(lock, timeout, [&] { return shared_->closed || !in.empty(); });
        if (!in.empty()) {
            RecvResult r{RecvStatus::ok, std::move(in.front())};
            in.pop_front();
            lock.unlock();
            shared_->changed.notify_all();
            return r;
        }
        return {shared_->closed ? RecvStatus::closed : RecvStatus::timeout, {}};
    }

    void close() override {
        {
            std::lock_guard lock(shared_->mutex);
            shared_->closed = true;
        }
        shared_->changed.notify_all();
    }

private:
    std::shared_ptr<SharedQueues> shared_;
    int side_;
};

[[noreturn]] void throw_errno(const std::string& what) {
    throw std::runtime_error(what + ": " + std::strerror(errno));
}

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (const int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res); rc != 0 || res == nullptr) {
        throw std::runtime_error("cannot resolve host '" + host + "': " + ::gai_strerror(rc));
    }
    sockaddr_in addr{};
    std::memcpy(&addr, res->ai_addr, sizeof(addr));
    ::freeaddrinfo(res);
    addr.sin_port = htons(port);
    return addr;
}

class TcpEndpoint final : public Channel {
public:
    explicit TcpEndpoint(int fd) : fd_(fd) {
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    }
    ~TcpEndpoint() override {
        if (fd_ >= 0) ::close(fd_);
    }

    void send(const Frame& frame) override {
        if (local_closed_ || peer_closed_) throw ChannelClosed();
        const Bytes bytes = encode_frame(frame);
        std::size_t off = 0;
        while (off < bytes.size()) {
            const ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                if (errno == EPIPE || errno == ECONNRESET) throw ChannelClosed();
                throw_errno("tcp send");
            }
            off += static_cast<std::size_t>(n);
        }
        record_sent(frame);
    }

    RecvResult recv(std::chrono::milliseconds timeout) override {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        for (;;) {
            if (auto f = pop_frame()) return {RecvStatus::ok, std::move(*f)};
            if (peer_closed_ || local_closed_) return {RecvStatus::closed, {}};
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                deadline - std::chrono::steady_clock::now());
            pollfd p{fd_, POLLIN, 0};
            const int rc = ::poll(&p, 1, static_cast<int>(std::max<long long>(0, left.count())));
            if (rc < 0) {
                if (errno == EINTR) continue;
                throw_errno("tcp poll");
            }
            if (rc == 0) return {RecvStatus::timeout, {}};
            std::uint8_t chunk[65536];
            const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
            if (n < 0) {
                if (errno == EINTR) continue;
                if (errno == ECONNRESET) {
                    peer_closed_ = true;
                    continue;
                }
                throw_errno("tcp recv");
            }
            if (n == 0) {
                peer_closed_ = true;
                continue;
            }
            buffer_.insert(buffer_.end(), chunk, chunk + n);
        }
    }

    void close() override {
        if (local_closed_) return;
        local_closed_ = true;
        ::shutdown(fd_, SHUT_WR);
    }

private:
    std::optional<Frame> pop_frame() {
        if (buffer_.size() < kFrameHeaderBytes) return std::nullopt;
        const auto [tag, len] = decode_frame_header(std::span(buffer_).first(kFrameHeaderBytes));
        if (buffer_.size() < kFrameHeaderBytes + len) return std::nullopt;
        Frame f{tag, Bytes(buffer_.begin() + kFrameHeaderBytes, buffer_.begin() + kFrameHeaderBytes + len)};
        buffer_.erase(buffer_.begin(), buffer_.begin() + kFrameHeaderBytes + len);
        return f;
    }

    int fd_;
    Bytes buffer_;
    bool local_closed_ = false;
    bool peer_closed_ = false;
};

} // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_inprocess_pair(std::size_t capacity) {
    if (capacity == 0) throw ParameterError("channel capacity must be positive");
    auto shared = std::make_shared<SharedQueues>();
    shared->capacity = capacity;
    return {std::make_unique<InProcessEndpoint>(shared, 0), std::make_unique<InProcessEndpoint>(shared, 1)};
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw_errno("socket");
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = resolve(host, port);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
        ::close(fd_);
        throw_errno("bind " + host + ":" + std::to_string(port));
    }
    if (::listen(fd_, 1) < 0) {
        ::close(fd_);
        throw_errno("listen");
    }
    socklen_t len = sizeof(addr);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Channel> TcpListener::accept() {
    for (;;) {
        const int fd = ::accept(fd_, nullptr, nullptr);
        if (fd >= 0) return std::make_unique<TcpEndpoint>(fd);
        if (errno != EINTR) throw_errno("accept");
    }
}

std::unique_ptr<Channel> tcp_connect(const std::string& host, std::uint16_t port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw_errno("socket");
    sockaddr_in addr = resolve(host, port);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
        ::close(fd);
        throw_errno("connect " + host + ":" + std::to_string(port));
    }
    return std::make_unique<TcpEndpoint>(fd);
}

} // namespace cdca
