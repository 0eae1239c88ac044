#pragma once

// Lockstep links between the monitor and the plant node. Every frame passes
// through the wire codec; the adversary sits on the link.

#include "kernelguard/attacks.hpp"
#include "kernelguard/harness/frame.hpp"
#include "kernelguard/harness/nodes.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>

namespace kernelguard {

/// Adversary applied to frames in flight.
inline void tamper(Adversary& adv, std::vector<Frame>& frames) {
    for (auto& f : frames) {
        const auto ch = channel_of(f.type);
        if (ch) f.payload = adv.inject(*ch, static_cast<TimeIndex>(f.k), f.payload);
    }
}

inline std::vector<Frame> wire_roundtrip(const std::vector<Frame>& frames) {
    std::vector<Frame> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(decode_frame(encode_frame(f)));
    return out;
}

class Link {
public:
    virtual ~Link() = default;
    /// Sends this step's downlink frames and returns the uplink frames as delivered.
    virtual std::vector<Frame> exchange(TimeIndex k, const std::vector<Frame>& down) = 0;
    virtual void finish() {}
};

/// Record of what each side sent and what the other side received.
struct LinkLog {
    std::vector<Frame> sent_down, delivered_down, sent_up, delivered_up;
};

class InprocLink : public Link {
public:
    InprocLink(PlantNode& plant, Adversary& adv, LinkLog* log = nullptr) : plant_(plant), adv_(adv), log_(log) {}

    std::vector<Frame> exchange(TimeIndex k, const std::vector<Frame>& down) override {
        adv_.begin_step(k);
        std::vector<Frame> d = wire_roundtrip(down);
        tamper(adv_, d);
        std::vector<Frame> up = plant_.handle(d, k);
        std::vector<Frame> u = wire_roundtrip(up);
        tamper(adv_, u);
        if (log_) {
            log_->sent_down.insert(log_->sent_down.end(), down.begin(), down.end());
            log_->delivered_down.insert(log_->delivered_down.end(), d.begin(), d.end());
            log_->sent_up.insert(log_->sent_up.end(), up.begin(), up.end());
            log_->delivered_up.insert(log_->delivered_up.end(), u.begin(), u.end());
        }
        return u;
    }

private:
    PlantNode& plant_;
    Adversary& adv_;
    LinkLog* log_;
};

namespace detail {

inline void write_all(int fd, const std::vector<std::uint8_t>& bytes) {
    std::size_t off = 0;
    while (off < bytes.size()) {
        const ssize_t w = ::send(fd, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
        if (w < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string("send failed: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(w);
    }
}

inline void read_exact(int fd, std::uint8_t* buf, std::size_t n) {
    std::size_t off = 0;
    while (off < n) {
        const ssize_t r = ::recv(fd, buf + off, n - off, 0);
        if (r == 0) throw TransportError("peer closed the connection");
        if (r < 0) {
            if (errno == EINTR) continue;
            if (errno == EAGAIN || errno == EWOULDBLOCK) throw TransportError("transport timeout waiting for frame");
            throw TransportError(std::string("recv failed: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(r);
    }
}

inline Frame read_frame(int fd) {
    std::uint8_t head[frame_header_size];
    read_exact(fd, head, frame_header_size);
    const std::size_t dim = static_cast<std::size_t>(head[13]) | (static_cast<std::size_t>(head[14]) << 8);
    std::vector<std::uint8_t> buf(frame_size(dim));
    std::memcpy(buf.data(), head, frame_header_size);
    read_exact(fd, buf.data() + frame_header_size, 8 * dim);
    return decode_frame(buf);
}

inline void send_frames(int fd, const std::vector<Frame>& frames) {
    std::vector<std::uint8_t> bytes;
    for (const auto& f : frames) encode_frame(f, bytes);
    write_all(fd, bytes);
}

inline std::vector<Frame> recv_frames(int fd, std::size_t count) {
    std::vector<Frame> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(read_frame(fd));
    return out;
}

inline void set_timeout(int fd, int timeout_ms) {
    timeval tv{};
    tv.tv_sec = timeout_ms / 1000;
    tv.tv_usec = (timeout_ms % 1000) * 1000;
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace detail

/// Two processes over a loopback TCP socket. The plant node runs in a forked
/// child; the adversary runs in whichever process hosts the tap.
class TcpLink : public Link {
public:
    TcpLink(PlantNode& plant, Adversary& adv, const TransportSpec& spec, std::size_t up_count, TimeIndex horizon)
        : adv_(adv), spec_(spec), up_count_(up_count) {
        const int lfd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (lfd < 0) throw TransportError(std::string("socket failed: ") + std::strerror(errno));
        const int one = 1;
        ::setsockopt(lfd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<std::uint16_t>(spec.port));
        if (::inet_pton(AF_INET, spec.host.c_str(), &addr.sin_addr) != 1) {
            ::close(lfd);
            throw TransportError("invalid IPv4 host '" + spec.host + "'");
        }
        if (::bind(lfd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(lfd, 1) < 0) {
            const std::string err = std::strerror(errno);
            ::close(lfd);
            throw TransportError("cannot listen on " + spec.host + ":" + std::to_string(spec.port) + ": " + err);
        }
        socklen_t len = sizeof addr;
        ::getsockname(lfd, reinterpret_cast<sockaddr*>(&addr), &len);

        std::fflush(nullptr);
        child_ = ::fork();
        if (child_ < 0) {
            ::close(lfd);
            throw TransportError(std::string("fork failed: ") + std::strerror(errno));
        }
        if (child_ == 0) {
            ::close(lfd);
            int code = 0;
            try {
                run_plant(plant, addr, horizon);
            } catch (const std::exception& e) {
                std::fprintf(stderr, "plant node: %s\n", e.what());
                code = 1;
            }
            ::_exit(code);
        }

        pollfd pfd{lfd, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, spec.timeout_ms);
        if (ready <= 0) {
            ::close(lfd);
            reap();
            throw TransportError("plant node did not connect within the timeout");
        }
        fd_ = ::accept(lfd, nullptr, nullptr);
        ::close(lfd);
        if (fd_ < 0) {
            reap();
            throw TransportError(std::string("accept failed: ") + std::strerror(errno));
        }
        detail::set_timeout(fd_, spec.timeout_ms);
    }

    ~TcpLink() override {
        if (fd_ >= 0) ::close(fd_);
        if (child_ > 0) reap();
    }

    std::vector<Frame> exchange(TimeIndex k, const std::vector<Frame>& down) override {
        const bool here = spec_.tap == TapSide::monitor;
        std::vector<Frame> d = down;
        if (here) {
            adv_.begin_step(k);
            tamper(adv_, d);
        }
        detail::send_frames(fd_, d);
        std::vector<Frame> up = detail::recv_frames(fd_, up_count_);
        if (here) tamper(adv_, up);
        return up;
    }

    void finish() override {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
        if (child_ > 0) {
            const int status = reap();
            if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) throw TransportError("plant node exited abnormally");
        }
    }

private:
    void run_plant(PlantNode& plant, const sockaddr_in& addr, TimeIndex horizon) {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw TransportError("socket failed");
        if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) < 0)
            throw TransportError(std::string("connect failed: ") + std::strerror(errno));
        detail::set_timeout(fd, spec_.timeout_ms);
        const bool here = spec_.tap == TapSide::plant;
        for (TimeIndex k = 0; k < horizon; ++k) {
            std::vector<Frame> d = detail::recv_frames(fd, plant.down_count());
            if (here) {
                adv_.begin_step(k);
                tamper(adv_, d);
            }
            std::vector<Frame> up = plant.handle(d, k);
            if (here) tamper(adv_, up);
            detail::send_frames(fd, up);
        }
        ::close(fd);
    }

    int reap() {
        int status = 0;
        while (::waitpid(child_, &status, 0) < 0 && errno == EINTR) {
        }
        child_ = -1;
        return status;
    }

    Adversary& adv_;
    TransportSpec spec_;
    std::size_t up_count_;
    int fd_ = -1;
    pid_t child_ = -1;
};

}  // namespace kernelguard
