#pragma once

#include <chrono>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include <fcntl.h>
#include <netdb.h>
#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "ddrm/common.hpp"

namespace ddrm {

// Denoiser wire protocol v1.  Little-endian framing, identical in both
// directions:
//
//   "DNR1" | u32 n_dims | u32 dims[n_dims] | f64 sigma | f32 payload[]
//
// payload is row-major with prod(dims) elements.  Transport is the
// stdin/stdout of a child process or a stream socket.
namespace protocol {

inline constexpr char kMagic[4] = {'D', 'N', 'R', '1'};
inline constexpr std::uint32_t kMaxDims = 16;
inline constexpr std::uint64_t kMaxElements = 1ull << 28;
inline constexpr double kDefaultTimeoutSeconds = 30.0;

struct TensorFrame {
    std::vector<std::uint32_t> dims;
    double sigma = 0.0;
    std::vector<float> payload;

    std::uint64_t element_count() const {
        std::uint64_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(v & 0xff);
    out.push_back((v >> 8) & 0xff);
    out.push_back((v >> 16) & 0xff);
    out.push_back((v >> 24) & 0xff);
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_frame(const TensorFrame& f) {
    if (f.dims.empty() || f.dims.size() > kMaxDims)
        throw ProtocolError("encode: dims count out of range");
    const std::uint64_t n = f.element_count();
    if (n > kMaxElements) throw ProtocolError("encode: frame too large");
    if (f.payload.size() != n) throw ProtocolError("encode: payload size != prod(dims)");

    std::vector<std::uint8_t> out;
    out.reserve(16 + 4 * f.dims.size() + 4 * f.payload.size());
    out.insert(out.end(), kMagic, kMagic + 4);
    detail::put_u32(out, static_cast<std::uint32_t>(f.dims.size()));
    for (auto d : f.dims) detail::put_u32(out, d);
    std::uint64_t sig_bits;
    static_assert(sizeof(double) == 8);
    std::memcpy(&sig_bits, &f.sigma, 8);
    for (int i = 0; i < 8; ++i) out.push_back((sig_bits >> (8 * i)) & 0xff);
    for (float x : f.payload) {
        std::uint32_t u;
        std::memcpy(&u, &x, 4);
        detail::put_u32(out, u);
    }
    return out;
}

// Total frame size once enough of the header is buffered; nullopt if more
// bytes are needed.  Throws on structurally invalid headers.
inline std::optional<std::size_t> frame_size_from_prefix(const std::vector<std::uint8_t>& buf) {
    if (buf.size() < 8) return std::nullopt;
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw ProtocolError("bad magic");
    const std::uint32_t n_dims = detail::get_u32(buf.data() + 4);
    if (n_dims == 0 || n_dims > kMaxDims)
        throw ProtocolError("dims count out of range: " + std::to_string(n_dims));
    const std::size_t header = 8 + 4 * static_cast<std::size_t>(n_dims) + 8;
    if (buf.size() < header) return std::nullopt;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < n_dims; ++i) {
        count *= detail::get_u32(buf.data() + 8 + 4 * i);
        if (count > kMaxElements) throw ProtocolError("frame too large");
    }
    return header + 4 * count;
}

inline TensorFrame decode_frame(const std::vector<std::uint8_t>& buf) {
    const auto size = frame_size_from_prefix(buf);
    if (!size || buf.size() < *size) throw ProtocolError("short frame");
    TensorFrame f;
    const std::uint32_t n_dims = detail::get_u32(buf.data() + 4);
    f.dims.resize(n_dims);
    for (std::uint32_t i = 0; i < n_dims; ++i) f.dims[i] = detail::get_u32(buf.data() + 8 + 4 * i);
    std::uint64_t sig_bits = 0;
    const std::size_t sig_off = 8 + 4 * static_cast<std::size_t>(n_dims);
    for (int i = 0; i < 8; ++i)
        sig_bits |= static_cast<std::uint64_t>(buf[sig_off + i]) << (8 * i);
    std::memcpy(&f.sigma, &sig_bits, 8);
    const std::uint64_t count = f.element_count();
    f.payload.resize(count);
    const std::uint8_t* p = buf.data() + sig_off + 8;
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t u = detail::get_u32(p + 4 * i);
        std::memcpy(&f.payload[i], &u, 4);
    }
    return f;
}

using Clock = std::chrono::steady_clock;

namespace detail {

inline void ignore_sigpipe() {
    static const bool once = [] {
        ::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)once;
}

inline void set_nonblocking(int fd) {
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

inline int remaining_ms(Clock::time_point deadline) {
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    return ms < 0 ? 0 : static_cast<int>(ms > 1000000 ? 1000000 : ms);
}

}  // namespace detail

// A connected byte stream (pipe pair or socket) with deadline-aware
// request/response exchange.  Reading and writing are interleaved so frames
// larger than the kernel pipe buffer cannot deadlock against an echoing peer.
class DuplexStream {
public:
    DuplexStream() = default;
    DuplexStream(int in_fd, int out_fd) : in_fd_(in_fd), out_fd_(out_fd) {
        detail::ignore_sigpipe();
        detail::set_nonblocking(in_fd_);
        detail::set_nonblocking(out_fd_);
    }
    DuplexStream(const DuplexStream&) = delete;
    DuplexStream& operator=(const DuplexStream&) = delete;
    DuplexStream(DuplexStream&& o) noexcept { *this = std::move(o); }
    DuplexStream& operator=(DuplexStream&& o) noexcept {
        close();
        in_fd_ = o.in_fd_;
        out_fd_ = o.out_fd_;
        o.in_fd_ = o.out_fd_ = -1;
        return *this;
    }
    ~DuplexStream() { close(); }

    bool open() const { return in_fd_ >= 0 && out_fd_ >= 0; }

    void close() {
        if (in_fd_ >= 0) ::close(in_fd_);
        if (out_fd_ >= 0 && out_fd_ != in_fd_) ::close(out_fd_);
        in_fd_ = out_fd_ = -1;
    }

    TensorFrame request(const TensorFrame& req, double timeout_s) {
        if (!open()) throw ProtocolError("stream not attached");
        const auto deadline =
            Clock::now() + std::chrono::milliseconds(static_cast<long>(timeout_s * 1000.0));
        const auto out = encode_frame(req);
        std::size_t written = 0;
        std::vector<std::uint8_t> in;
        in.reserve(out.size());
        std::optional<std::size_t> expect;

        while (written < out.size() || !expect || in.size() < *expect) {
            struct pollfd fds[2];
            int nfds = 0;
            if (written < out.size()) {
                fds[nfds].fd = out_fd_;
                fds[nfds].events = POLLOUT;
                ++nfds;
            }
            fds[nfds].fd = in_fd_;
            fds[nfds].events = POLLIN;
            ++nfds;

            const int ms = detail::remaining_ms(deadline);
            if (ms == 0) throw ProtocolError("denoiser request timed out");
            const int rc = ::poll(fds, nfds, ms);
            if (rc == 0) throw ProtocolError("denoiser request timed out");
            if (rc < 0) {
                if (errno == EINTR) continue;
                throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
            }

            if (written < out.size() && (fds[0].revents & (POLLOUT | POLLERR | POLLHUP))) {
                const ssize_t n = ::write(out_fd_, out.data() + written, out.size() - written);
                if (n < 0) {
                    if (errno != EAGAIN && errno != EINTR)
                        throw ProtocolError(std::string("denoiser write failed: ") +
                                            std::strerror(errno));
                } else {
                    written += static_cast<std::size_t>(n);
                }
            }
            const auto& rfd = fds[nfds - 1];
            if (rfd.revents & (POLLIN | POLLERR | POLLHUP)) {
                std::uint8_t chunk[65536];
                const ssize_t n = ::read(in_fd_, chunk, sizeof chunk);
                if (n < 0) {
                    if (errno != EAGAIN && errno != EINTR)
                        throw ProtocolError(std::string("denoiser read failed: ") +
                                            std::strerror(errno));
                } else if (n == 0) {
                    throw ProtocolError("short read: denoiser stream closed mid-frame");
                } else {
                    in.insert(in.end(), chunk, chunk + n);
                    expect = frame_size_from_prefix(in);
                    if (expect && in.size() > *expect)
                        throw ProtocolError("trailing bytes after response frame");
                }
            }
        }
        return decode_frame(in);
    }

private:
    int in_fd_ = -1;
    int out_fd_ = -1;
};

// Child process with its stdin/stdout bridged to a DuplexStream.
class ChildProcess {
public:
    ChildProcess() = default;
    explicit ChildProcess(const std::vector<std::string>& argv) {
        if (argv.empty()) throw ConfigError("child process: empty command");
        detail::ignore_sigpipe();
        int to_child[2], from_child[2];
        if (::pipe(to_child) != 0 || ::pipe(from_child) != 0)
            throw ProtocolError("pipe() failed");
        pid_ = ::fork();
        if (pid_ < 0) throw ProtocolError("fork() failed");
        if (pid_ == 0) {
            ::dup2(to_child[0], STDIN_FILENO);
            ::dup2(from_child[1], STDOUT_FILENO);
            ::close(to_child[0]);
            ::close(to_child[1]);
            ::close(from_child[0]);
            ::close(from_child[1]);
            std::vector<char*> args;
            for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
            args.push_back(nullptr);
            ::execvp(args[0], args.data());
            ::_exit(127);
        }
        ::close(to_child[0]);
        ::close(from_child[1]);
        stream_ = DuplexStream(from_child[0], to_child[1]);
    }
    ChildProcess(const ChildProcess&) = delete;
    ChildProcess& operator=(const ChildProcess&) = delete;
    ChildProcess(ChildProcess&& o) noexcept { *this = std::move(o); }
    ChildProcess& operator=(ChildProcess&& o) noexcept {
        terminate();
        stream_ = std::move(o.stream_);
        pid_ = o.pid_;
        o.pid_ = -1;
        return *this;
    }
    ~ChildProcess() { terminate(); }

    DuplexStream& stream() { return stream_; }

    void terminate() {
        stream_.close();
        if (pid_ > 0) {
            int status = 0;
            if (::waitpid(pid_, &status, WNOHANG) == 0) {
                ::kill(pid_, SIGTERM);
                for (int i = 0; i < 50 && ::waitpid(pid_, &status, WNOHANG) == 0; ++i)
                    ::usleep(10000);
                if (::waitpid(pid_, &status, WNOHANG) == 0) {
                    ::kill(pid_, SIGKILL);
                    ::waitpid(pid_, &status, 0);
                }
            }
            pid_ = -1;
        }
    }

private:
    DuplexStream stream_;
    pid_t pid_ = -1;
};

inline DuplexStream connect_stream(const std::string& address) {
    detail::ignore_sigpipe();
    const auto colon = address.rfind(':');
    if (colon == std::string::npos)
        throw ConfigError("denoiser address must be host:port, got: " + address);
    const std::string host = address.substr(0, colon);
    const std::string port = address.substr(colon + 1);

    struct addrinfo hints {};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    struct addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
        throw ProtocolError("cannot resolve denoiser address: " + address);
    int fd = -1;
    for (auto* p = res; p; p = p->ai_next) {
        fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw ProtocolError("cannot connect to denoiser at " + address);
    return DuplexStream(fd, fd);
}

namespace detail {

inline bool read_exact_blocking(int fd, std::uint8_t* dst, std::size_t n, bool* eof_at_start) {
    std::size_t got = 0;
    while (got < n) {
        const ssize_t r = ::read(fd, dst + got, n - got);
        if (r < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(std::string("read failed: ") + std::strerror(errno));
        }
        if (r == 0) {
            if (eof_at_start && got == 0) {
                *eof_at_start = true;
                return false;
            }
            throw ProtocolError("short read: stream closed mid-frame");
        }
        got += static_cast<std::size_t>(r);
    }
    return true;
}

inline void write_all_blocking(int fd, const std::uint8_t* src, std::size_t n) {
    std::size_t put = 0;
    while (put < n) {
        const ssize_t w = ::write(fd, src + put, n - put);
        if (w < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw ProtocolError(std::string("write failed: ") + std::strerror(errno));
        }
        put += static_cast<std::size_t>(w);
    }
}

}  // namespace detail

// Validates incoming frames and echoes them back verbatim.  Returns the
// number of frames served once the peer closes the stream.
inline std::size_t serve_echo(int in_fd, int out_fd) {
    detail::ignore_sigpipe();
    std::size_t served = 0;
    for (;;) {
        std::vector<std::uint8_t> buf(8);
        bool eof = false;
        if (!detail::read_exact_blocking(in_fd, buf.data(), 8, &eof)) return served;
        auto expect = frame_size_from_prefix(buf);
        const std::uint32_t n_dims = detail::get_u32(buf.data() + 4);
        const std::size_t header = 8 + 4 * static_cast<std::size_t>(n_dims) + 8;
        buf.resize(header);
        detail::read_exact_blocking(in_fd, buf.data() + 8, header - 8, nullptr);
        expect = frame_size_from_prefix(buf);
        buf.resize(*expect);
        detail::read_exact_blocking(in_fd, buf.data() + header, *expect - header, nullptr);
        decode_frame(buf);
        detail::write_all_blocking(out_fd, buf.data(), buf.size());
        ++served;
    }
}

// Binds host:port (port 0 picks an ephemeral one), prints
// "LISTENING <port>" on stderr, serves one connection, then returns.
inline std::size_t serve_echo_socket(const std::string& address) {
    detail::ignore_sigpipe();
    const auto colon = address.rfind(':');
    if (colon == std::string::npos)
        throw ConfigError("listen address must be host:port, got: " + address);
    const std::string host = address.substr(0, colon);
    const int port = std::stoi(address.substr(colon + 1));

    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw ProtocolError("socket() failed");
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    struct sockaddr_in addr {};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    addr.sin_addr.s_addr = host == "0.0.0.0" ? INADDR_ANY : ::inet_addr(host.c_str());
    if (::bind(fd, reinterpret_cast<struct sockaddr*>(&addr), sizeof addr) != 0) {
        ::close(fd);
        throw ProtocolError("bind failed for " + address);
    }
    if (::listen(fd, 1) != 0) {
        ::close(fd);
        throw ProtocolError("listen failed for " + address);
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<struct sockaddr*>(&addr), &len);
    ::fprintf(stderr, "LISTENING %d\n", ntohs(addr.sin_port));
    ::fflush(stderr);

    const int conn = ::accept(fd, nullptr, nullptr);
    ::close(fd);
    if (conn < 0) throw ProtocolError("accept failed");
    std::size_t served = 0;
    try {
        served = serve_echo(conn, conn);
    } catch (...) {
        ::close(conn);
        throw;
    }
    ::close(conn);
    return served;
}

}  // namespace protocol
}  // namespace ddrm
