#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "flowhedge/error.hpp"
#include "flowhedge/params.hpp"
#include "flowhedge/rng.hpp"
#include "flowhedge/simulator.hpp"

namespace flowhedge {

enum class Q0Sample { fixed, stationary_proxy };

struct SessionConfig {
    ModelParams params;
    double t0 = 0.0;
    std::uint64_t seed = 0;
    bool include_state_only = true;
    Q0Sample q0_sample = Q0Sample::fixed;
};

inline void validate(const SessionConfig& c) {
    validate(c.params);
    steps_from(c.t0, c.params);
}

inline nlohmann::json to_json(const SessionConfig& c) {
    return {{"params", c.params},
            {"t0", c.t0},
            {"seed", c.seed},
            {"include_state_only_reward_terms", c.include_state_only},
            {"q0_sample", c.q0_sample == Q0Sample::fixed ? "fixed" : "stationary_proxy"}};
}

/// Error codes sent in {"error": code, "msg": ...} replies.
namespace env_errors {
inline constexpr const char* parse_error = "parse_error";
inline constexpr const char* bad_request = "bad_request";
inline constexpr const char* unknown_command = "unknown_command";
inline constexpr const char* invalid_config = "invalid_config";
inline constexpr const char* no_episode = "no_episode";
inline constexpr const char* episode_done = "episode_done";
}  // namespace env_errors

/// One client session of the line-delimited JSON environment protocol.
/// Invalid messages are answered with an error and change nothing.
class Session {
public:
    explicit Session(SessionConfig base) : config_(std::move(base)) { validate(config_); }

    bool closed() const { return closed_; }
    const SessionConfig& config() const { return config_; }

    std::string handle_line(const std::string& line) {
        nlohmann::json msg;
        try {
            msg = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            return error(env_errors::parse_error, e.what()).dump();
        }
        return handle(msg).dump();
    }

    nlohmann::json handle(const nlohmann::json& msg) {
        if (closed_) return error(env_errors::bad_request, "session is closed");
        if (!msg.is_object() || !msg.contains("cmd") || !msg["cmd"].is_string())
            return error(env_errors::bad_request, "message must be an object with a string \"cmd\"");
        const auto cmd = msg["cmd"].get<std::string>();
        if (cmd == "configure") return configure(msg);
        if (cmd == "reset") return reset(msg);
        if (cmd == "step") return step(msg);
        if (cmd == "close") {
            closed_ = true;
            episode_.reset();
            return {{"ok", true}};
        }
        return error(env_errors::unknown_command, "unknown command '" + cmd + "'");
    }

private:
    static nlohmann::json error(const char* code, const std::string& msg) { return {{"error", code}, {"msg", msg}}; }

    static nlohmann::json obs(const MarketState& s) { return {{"t", s.t}, {"q", s.q}, {"S", s.S}}; }

    nlohmann::json configure(const nlohmann::json& msg) {
        SessionConfig next = config_;
        try {
            if (msg.contains("params")) next.params = params_from_json(msg["params"], config_.params);
            if (msg.contains("t0")) next.t0 = msg["t0"].get<double>();
            if (msg.contains("seed")) next.seed = msg["seed"].get<std::uint64_t>();
            if (msg.contains("include_state_only_reward_terms"))
                next.include_state_only = msg["include_state_only_reward_terms"].get<bool>();
            if (msg.contains("q0_sample")) {
                const auto mode = msg["q0_sample"].get<std::string>();
                if (mode == "fixed")
                    next.q0_sample = Q0Sample::fixed;
                else if (mode == "stationary_proxy")
                    next.q0_sample = Q0Sample::stationary_proxy;
                else
                    return error(env_errors::invalid_config, "q0_sample must be \"fixed\" or \"stationary_proxy\"");
            }
            validate(next);
        } catch (const nlohmann::json::exception& e) {
            return error(env_errors::invalid_config, e.what());
        } catch (const Error& e) {
            return error(env_errors::invalid_config, e.what());
        }
        config_ = std::move(next);
        episode_.reset();
        next_index_ = 0;
        return {{"ok", true}, {"config", to_json(config_)}};
    }

    nlohmann::json reset(const nlohmann::json& msg) {
        std::uint64_t index = next_index_;
        if (msg.contains("episode")) {
            const auto& e = msg["episode"];
            if (!e.is_number_integer() || (!e.is_number_unsigned() && e.get<std::int64_t>() < 0))
                return error(env_errors::bad_request, "\"episode\" must be a non-negative integer");
            index = msg["episode"].get<std::uint64_t>();
        }
        EpisodeOptions opt;
        opt.t0 = config_.t0;
        opt.include_state_only = config_.include_state_only;
        if (config_.q0_sample == Q0Sample::stationary_proxy) {
            // Drawn from its own stream so that the shock paths stay common.
            ShockStream draw(splitmix64(config_.seed ^ 0x5eedf00dULL), index);
            opt.q0 = config_.params.market.nu * std::sqrt(config_.t0) * draw.standard_normal();
        }
        episode_.emplace(config_.params, config_.seed, index, opt);
        next_index_ = index + 1;
        return {{"obs", obs(episode_->state())}, {"episode", index}, {"steps", episode_->n_steps()}};
    }

    nlohmann::json step(const nlohmann::json& msg) {
        if (!msg.contains("v") || !msg["v"].is_number())
            return error(env_errors::bad_request, "step needs a numeric \"v\"");
        const double v = msg["v"].get<double>();
        if (!std::isfinite(v)) return error(env_errors::bad_request, "\"v\" must be finite");
        if (!episode_) return error(env_errors::no_episode, "reset before stepping");
        if (episode_->done()) return error(env_errors::episode_done, "episode is finished; reset to start another");
        const double reward = episode_->step(v);
        return {{"obs", obs(episode_->state())}, {"reward", reward}, {"done", episode_->done()}};
    }

    SessionConfig config_;
    std::optional<Episode> episode_;
    std::uint64_t next_index_ = 0;
    bool closed_ = false;
};

/// Serves one session over a pair of streams until "close" or end of input.
inline void serve_stream(std::istream& in, std::ostream& out, const SessionConfig& base) {
    Session session(base);
    std::string line;
    while (!session.closed() && std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        out << session.handle_line(line) << '\n' << std::flush;
    }
}

namespace env_detail {

inline bool send_all(int fd, const std::string& data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) return false;
        sent += static_cast<std::size_t>(n);
    }
    return true;
}

inline void serve_socket(int fd, SessionConfig base) {
    Session session(std::move(base));
    std::string buffer;
    char chunk[4096];
    while (!session.closed()) {
        const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) break;
        buffer.append(chunk, static_cast<std::size_t>(n));
        std::size_t pos;
        while (!session.closed() && (pos = buffer.find('\n')) != std::string::npos) {
            std::string line = buffer.substr(0, pos);
            buffer.erase(0, pos + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            if (!send_all(fd, session.handle_line(line) + "\n")) {
                ::close(fd);
                return;
            }
        }
    }
    ::close(fd);
}

}  // namespace env_detail

/// TCP server on the loopback interface: one thread and one session per
/// connection.
class TcpServer {
public:
    TcpServer(SessionConfig base, std::uint16_t port) : base_(std::move(base)) {
        validate(base_);
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw Error(std::string("socket: ") + std::strerror(errno));
        int one = 1;
        ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(port);
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd_, 16) < 0) {
            const std::string msg = std::strerror(errno);
            ::close(fd_);
            throw Error("cannot listen on port " + std::to_string(port) + ": " + msg);
        }
        socklen_t len = sizeof addr;
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
    }

    TcpServer(const TcpServer&) = delete;
    TcpServer& operator=(const TcpServer&) = delete;
    ~TcpServer() { stop(); }

    std::uint16_t port() const { return port_; }

    /// Accepts connections until stop() is called.
    void run() {
        while (!stopping_) {
            const int client = ::accept(fd_, nullptr, nullptr);
            if (client < 0) {
                if (errno == EINTR) continue;
                if (stopping_) break;
                throw Error(std::string("accept: ") + std::strerror(errno));
            }
            std::thread(env_detail::serve_socket, client, base_).detach();
        }
    }

    void stop() {
        if (stopping_.exchange(true)) return;
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
    }

private:
    SessionConfig base_;
    int fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
};

}  // namespace flowhedge
