#pragma once

// Transport plumbing shared by the remote embedding backend and the chat
// client: injectable transport + clock seams (so tests never touch the
// network or wall time), bounded-retry POST with exponential backoff, and a
// counting semaphore that caps in-flight requests.

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "lmx/common.hpp"

namespace lmx {

struct HttpRequest {
    std::string url;
    std::string body;                                          // JSON payload
    std::vector<std::pair<std::string, std::string>> headers;  // extra headers
};

struct HttpResponse {
    int status = 0;       // <= 0 means the transport itself failed
    std::string body;
    std::string error;    // transport-level failure description
};

// Seam for the wire. Implementations must be callable from multiple threads.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post(const HttpRequest& request) = 0;
};

// Seam for time so backoff tests run instantly under a fake clock.
class Clock {
public:
    virtual ~Clock() = default;
    virtual void sleep_for(double seconds) = 0;
    virtual std::int64_t now_epoch_seconds() = 0;
};

class SystemClock : public Clock {
public:
    void sleep_for(double seconds) override {
        std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    }
    std::int64_t now_epoch_seconds() override {
        return std::chrono::duration_cast<std::chrono::seconds>(
                   std::chrono::system_clock::now().time_since_epoch())
            .count();
    }
};

// Frozen at the epoch; sleeps only record their duration. Used by tests and
// by deterministic (mock/replay) pipeline runs.
class FixedClock : public Clock {
public:
    explicit FixedClock(std::int64_t epoch_seconds = 0) : now_(epoch_seconds) {}
    void sleep_for(double seconds) override {
        std::lock_guard<std::mutex> lock(mu_);
        sleeps_.push_back(seconds);
    }
    std::int64_t now_epoch_seconds() override { return now_; }
    std::vector<double> sleeps() const {
        std::lock_guard<std::mutex> lock(mu_);
        return sleeps_;
    }

private:
    mutable std::mutex mu_;
    std::int64_t now_;
    std::vector<double> sleeps_;
};

// Counting semaphore with RAII slots; caps concurrent in-flight requests.
class InflightLimiter {
public:
    explicit InflightLimiter(int limit) : available_(limit) {
        if (limit < 1) throw ArgumentError("in-flight limit must be >= 1");
    }

    class Slot {
    public:
        explicit Slot(InflightLimiter& parent) : parent_(&parent) { parent_->acquire(); }
        ~Slot() {
            if (parent_) parent_->release();
        }
        Slot(const Slot&) = delete;
        Slot& operator=(const Slot&) = delete;

    private:
        InflightLimiter* parent_;
    };

private:
    void acquire() {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return available_ > 0; });
        --available_;
    }
    void release() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            ++available_;
        }
        cv_.notify_one();
    }

    std::mutex mu_;
    std::condition_variable cv_;
    int available_;
};

struct RetryPolicy {
    int max_retries = 2;          // additional attempts after the first
    double backoff_base = 1.0;    // seconds before the first retry
    double backoff_factor = 2.0;
    std::uint64_t jitter_seed = 0;
};

inline bool retryable_status(int status) {
    return status <= 0 || status == 429 || (status >= 500 && status < 600);
}

// POSTs with bounded retries on 429/5xx/transport failure; other 4xx are
// returned immediately. Backoff: base * factor^attempt * jitter[0.9, 1.1].
// Throws TransportError once retries are exhausted.
inline HttpResponse post_with_retry(Transport& transport, Clock& clock,
                                    const HttpRequest& request, const RetryPolicy& policy,
                                    int* attempts_out = nullptr) {
    Rng jitter(policy.jitter_seed);
    std::string attempt_log;
    for (int attempt = 0; attempt <= policy.max_retries; ++attempt) {
        HttpResponse resp = transport.post(request);
        if (attempts_out) *attempts_out = attempt + 1;
        if (!retryable_status(resp.status)) return resp;
        attempt_log += (attempt ? "; " : "") + std::string("attempt ") +
                       std::to_string(attempt + 1) + ": " +
                       (resp.status > 0 ? "HTTP " + std::to_string(resp.status)
                                        : "transport: " + resp.error);
        if (attempt == policy.max_retries) {
            throw TransportError("request failed after " + std::to_string(attempt + 1) +
                                 " attempts [" + attempt_log + "]");
        }
        double delay = policy.backoff_base * std::pow(policy.backoff_factor, attempt) *
                       (0.9 + 0.2 * jitter.next_unit());
        clock.sleep_for(delay);
    }
    throw TransportError("unreachable retry state");  // LCOV_EXCL_LINE
}

}  // namespace lmx
