#pragma once

// Sliding-window request and token budgets shared by concurrent remote callers.

#include <chrono>
#include <cstdint>
#include <deque>
#include <mutex>
#include <string_view>

namespace mathbode {

class Clock {
public:
    using duration = std::chrono::nanoseconds;
    using time_point = std::chrono::time_point<std::chrono::steady_clock, duration>;

    virtual ~Clock() = default;
    virtual time_point now() = 0;
    virtual void sleep_until(time_point when) = 0;
    void sleep_for(duration d) { sleep_until(now() + d); }
};

class SteadyClock final : public Clock {
public:
    time_point now() override;
    void sleep_until(time_point when) override;
};

/// Simulated clock: sleeping advances time instantly.
class ManualClock final : public Clock {
public:
    time_point now() override;
    void sleep_until(time_point when) override;
    void advance(duration d);

private:
    std::mutex mutex_;
    time_point now_{};
};

struct RateLimits {
    std::int64_t requests_per_window = 600;  // RPM
    std::int64_t tokens_per_window = 20000;  // TPM; <= 0 disables
    Clock::duration window = std::chrono::minutes(1);
};

/// Admits a request at time x only if the half-open window (x - W, x] would then
/// hold at most `requests_per_window` requests and `tokens_per_window` tokens.
class SlidingWindowLimiter {
public:
    SlidingWindowLimiter(RateLimits limits, Clock& clock);

    /// Blocks (via the clock) until the request fits. Throws ConfigError when
    /// `tokens` alone exceeds the token budget.
    void acquire(std::int64_t tokens = 0);
    bool try_acquire(std::int64_t tokens = 0);

    const RateLimits& limits() const { return limits_; }

private:
    struct Entry {
        Clock::time_point at;
        std::int64_t tokens;
    };

    // Requires mutex_. Returns true and records on success; otherwise sets `retry_at`.
    bool admit_locked(Clock::time_point now, std::int64_t tokens, Clock::time_point& retry_at);

    RateLimits limits_;
    Clock& clock_;
    std::mutex mutex_;
    std::deque<Entry> log_;
    std::int64_t tokens_in_window_ = 0;
};

/// ceil(bytes / 4) for the prompt plus the full completion budget.
std::int64_t estimate_request_tokens(std::string_view prompt, int max_tokens);

}  // namespace mathbode
