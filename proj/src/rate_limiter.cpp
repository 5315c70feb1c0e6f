#include "mathbode/rate_limiter.hpp"

#include <thread>

#include <fmt/format.h>

#include "mathbode/errors.hpp"

namespace mathbode {

Clock::time_point SteadyClock::now() {
    return std::chrono::time_point_cast<duration>(std::chrono::steady_clock::now());
}

void SteadyClock::sleep_until(time_point when) { std::this_thread::sleep_until(when); }

Clock::time_point ManualClock::now() {
    std::lock_guard lock(mutex_);
    return now_;
}

void ManualClock::sleep_until(time_point when) {
    std::lock_guard lock(mutex_);
    if (when > now_) now_ = when;
}

void ManualClock::advance(duration d) {
    std::lock_guard lock(mutex_);
    now_ += d;
}

SlidingWindowLimiter::SlidingWindowLimiter(RateLimits limits, Clock& clock) : limits_(limits), clock_(clock) {
    if (limits_.requests_per_window <= 0) throw ConfigError("rate limit needs a positive request budget");
    if (limits_.window <= Clock::duration::zero()) throw ConfigError("rate limit window must be positive");
}

bool SlidingWindowLimiter::admit_locked(Clock::time_point now, std::int64_t tokens,
                                        Clock::time_point& retry_at) {
    while (!log_.empty() && log_.front().at <= now - limits_.window) {
        tokens_in_window_ -= log_.front().tokens;
        log_.pop_front();
    }
    const bool token_budget = limits_.tokens_per_window > 0;
    const bool requests_ok = static_cast<std::int64_t>(log_.size()) < limits_.requests_per_window;
    const bool tokens_ok = !token_budget || tokens_in_window_ + tokens <= limits_.tokens_per_window;
    if (requests_ok && tokens_ok) {
        log_.push_back({now, tokens});
        tokens_in_window_ += tokens;
        return true;
    }

    // Earliest moment at which enough old entries have aged out.
    std::size_t drop = 0;
    if (!requests_ok) drop = log_.size() - static_cast<std::size_t>(limits_.requests_per_window) + 1;
    if (!tokens_ok) {
        std::int64_t excess = tokens_in_window_ + tokens - limits_.tokens_per_window;
        std::size_t i = 0;
        while (excess > 0 && i < log_.size()) excess -= log_[i++].tokens;
        drop = std::max(drop, i);
    }
    retry_at = (drop == 0 || drop > log_.size()) ? now + limits_.window : log_[drop - 1].at + limits_.window;
    return false;
}

void SlidingWindowLimiter::acquire(std::int64_t tokens) {
    if (limits_.tokens_per_window > 0 && tokens > limits_.tokens_per_window)
        throw ConfigError(fmt::format("request needs {} tokens, budget is {}", tokens, limits_.tokens_per_window));
    for (;;) {
        Clock::time_point retry_at;
        {
            std::lock_guard lock(mutex_);
            if (admit_locked(clock_.now(), tokens, retry_at)) return;
        }
        clock_.sleep_until(retry_at);
    }
}

bool SlidingWindowLimiter::try_acquire(std::int64_t tokens) {
    if (limits_.tokens_per_window > 0 && tokens > limits_.tokens_per_window) return false;
    std::lock_guard lock(mutex_);
    Clock::time_point ignored;
    return admit_locked(clock_.now(), tokens, ignored);
}

std::int64_t estimate_request_tokens(std::string_view prompt, int max_tokens) {
    return static_cast<std::int64_t>((prompt.size() + 3) / 4) + max_tokens;
}

}  // namespace mathbode
