#pragma once

#include <chrono>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "polscale/common.hpp"

namespace polscale {

struct RetryPolicy {
  int max_attempts = 5;
  double base_delay_s = 0.25;   // doubled per attempt
  double max_delay_s = 8.0;
  bool jitter = true;
};

// Retries fn() on ProviderError with exponential backoff and full jitter.
// Other exception types pass through untouched: a parse or data problem will
// not improve with patience.
template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  double delay = policy.base_delay_s;
  int attempt = 1;
  for (;;) {
    try {
      return fn();
    } catch (const ProviderError& e) {
      if (attempt >= policy.max_attempts)
        throw ProviderError(std::string(e.what()) + " (after " +
                            std::to_string(attempt) + " attempts)");
      double d = std::min(delay, policy.max_delay_s);
      if (policy.jitter) {
        std::uniform_real_distribution<double> u(0.0, d);
        d = u(rng);
      }
      std::this_thread::sleep_for(std::chrono::duration<double>(d));
      delay *= 2;
      ++attempt;
    }
  }
}

// Sliding one-second window rate limiter. Clock and sleep are injectable so
// the window property is testable without wall-clock flakiness.
class RateLimiter {
 public:
  using ClockFn = std::function<double()>;          // seconds, monotonic
  using SleepFn = std::function<void(double)>;      // seconds

  explicit RateLimiter(double per_second)
      : RateLimiter(per_second, default_clock(), default_sleep()) {}

  RateLimiter(double per_second, ClockFn clock, SleepFn sleep)
      : limit_(per_second), clock_(std::move(clock)), sleep_(std::move(sleep)) {
    if (limit_ <= 0) throw ConfigError("rate limit must be positive");
  }

  // Blocks until issuing one more request keeps every sliding 1s window at or
  // under the limit, then records the issue time.
  void acquire() {
    std::unique_lock lock(mu_);
    for (;;) {
      double now = clock_();
      while (!stamps_.empty() && stamps_.front() <= now - 1.0)
        stamps_.erase(stamps_.begin());
      if (stamps_.size() < static_cast<size_t>(limit_)) {
        stamps_.push_back(now);
        issued_.push_back(now);
        return;
      }
      double wake = stamps_.front() + 1.0;
      lock.unlock();
      sleep_(std::max(0.0, wake - now) + 1e-4);
      lock.lock();
    }
  }

  // Issue timestamps, for asserting the window property in tests.
  std::vector<double> issue_log() const {
    std::lock_guard lock(mu_);
    return issued_;
  }

 private:
  static ClockFn default_clock() {
    return [] {
      return std::chrono::duration<double>(
                 std::chrono::steady_clock::now().time_since_epoch())
          .count();
    };
  }
  static SleepFn default_sleep() {
    return [](double s) {
      std::this_thread::sleep_for(std::chrono::duration<double>(s));
    };
  }

  double limit_;
  ClockFn clock_;
  SleepFn sleep_;
  mutable std::mutex mu_;
  std::vector<double> stamps_;
  std::vector<double> issued_;
};

}  // namespace polscale
