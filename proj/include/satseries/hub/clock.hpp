#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <mutex>

#include "satseries/core/time.hpp"

namespace satseries::hub {

using Duration = std::chrono::milliseconds;

/// Injected time source. Simulated clocks let hour-long throttle schedules run
/// in milliseconds.
class Clock {
public:
    virtual ~Clock() = default;
    virtual Instant now() const = 0;
    virtual void sleep_until(Instant t) = 0;
    void sleep_for(Duration d) { sleep_until(now() + d); }

    /// Blocks on `cv` until `ready()` holds or `deadline` passes on this clock.
    /// Returns ready().
    virtual bool wait_until(std::condition_variable& cv, std::unique_lock<std::mutex>& lock, Instant deadline,
                            const std::function<bool()>& ready) = 0;
};

class SystemClock final : public Clock {
public:
    Instant now() const override;
    void sleep_until(Instant t) override;
    bool wait_until(std::condition_variable& cv, std::unique_lock<std::mutex>& lock, Instant deadline,
                    const std::function<bool()>& ready) override;
};

/// Time only moves when someone sleeps or calls advance(). Thread-safe.
class SimulatedClock final : public Clock {
public:
    explicit SimulatedClock(Instant start = Instant{});

    Instant now() const override;
    void sleep_until(Instant t) override;
    void advance(Duration d);
    /// Gives other threads a short real-time window to signal, then jumps to the deadline.
    bool wait_until(std::condition_variable& cv, std::unique_lock<std::mutex>& lock, Instant deadline,
                    const std::function<bool()>& ready) override;

private:
    mutable std::mutex mutex_;
    Instant now_;
};

} // namespace satseries::hub
