#include "satseries/hub/clock.hpp"

#include <algorithm>
#include <thread>

namespace satseries::hub {

Instant SystemClock::now() const {
    return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

void SystemClock::sleep_until(Instant t) {
    std::this_thread::sleep_until(t);
}

bool SystemClock::wait_until(std::condition_variable& cv, std::unique_lock<std::mutex>& lock, Instant deadline,
                             const std::function<bool()>& ready) {
    return cv.wait_until(lock, deadline, ready);
}

SimulatedClock::SimulatedClock(Instant start) : now_(start) {}

Instant SimulatedClock::now() const {
    std::lock_guard lock(mutex_);
    return now_;
}

void SimulatedClock::sleep_until(Instant t) {
    std::lock_guard lock(mutex_);
    now_ = std::max(now_, t);
}

void SimulatedClock::advance(Duration d) {
    std::lock_guard lock(mutex_);
    now_ += d;
}

bool SimulatedClock::wait_until(std::condition_variable& cv, std::unique_lock<std::mutex>& lock, Instant deadline,
                                const std::function<bool()>& ready) {
    if (cv.wait_for(lock, std::chrono::milliseconds(2), ready)) {
        return true;
    }
    sleep_until(deadline);
    return ready();
}

} // namespace satseries::hub
