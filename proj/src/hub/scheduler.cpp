#include "satseries/hub/scheduler.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <thread>

#include "satseries/core/digest.hpp"
#include "satseries/core/log.hpp"

namespace satseries::hub {

void ThrottlePolicy::validate() const {
    if (min_request_interval <= Duration::zero() || lta_availability_window <= Duration::zero() ||
        poll_interval <= Duration::zero()) {
        throw ValidationError("throttle durations must be positive");
    }
    if (max_concurrent_downloads < 1) {
        throw ValidationError("max_concurrent_downloads must be at least 1");
    }
}

Duration BackoffPolicy::delay(int attempt) const {
    Duration d = base;
    for (int i = 1; i < attempt && d < cap; ++i) {
        d *= factor;
    }
    return std::min(d, cap);
}

LtaThrottle::LtaThrottle(Duration interval, std::optional<Instant> last_request)
    : interval_(interval), last_(last_request) {}

std::optional<Instant> LtaThrottle::next_slot() const {
    if (!last_) {
        return std::nullopt;
    }
    return *last_ + interval_;
}

bool LtaThrottle::ready(Instant now) const {
    return !last_ || now >= *last_ + interval_;
}

void LtaThrottle::record(Instant sent) {
    last_ = sent;
}

std::vector<DispatchEvent> schedule_lta_requests(const std::vector<DownloadTask>& tasks,
                                                 const std::vector<bool>& online, const ThrottlePolicy& policy,
                                                 Instant start) {
    policy.validate();
    if (online.size() != tasks.size()) {
        throw ValidationError("online flags must match tasks");
    }
    std::vector<DispatchEvent> events;
    int slot = 0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (online[i]) {
            events.push_back({DispatchEvent::Kind::DownloadStart, tasks[i].product_id, start});
        } else {
            events.push_back({DispatchEvent::Kind::LtaRequest, tasks[i].product_id,
                              start + slot++ * policy.min_request_interval});
        }
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const DispatchEvent& a, const DispatchEvent& b) { return a.at < b.at; });
    return events;
}

LtaWatch::LtaWatch(Instant requested_at, const ThrottlePolicy& policy, const BackoffPolicy& backoff)
    : requested_at_(requested_at), next_poll_(requested_at), policy_(policy), backoff_(backoff) {}

LtaWatch::Step LtaWatch::step(HubApi& hub, const std::string& product_id, Instant now) {
    if (now < next_poll_) {
        return {Status::Pending, {}};
    }
    const Instant deadline = requested_at_ + policy_.lta_timeout();
    Duration wait = policy_.poll_interval;
    try {
        if (hub.is_online(product_id)) {
            return {Status::Online, {}};
        }
        failures_ = 0;
    } catch (const HubUnreachable& e) {
        if (++failures_ > backoff_.max_attempts) {
            return {Status::Failed, "hub unreachable"};
        }
        log::warn("status poll failed", {{"product_id", product_id}, {"error", e.what()}});
        wait = backoff_.delay(failures_);
    }
    if (now >= deadline) {
        return {Status::Failed, "lta timeout"};
    }
    next_poll_ = std::min(now + wait, deadline);
    return {Status::Pending, {}};
}

TaskState poll_until_online(HubApi& hub, Clock& clock, DownloadTask& task, const ThrottlePolicy& policy,
                            const BackoffPolicy& backoff) {
    if (task.state != TaskState::LtaRequested) {
        throw ValidationError("poll_until_online needs an LtaRequested task");
    }
    LtaWatch watch(task.lta_requested_at.value_or(clock.now()), policy, backoff);
    while (true) {
        clock.sleep_until(watch.next_poll());
        const auto step = watch.step(hub, task.product_id, clock.now());
        if (step.status == LtaWatch::Status::Online) {
            task.state = TaskState::Online;
            return task.state;
        }
        if (step.status == LtaWatch::Status::Failed) {
            task.state = TaskState::Failed;
            task.failure_reason = step.reason;
            return task.state;
        }
    }
}

std::filesystem::path archive_path(const std::filesystem::path& dest, const std::string& product_id) {
    return dest / (product_id + ".zip");
}

std::filesystem::path partial_path(const std::filesystem::path& dest, const std::string& product_id) {
    return dest / (product_id + ".zip.part");
}

namespace {

bool content_matches(const DownloadTask& task, const std::filesystem::path& file, std::string* reason) {
    if (task.checksum_expected) {
        if (md5_file(file) != *task.checksum_expected) {
            *reason = "checksum";
            return false;
        }
        return true;
    }
    if (task.size_bytes && static_cast<std::int64_t>(std::filesystem::file_size(file)) != *task.size_bytes) {
        *reason = "size mismatch";
        return false;
    }
    return true;
}

std::int64_t file_size_or_zero(const std::filesystem::path& p) {
    std::error_code ec;
    const auto n = std::filesystem::file_size(p, ec);
    return ec ? 0 : static_cast<std::int64_t>(n);
}

} // namespace

bool verify_archive(const DownloadTask& task, const std::filesystem::path& dest) {
    const auto path = archive_path(dest, task.product_id);
    if (!std::filesystem::exists(path)) {
        return false;
    }
    std::string reason;
    return content_matches(task, path, &reason);
}

DownloadResult download_product(HubApi& hub, Clock& clock, const DownloadTask& task,
                                const std::filesystem::path& dest, const BackoffPolicy& backoff) {
    DownloadResult result;
    std::filesystem::create_directories(dest);
    const auto part = partial_path(dest, task.product_id);
    const auto final_path = archive_path(dest, task.product_id);
    if (verify_archive(task, dest)) {
        result.ok = true;
        return result;
    }
    std::int64_t offset = file_size_or_zero(part);
    if (task.size_bytes && offset > *task.size_bytes) {
        std::filesystem::remove(part);
        offset = 0;
    }
    while (!(task.size_bytes && offset == *task.size_bytes)) {
        ++result.attempts;
        if (offset > 0) {
            ++result.range_resumes;
        }
        std::ofstream out(part, std::ios::binary | std::ios::app);
        if (!out) {
            result.reason = "cannot write " + part.string();
            return result;
        }
        try {
            hub.download(task.product_id, offset, [&](std::span<const std::byte> bytes) {
                out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
                if (!out) {
                    throw Error("write failed: " + part.string());
                }
            });
            out.close();
            break;
        } catch (const HubUnreachable& e) {
            out.close();
            result.reason = std::string("transport: ") + e.what();
        } catch (const TransportError& e) {
            out.close();
            result.reason = std::string("transport: ") + e.what();
        } catch (const HubError& e) {
            result.reason = e.what();
            return result;
        }
        offset = file_size_or_zero(part);
        if (result.attempts >= backoff.max_attempts) {
            return result;
        }
        log::warn("transfer interrupted",
                  {{"product_id", task.product_id}, {"offset", std::to_string(offset)}, {"error", result.reason}});
        clock.sleep_for(backoff.delay(result.attempts));
    }
    std::string reason;
    if (!content_matches(task, part, &reason)) {
        std::filesystem::remove(part);
        result.reason = reason;
        return result;
    }
    std::filesystem::rename(part, final_path);
    result.ok = true;
    result.reason.clear();
    return result;
}

QueueRunner::QueueRunner(HubApi& hub, Clock& clock, RunnerOptions options)
    : hub_(hub), clock_(clock), options_(std::move(options)) {
    options_.policy.validate();
}

namespace {

struct Slot {
    DownloadTask task;
    std::optional<LtaWatch> watch;
    bool probed = false;
    bool abandoned = false;
    bool in_flight = false;
    int request_failures = 0;
    Instant retry_at{};
};

struct Completion {
    std::size_t slot;
    DownloadResult result;
};

} // namespace

RunSummary QueueRunner::run(std::vector<DownloadTask> tasks) {
    Journal journal(options_.journal_path);
    const JournalReplay replay = replay_journal(read_journal(options_.journal_path));
    LtaThrottle throttle(options_.policy.min_request_interval, replay.last_lta_request);
    RunSummary summary;

    std::vector<Slot> slots;
    for (DownloadTask& t : tasks) {
        if (std::any_of(slots.begin(), slots.end(), [&](const Slot& s) { return s.task.product_id == t.product_id; })) {
            throw ValidationError("product listed twice: " + t.product_id);
        }
        Slot s;
        s.task = std::move(t);
        slots.push_back(std::move(s));
    }

    auto transition = [&](Slot& s, TaskState to, const std::string& detail) {
        if (!is_allowed_transition(s.task.state, to)) {
            throw Error("illegal transition for " + s.task.product_id);
        }
        journal.append({clock_.now(), s.task.product_id, s.task.state, to, detail});
        log::info("task transition", {{"product_id", s.task.product_id},
                                      {"from", std::string(to_string(s.task.state))},
                                      {"to", std::string(to_string(to))},
                                      {"detail", detail}});
        s.task.state = to;
    };

    for (Slot& s : slots) {
        auto it = replay.tasks.find(s.task.product_id);
        if (it == replay.tasks.end()) {
            journal.append({clock_.now(), s.task.product_id, std::nullopt, TaskState::Queued, "queued"});
            continue;
        }
        s.task.state = it->second.state;
        s.task.lta_requested_at = it->second.lta_requested_at;
        switch (s.task.state) {
        case TaskState::Done:
            ++summary.already_done;
            if (!verify_archive(s.task, options_.dest_dir)) {
                log::warn("completed archive missing or damaged", {{"product_id", s.task.product_id}});
            }
            break;
        case TaskState::Failed:
            s.task.failure_reason = it->second.detail;
            break;
        case TaskState::LtaRequested:
            s.watch.emplace(s.task.lta_requested_at.value_or(clock_.now()), options_.policy, options_.backoff);
            break;
        default:
            break;
        }
    }

    std::mutex mutex;
    std::condition_variable cv;
    std::deque<Completion> completions;
    std::vector<std::thread> workers;
    int active = 0;

    auto finished = [&](const Slot& s) { return is_terminal(s.task.state) || s.abandoned; };

    while (true) {
        {
            std::deque<Completion> ready;
            {
                std::lock_guard lock(mutex);
                ready.swap(completions);
            }
            for (Completion& c : ready) {
                Slot& s = slots[c.slot];
                s.in_flight = false;
                --active;
                s.task.attempts += c.result.attempts;
                if (c.result.ok) {
                    transition(s, TaskState::Done, "downloaded");
                } else {
                    s.task.failure_reason = c.result.reason;
                    transition(s, TaskState::Failed, c.result.reason);
                }
            }
        }
        Instant now = clock_.now();

        for (Slot& s : slots) {
            if (s.task.state != TaskState::Queued || s.probed || s.abandoned) {
                continue;
            }
            s.probed = true;
            try {
                if (hub_.is_online(s.task.product_id)) {
                    transition(s, TaskState::Online, "already online");
                }
            } catch (const HubError& e) {
                log::warn("status probe failed", {{"product_id", s.task.product_id}, {"error", e.what()}});
            }
        }

        // at most one LTA request per pass; the throttle spaces them out
        for (Slot& s : slots) {
            if (s.task.state != TaskState::Queued || s.abandoned) {
                continue;
            }
            if (!throttle.ready(now) || now < s.retry_at) {
                break;
            }
            try {
                const RetrieveResult r = hub_.request_retrieval(s.task.product_id);
                throttle.record(now);
                if (r == RetrieveResult::Accepted) {
                    s.task.lta_requested_at = now;
                    transition(s, TaskState::LtaRequested, "lta request accepted");
                    s.watch.emplace(now, options_.policy, options_.backoff);
                } else {
                    transition(s, TaskState::Online, "online at request");
                }
            } catch (const HubUnreachable& e) {
                if (++s.request_failures > options_.backoff.max_attempts) {
                    s.abandoned = true;
                    s.task.failure_reason = "hub unreachable";
                } else {
                    s.retry_at = now + options_.backoff.delay(s.request_failures);
                }
                log::warn("lta request failed", {{"product_id", s.task.product_id}, {"error", e.what()}});
            } catch (const HubError& e) {
                s.abandoned = true;
                s.task.failure_reason = e.what();
                log::error("lta request rejected", {{"product_id", s.task.product_id}, {"error", e.what()}});
            }
            break;
        }

        for (Slot& s : slots) {
            if (s.task.state != TaskState::LtaRequested || !s.watch) {
                continue;
            }
            const auto step = s.watch->step(hub_, s.task.product_id, now);
            if (step.status == LtaWatch::Status::Online) {
                transition(s, TaskState::Online, "online");
            } else if (step.status == LtaWatch::Status::Failed) {
                s.task.failure_reason = step.reason;
                transition(s, TaskState::Failed, step.reason);
            }
        }

        for (std::size_t i = 0; i < slots.size() && active < options_.policy.max_concurrent_downloads; ++i) {
            Slot& s = slots[i];
            if (s.in_flight || (s.task.state != TaskState::Online && s.task.state != TaskState::Downloading)) {
                continue;
            }
            if (s.task.state == TaskState::Online) {
                transition(s, TaskState::Downloading, "transfer started");
            }
            s.in_flight = true;
            ++active;
            workers.emplace_back([&, i, task = s.task] {
                Completion c{i, {}};
                try {
                    c.result = download_product(hub_, clock_, task, options_.dest_dir, options_.backoff);
                } catch (const std::exception& e) {
                    c.result.reason = e.what();
                }
                std::lock_guard lock(mutex);
                completions.push_back(std::move(c));
                cv.notify_all();
            });
        }

        if (active == 0 && std::all_of(slots.begin(), slots.end(), finished)) {
            break;
        }

        std::optional<Instant> deadline;
        auto consider = [&](Instant t) { deadline = deadline ? std::min(*deadline, t) : t; };
        for (const Slot& s : slots) {
            if (s.task.state == TaskState::Queued && !s.abandoned) {
                consider(std::max(throttle.next_slot().value_or(now), s.retry_at));
                break;
            }
        }
        for (const Slot& s : slots) {
            if (s.task.state == TaskState::LtaRequested && s.watch) {
                consider(s.watch->next_poll());
            }
        }
        if (active == 0) {
            if (deadline && *deadline > now) {
                clock_.sleep_until(*deadline);
            }
            continue;
        }
        std::unique_lock lock(mutex);
        auto has_completion = [&] { return !completions.empty(); };
        if (deadline) {
            if (*deadline > now) {
                clock_.wait_until(cv, lock, *deadline, has_completion);
            }
        } else {
            cv.wait(lock, has_completion);
        }
    }
    for (std::thread& t : workers) {
        t.join();
    }

    for (Slot& s : slots) {
        if (s.task.state == TaskState::Done) {
            ++summary.done;
        } else if (s.task.state == TaskState::Failed || s.abandoned) {
            ++summary.failed;
        }
        summary.tasks.push_back(std::move(s.task));
    }
    summary.done -= summary.already_done;
    return summary;
}

} // namespace satseries::hub
