#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "satseries/hub/clock.hpp"
#include "satseries/hub/hub_api.hpp"
#include "satseries/hub/task.hpp"

namespace satseries::hub {

struct ThrottlePolicy {
    Duration min_request_interval = std::chrono::minutes(30);
    Duration lta_availability_window = std::chrono::hours(24);
    Duration poll_interval = std::chrono::minutes(10);
    int max_concurrent_downloads = 2;

    void validate() const;
    /// An LTA request that is still offline after this long has failed.
    Duration lta_timeout() const { return lta_availability_window * 3 / 2; }
};

/// Exponential backoff for an unreachable hub and broken transfers.
struct BackoffPolicy {
    Duration base = std::chrono::seconds(10);
    int factor = 2;
    Duration cap = std::chrono::minutes(10);
    int max_attempts = 6;

    /// Delay before retry number `attempt` (1-based).
    Duration delay(int attempt) const;
};

/// One LTA request per interval: the i-th request goes out no earlier than
/// the previous one plus the interval.
class LtaThrottle {
public:
    explicit LtaThrottle(Duration interval, std::optional<Instant> last_request = std::nullopt);

    /// Earliest time the next request may be sent.
    std::optional<Instant> next_slot() const;
    bool ready(Instant now) const;
    void record(Instant sent);

private:
    Duration interval_;
    std::optional<Instant> last_;
};

struct DispatchEvent {
    enum class Kind { LtaRequest, DownloadStart };
    Kind kind;
    std::string product_id;
    Instant at;
};

/// Dispatch plan for queued tasks: online products start downloading at
/// `start`; offline products get LTA requests at start + i × interval, in
/// input order.
std::vector<DispatchEvent> schedule_lta_requests(const std::vector<DownloadTask>& tasks,
                                                 const std::vector<bool>& online, const ThrottlePolicy& policy,
                                                 Instant start);

/// Polling state of one requested product.
class LtaWatch {
public:
    LtaWatch(Instant requested_at, const ThrottlePolicy& policy, const BackoffPolicy& backoff);

    enum class Status { Pending, Online, Failed };
    struct Step {
        Status status;
        std::string reason;
    };

    Instant next_poll() const { return next_poll_; }
    Instant requested_at() const { return requested_at_; }
    /// Polls once if due. Unreachable hubs back off; too many failures or the
    /// availability timeout fail the watch.
    Step step(HubApi& hub, const std::string& product_id, Instant now);

private:
    Instant requested_at_;
    Instant next_poll_;
    ThrottlePolicy policy_;
    BackoffPolicy backoff_;
    int failures_ = 0;
};

/// Blocking poll loop. `task` must be LtaRequested; ends Online or Failed.
TaskState poll_until_online(HubApi& hub, Clock& clock, DownloadTask& task, const ThrottlePolicy& policy,
                            const BackoffPolicy& backoff = {});

struct DownloadResult {
    bool ok = false;
    std::string reason;
    int range_resumes = 0;
    int attempts = 0;
};

std::filesystem::path archive_path(const std::filesystem::path& dest, const std::string& product_id);
std::filesystem::path partial_path(const std::filesystem::path& dest, const std::string& product_id);

/// Streams into `dest/<id>.zip.part` (resuming from its size), verifies the MD5
/// (or the size when no checksum is known) and renames to `dest/<id>.zip`.
/// A mismatch deletes the partial file and fails with "checksum".
DownloadResult download_product(HubApi& hub, Clock& clock, const DownloadTask& task,
                                const std::filesystem::path& dest, const BackoffPolicy& backoff = {});

/// True when `dest/<id>.zip` exists and matches the task's checksum/size.
bool verify_archive(const DownloadTask& task, const std::filesystem::path& dest);

struct RunnerOptions {
    ThrottlePolicy policy;
    BackoffPolicy backoff;
    std::filesystem::path dest_dir;
    std::filesystem::path journal_path;
};

struct RunSummary {
    std::vector<DownloadTask> tasks;
    int done = 0;
    int failed = 0;
    int already_done = 0;
};

/// Owns the task queue: replays the journal, sends throttled LTA requests,
/// polls, and runs up to max_concurrent_downloads transfers. Every state
/// change is journaled before the runner acts on it.
class QueueRunner {
public:
    QueueRunner(HubApi& hub, Clock& clock, RunnerOptions options);
    RunSummary run(std::vector<DownloadTask> tasks);

private:
    HubApi& hub_;
    Clock& clock_;
    RunnerOptions options_;
};

} // namespace satseries::hub
