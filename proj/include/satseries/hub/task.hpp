#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "satseries/core/time.hpp"

namespace satseries::hub {

enum class TaskState { Queued, LtaRequested, Online, Downloading, Done, Failed };

std::string_view to_string(TaskState s);
TaskState parse_task_state(std::string_view s);

/// Queued→LtaRequested→Online→Downloading→{Done, Failed}, plus Queued→Online
/// and LtaRequested→Failed (timeout).
bool is_allowed_transition(TaskState from, TaskState to);
bool is_terminal(TaskState s);

struct DownloadTask {
    std::string product_id;
    TaskState state = TaskState::Queued;
    int attempts = 0;
    std::optional<std::string> checksum_expected;
    std::optional<std::int64_t> size_bytes;
    std::optional<Instant> lta_requested_at;
    std::string failure_reason;
};

struct JournalEntry {
    Instant ts{};
    std::string product_id;
    std::optional<TaskState> from;  // absent for the initial Queued record
    TaskState to = TaskState::Queued;
    std::string detail;
};

/// Append-only JSON-lines journal: {"ts","product_id","from","to","detail"}.
/// Each entry is flushed before append() returns.
class Journal {
public:
    explicit Journal(const std::filesystem::path& path);
    void append(const JournalEntry& e);
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::mutex mutex_;
};

/// Reads all complete entries. A torn last line (crash mid-write) is ignored.
std::vector<JournalEntry> read_journal(const std::filesystem::path& path);

struct ReplayedTask {
    TaskState state = TaskState::Queued;
    std::optional<Instant> lta_requested_at;
    std::string detail;
};

struct JournalReplay {
    std::map<std::string, ReplayedTask> tasks;
    /// Time of the most recent LTA request, to keep the throttle across restarts.
    std::optional<Instant> last_lta_request;
};

JournalReplay replay_journal(const std::vector<JournalEntry>& entries);

/// Checks every product's entries against the transition graph. Returns one
/// message per violation; empty means the trace is valid.
std::vector<std::string> check_trace(const std::vector<JournalEntry>& entries);

} // namespace satseries::hub
