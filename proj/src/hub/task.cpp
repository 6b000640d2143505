#include "satseries/hub/task.hpp"

#include <nlohmann/json.hpp>

#include "satseries/core/error.hpp"

namespace satseries::hub {

std::string_view to_string(TaskState s) {
    switch (s) {
    case TaskState::Queued: return "Queued";
    case TaskState::LtaRequested: return "LtaRequested";
    case TaskState::Online: return "Online";
    case TaskState::Downloading: return "Downloading";
    case TaskState::Done: return "Done";
    case TaskState::Failed: return "Failed";
    }
    return "?";
}

TaskState parse_task_state(std::string_view s) {
    for (TaskState t : {TaskState::Queued, TaskState::LtaRequested, TaskState::Online, TaskState::Downloading,
                        TaskState::Done, TaskState::Failed}) {
        if (to_string(t) == s) {
            return t;
        }
    }
    throw ParseError("unknown task state: " + std::string(s));
}

bool is_allowed_transition(TaskState from, TaskState to) {
    using S = TaskState;
    switch (from) {
    case S::Queued: return to == S::LtaRequested || to == S::Online;
    case S::LtaRequested: return to == S::Online || to == S::Failed;
    case S::Online: return to == S::Downloading;
    case S::Downloading: return to == S::Done || to == S::Failed;
    case S::Done:
    case S::Failed: return false;
    }
    return false;
}

bool is_terminal(TaskState s) {
    return s == TaskState::Done || s == TaskState::Failed;
}

Journal::Journal(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    out_.open(path, std::ios::app);
    if (!out_) {
        throw Error("cannot open journal " + path.string());
    }
}

void Journal::append(const JournalEntry& e) {
    nlohmann::ordered_json j;
    j["ts"] = format_instant(e.ts);
    j["product_id"] = e.product_id;
    j["from"] = e.from ? nlohmann::ordered_json(std::string(to_string(*e.from))) : nlohmann::ordered_json(nullptr);
    j["to"] = std::string(to_string(e.to));
    j["detail"] = e.detail;
    std::lock_guard lock(mutex_);
    out_ << j.dump() << '\n';
    out_.flush();
    if (!out_) {
        throw Error("journal write failed: " + path_.string());
    }
}

std::vector<JournalEntry> read_journal(const std::filesystem::path& path) {
    std::vector<JournalEntry> out;
    std::ifstream in(path);
    if (!in) {
        return out;
    }
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        const bool last = in.peek() == std::char_traits<char>::eof();
        try {
            const auto j = nlohmann::json::parse(line);
            JournalEntry e;
            e.ts = parse_instant(j.at("ts").get<std::string>());
            e.product_id = j.at("product_id").get<std::string>();
            if (!j.at("from").is_null()) {
                e.from = parse_task_state(j["from"].get<std::string>());
            }
            e.to = parse_task_state(j.at("to").get<std::string>());
            e.detail = j.value("detail", "");
            out.push_back(std::move(e));
        } catch (const std::exception& ex) {
            if (last) {
                break;
            }
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return out;
}

JournalReplay replay_journal(const std::vector<JournalEntry>& entries) {
    JournalReplay r;
    for (const JournalEntry& e : entries) {
        ReplayedTask& t = r.tasks[e.product_id];
        t.state = e.to;
        t.detail = e.detail;
        if (e.to == TaskState::LtaRequested) {
            t.lta_requested_at = e.ts;
            if (!r.last_lta_request || *r.last_lta_request < e.ts) {
                r.last_lta_request = e.ts;
            }
        }
    }
    return r;
}

std::vector<std::string> check_trace(const std::vector<JournalEntry>& entries) {
    std::vector<std::string> problems;
    std::map<std::string, TaskState> state;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const JournalEntry& e = entries[i];
        const std::string where = "entry " + std::to_string(i) + " (" + e.product_id + "): ";
        auto it = state.find(e.product_id);
        if (it == state.end()) {
            if (e.from || e.to != TaskState::Queued) {
                problems.push_back(where + "first entry must be null -> Queued");
            }
            state[e.product_id] = e.to;
            continue;
        }
        if (!e.from) {
            problems.push_back(where + "task queued twice");
            continue;
        }
        if (*e.from != it->second) {
            problems.push_back(where + "from " + std::string(to_string(*e.from)) + " but task is " +
                               std::string(to_string(it->second)));
        }
        if (!is_allowed_transition(*e.from, e.to)) {
            problems.push_back(where + "illegal transition " + std::string(to_string(*e.from)) + " -> " +
                               std::string(to_string(e.to)));
        }
        it->second = e.to;
    }
    return problems;
}

} // namespace satseries::hub
