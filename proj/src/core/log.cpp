#include "satseries/core/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

#include <nlohmann/json.hpp>

namespace satseries::log {
namespace {

std::atomic<Format> g_format{Format::Text};
std::atomic<Level> g_min_level{Level::Info};
std::mutex g_mutex;

const char* level_name(Level level) {
    switch (level) {
    case Level::Debug: return "debug";
    case Level::Info: return "info";
    case Level::Warn: return "warn";
    case Level::Error: return "error";
    }
    return "info";
}

} // namespace

void set_format(Format format) { g_format = format; }
void set_min_level(Level level) { g_min_level = level; }

void write(Level level, std::string_view message, std::initializer_list<Field> fields) {
    if (level < g_min_level.load()) {
        return;
    }
    std::string line;
    if (g_format.load() == Format::Json) {
        nlohmann::ordered_json j;
        j["level"] = level_name(level);
        j["msg"] = std::string(message);
        for (const auto& [k, v] : fields) {
            j[std::string(k)] = v;
        }
        line = j.dump();
    } else {
        line = level_name(level);
        line += ' ';
        line += message;
        for (const auto& [k, v] : fields) {
            line += ' ';
            line += k;
            line += '=';
            line += v;
        }
    }
    std::lock_guard lock(g_mutex);
    std::cerr << line << '\n';
}

} // namespace satseries::log
