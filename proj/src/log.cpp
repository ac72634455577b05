#include "facecycle/log.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <iomanip>
#include <iostream>
#include <mutex>

#include "facecycle/error.hpp"

namespace facecycle::log {
namespace {

std::atomic<Level> g_level{Level::info};
std::mutex g_mutex;

const char* tag(Level level) {
    switch (level) {
        case Level::debug: return "debug";
        case Level::info: return "info";
        case Level::warn: return "warn";
        case Level::error: return "error";
        case Level::off: break;
    }
    return "";
}

}  // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }

Level parse_level(std::string_view name) {
    if (name == "debug") return Level::debug;
    if (name == "info") return Level::info;
    if (name == "warn") return Level::warn;
    if (name == "error") return Level::error;
    if (name == "off") return Level::off;
    throw ConfigError("log_level", "expected one of debug|info|warn|error|off, got '" +
                                       std::string(name) + "'");
}

void write(Level lvl, std::string_view message) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    std::lock_guard lock(g_mutex);
    std::clog << '[' << std::put_time(&tm, "%H:%M:%S") << "] [" << tag(lvl) << "] " << message
              << '\n';
}

}  // namespace facecycle::log
