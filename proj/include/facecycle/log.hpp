#pragma once

#include <sstream>
#include <string>
#include <string_view>

namespace facecycle::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

void set_level(Level level);
Level level();
/// Accepts debug|info|warn|error|off. Throws ConfigError otherwise.
Level parse_level(std::string_view name);
void write(Level level, std::string_view message);

template <typename... Args>
void emit(Level lvl, const Args&... args) {
    if (lvl < level()) return;
    std::ostringstream os;
    (os << ... << args);
    write(lvl, os.str());
}

template <typename... Args> void debug(const Args&... a) { emit(Level::debug, a...); }
template <typename... Args> void info(const Args&... a) { emit(Level::info, a...); }
template <typename... Args> void warn(const Args&... a) { emit(Level::warn, a...); }
template <typename... Args> void error(const Args&... a) { emit(Level::error, a...); }

}  // namespace facecycle::log
