#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace panoptic::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

/// Log level from PANOPTIC_LOG (error|warn|info|debug); default warn.
inline Level level() {
    static const Level lvl = [] {
        const char* env = std::getenv("PANOPTIC_LOG");
        if (env == nullptr) return Level::warn;
        const std::string_view v(env);
        if (v == "error") return Level::error;
        if (v == "info") return Level::info;
        if (v == "debug") return Level::debug;
        return Level::warn;
    }();
    return lvl;
}

inline void write(Level lvl, std::string_view tag, const std::string& msg) {
    if (lvl <= level()) std::cerr << "[" << tag << "] " << msg << "\n";
}

inline void error(const std::string& msg) { write(Level::error, "error", msg); }
inline void warn(const std::string& msg) { write(Level::warn, "warn", msg); }
inline void info(const std::string& msg) { write(Level::info, "info", msg); }
inline void debug(const std::string& msg) { write(Level::debug, "debug", msg); }

} // namespace panoptic::log
