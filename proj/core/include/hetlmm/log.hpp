#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace hetlmm::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

using Sink = std::function<void(Level, std::string_view)>;

void set_level(Level level);
Level level();

/// Replace the output sink (default writes to stderr). Returns the previous sink.
Sink set_sink(Sink sink);

void write(Level level, std::string_view message);

inline void debug(std::string_view m) { write(Level::debug, m); }
inline void info(std::string_view m) { write(Level::info, m); }
inline void warn(std::string_view m) { write(Level::warn, m); }
inline void error(std::string_view m) { write(Level::error, m); }

}  // namespace hetlmm::log
