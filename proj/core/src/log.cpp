#include "hetlmm/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace hetlmm::log {
namespace {

std::atomic<Level> g_level{Level::warn};
std::mutex g_mutex;

const char* tag(Level level) {
  switch (level) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
    default: return "";
  }
}

Sink& sink_ref() {
  static Sink sink = [](Level level, std::string_view message) {
    std::cerr << "[hetlmm " << tag(level) << "] " << message << '\n';
  };
  return sink;
}

}  // namespace

void set_level(Level level) { g_level.store(level); }

Level level() { return g_level.load(); }

Sink set_sink(Sink sink) {
  std::lock_guard lock(g_mutex);
  Sink previous = std::move(sink_ref());
  sink_ref() = std::move(sink);
  return previous;
}

void write(Level lvl, std::string_view message) {
  if (lvl < g_level.load()) return;
  std::lock_guard lock(g_mutex);
  if (sink_ref()) sink_ref()(lvl, message);
}

}  // namespace hetlmm::log
