#include "censura/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace censura::log {
namespace {

std::atomic<Level> g_level{Level::warning};
std::mutex g_mutex;

void emit(Level lvl, const char* tag, std::string_view msg) {
  if (lvl < g_level.load(std::memory_order_relaxed)) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "[censura] " << tag << ": " << msg << '\n';
}

}  // namespace

void set_level(Level lvl) { g_level.store(lvl, std::memory_order_relaxed); }
Level level() { return g_level.load(std::memory_order_relaxed); }

void debug(std::string_view msg) { emit(Level::debug, "debug", msg); }
void info(std::string_view msg) { emit(Level::info, "info", msg); }
void warning(std::string_view msg) { emit(Level::warning, "warning", msg); }
void error(std::string_view msg) { emit(Level::error, "error", msg); }

}  // namespace censura::log
