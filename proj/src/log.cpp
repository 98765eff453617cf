#include "deanet/log.hpp"

#include <iostream>

namespace deanet::log {
namespace {
Level g_level = Level::warn;

void emit(Level at, const char* tag, std::string_view message) {
  if (static_cast<int>(at) <= static_cast<int>(g_level)) std::cerr << "[" << tag << "] " << message << '\n';
}
}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void warn(std::string_view message) { emit(Level::warn, "warn", message); }
void info(std::string_view message) { emit(Level::info, "info", message); }
void debug(std::string_view message) { emit(Level::debug, "debug", message); }

}  // namespace deanet::log
