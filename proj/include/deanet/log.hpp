#pragma once

#include <string_view>

namespace deanet::log {

enum class Level { quiet = 0, warn = 1, info = 2, debug = 3 };

void set_level(Level level);
Level level();

// All log output goes to stderr; stdout is reserved for results.
void warn(std::string_view message);
void info(std::string_view message);
void debug(std::string_view message);

}  // namespace deanet::log
