#pragma once

#include <string>

namespace spatialdr::log {

enum class Level { Quiet = 0, Warn = 1, Info = 2 };

void set_level(Level level);
Level level();

/// Messages go to stderr so stdout stays reserved for command summaries.
void warn(const std::string& message);
void info(const std::string& message);

}  // namespace spatialdr::log
