#pragma once

#include <string>

namespace dicomo::log {

void info(const std::string& msg);
void warn(const std::string& msg);
void error(const std::string& msg);
/// "debug", "info", "warn", "error" or "off".
void set_level(const std::string& level);

}  // namespace dicomo::log
