#pragma once

#include <string_view>

namespace cooctex::log {

// String-only logging entry points. Translation units that include libtorch
// cannot include spdlog (the two bundle incompatible fmt versions), so they
// log through these.
void info(std::string_view message);
void warn(std::string_view message);
void debug(std::string_view message);

enum class Level { kDebug, kInfo, kWarn };
void set_level(Level level);

}  // namespace cooctex::log
