#include "cooctex/log.hpp"

#include <spdlog/spdlog.h>

namespace cooctex::log {

void info(std::string_view message) { spdlog::info("{}", message); }
void warn(std::string_view message) { spdlog::warn("{}", message); }
void debug(std::string_view message) { spdlog::debug("{}", message); }

void set_level(Level level) {
  switch (level) {
    case Level::kDebug: spdlog::set_level(spdlog::level::debug); break;
    case Level::kInfo: spdlog::set_level(spdlog::level::info); break;
    case Level::kWarn: spdlog::set_level(spdlog::level::warn); break;
  }
}

}  // namespace cooctex::log
