#include "solo/log.hpp"

#include <cstdlib>
#include <string>

namespace solo {

void init_logging() {
  spdlog::set_pattern("[%^%l%$] %v");
  const char* env = std::getenv("SOLO_LOG");
  if (env == nullptr) {
    spdlog::set_level(spdlog::level::info);
    return;
  }
  const std::string level = env;
  if (level == "trace") spdlog::set_level(spdlog::level::trace);
  else if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else if (level == "info") spdlog::set_level(spdlog::level::info);
  else if (level == "warn") spdlog::set_level(spdlog::level::warn);
  else if (level == "error") spdlog::set_level(spdlog::level::err);
  else if (level == "off") spdlog::set_level(spdlog::level::off);
  else spdlog::set_level(spdlog::level::info);
}

}  // namespace solo
