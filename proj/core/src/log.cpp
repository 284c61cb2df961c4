// SPDX-License-Identifier: Apache-2.0
#include "log.hpp"

#include <spdlog/sinks/stdout_sinks.h>

#include <cstdlib>
#include <memory>
#include <string>

namespace coslearn::detail {

spdlog::logger& log() {
  static const std::shared_ptr<spdlog::logger> logger = [] {
    auto l = std::make_shared<spdlog::logger>("coslearn",
                                              std::make_shared<spdlog::sinks::stderr_sink_mt>());
    l->set_pattern("[%l] %v");
    spdlog::level::level_enum level = spdlog::level::warn;
    if (const char* env = std::getenv("COSLEARN_LOG"); env != nullptr && *env != '\0') {
      level = spdlog::level::from_str(env);
    }
    l->set_level(level);
    return l;
  }();
  return *logger;
}

}  // namespace coslearn::detail
