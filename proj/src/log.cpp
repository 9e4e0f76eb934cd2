#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "unbflow/cli.hpp"

namespace unbflow {

void init_logging() {
  static bool done = false;
  if (!done) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("unbflow"));
    done = true;
  }
  const char* env = std::getenv("UNBFLOW_LOG");
  auto level = spdlog::level::warn;
  if (env != nullptr) {
    const auto parsed = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only accept real names.
    if (parsed != spdlog::level::off || std::string(env) == "off") level = parsed;
  }
  spdlog::set_level(level);
}

}  // namespace unbflow
