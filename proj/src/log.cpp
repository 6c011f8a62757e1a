#include "dgsr/log.hpp"

#include <iostream>
#include <mutex>

namespace dgsr {

namespace {

std::mutex g_mutex;

void default_sink(LogLevel level, const std::string& message) {
  switch (level) {
    case LogLevel::debug:
      break;
    case LogLevel::info:
      std::cout << message << '\n';
      break;
    case LogLevel::warning:
      std::cerr << "warning: " << message << '\n';
      break;
    case LogLevel::error:
      std::cerr << "error: " << message << '\n';
      break;
  }
}

LogSink& sink() {
  static LogSink s = default_sink;
  return s;
}

}  // namespace

LogSink set_log_sink(LogSink s) {
  std::lock_guard lock(g_mutex);
  auto previous = std::move(sink());
  sink() = s ? std::move(s) : LogSink(default_sink);
  return previous;
}

void log(LogLevel level, const std::string& message) {
  std::lock_guard lock(g_mutex);
  sink()(level, message);
}

}  // namespace dgsr
