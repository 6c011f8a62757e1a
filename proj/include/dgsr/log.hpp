#ifndef DGSR_LOG_HPP
#define DGSR_LOG_HPP

#include <functional>
#include <string>

namespace dgsr {

enum class LogLevel { debug, info, warning, error };

using LogSink = std::function<void(LogLevel, const std::string&)>;

/// Replaces the process-wide sink (default: stderr for warning and above,
/// stdout for info). Returns the previous sink.
LogSink set_log_sink(LogSink sink);
void log(LogLevel level, const std::string& message);

inline void log_info(const std::string& m) { log(LogLevel::info, m); }
inline void log_warning(const std::string& m) { log(LogLevel::warning, m); }

}  // namespace dgsr

#endif  // DGSR_LOG_HPP
