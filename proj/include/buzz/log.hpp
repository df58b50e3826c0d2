#pragma once

#include <functional>
#include <string>

namespace buzz {

enum class LogLevel { Debug, Info, Warn, Error };

using LogSink = std::function<void(LogLevel, const std::string&)>;

// Replaces the process-wide sink; passing nullptr restores the stderr default.
void set_log_sink(LogSink sink);
void log(LogLevel level, const std::string& message);

inline void log_warn(const std::string& message) { log(LogLevel::Warn, message); }
inline void log_info(const std::string& message) { log(LogLevel::Info, message); }

}  // namespace buzz
