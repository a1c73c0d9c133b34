#pragma once

#include <string>

namespace relmm::logging {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

// Controlled by RELMM_LOG_LEVEL (error|warn|info|debug), read once.
Level level();
void write(Level lvl, const std::string& msg);

inline void error(const std::string& m) { write(Level::error, m); }
inline void warn(const std::string& m) { write(Level::warn, m); }
inline void info(const std::string& m) { write(Level::info, m); }
inline void debug(const std::string& m) { write(Level::debug, m); }

}  // namespace relmm::logging
