#include "relmm/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>

namespace relmm::logging {

Level level() {
    static const Level lvl = [] {
        const char* env = std::getenv("RELMM_LOG_LEVEL");
        if (!env) return Level::info;
        if (!std::strcmp(env, "error")) return Level::error;
        if (!std::strcmp(env, "warn")) return Level::warn;
        if (!std::strcmp(env, "debug")) return Level::debug;
        return Level::info;
    }();
    return lvl;
}

void write(Level lvl, const std::string& msg) {
    if (static_cast<int>(lvl) > static_cast<int>(level())) return;
    static std::mutex mu;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::lock_guard<std::mutex> lock(mu);
    std::fprintf(stderr, "[relmm:%s] %s\n", names[static_cast<int>(lvl)], msg.c_str());
}

}  // namespace relmm::logging
