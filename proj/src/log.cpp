#include "log.hpp"

#include <spdlog/sinks/stdout_sinks.h>

namespace unimatch {

spdlog::logger& log()
{
    static auto logger = [] {
        auto l = spdlog::stderr_logger_mt("unimatch");
        l->set_pattern("[%l] %v");
        return l;
    }();
    return *logger;
}

} // namespace unimatch
