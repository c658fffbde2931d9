#pragma once

#include <spdlog/spdlog.h>

namespace unimatch {

/// Library logger; writes to standard error so standard output stays free
/// for machine-readable summaries.
spdlog::logger& log();

} // namespace unimatch
