#pragma once

#include <spdlog/spdlog.h>

namespace solo {

/// Configure spdlog from the SOLO_LOG env var
/// (trace|debug|info|warn|error|off; default info). Safe to call repeatedly.
void init_logging();

}  // namespace solo
