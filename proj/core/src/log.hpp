// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <spdlog/spdlog.h>

namespace coslearn::detail {

/// Shared stderr logger. Level comes from COSLEARN_LOG (trace, debug, info,
/// warn, error, off); default warn.
spdlog::logger& log();

}  // namespace coslearn::detail
