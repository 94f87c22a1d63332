#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <string>

namespace pv {

using Clock = std::chrono::system_clock;
using Timestamp = Clock::time_point;
// Injectable wall clock; tests substitute a manual one.
using NowFn = std::function<Timestamp()>;

std::int64_t to_unix_millis(Timestamp t) noexcept;
Timestamp from_unix_millis(std::int64_t ms) noexcept;

// UTC, millisecond precision: 2024-01-15T08:30:00.000Z
std::string to_rfc3339(Timestamp t);

}  // namespace pv
