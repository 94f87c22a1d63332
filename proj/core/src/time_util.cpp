#include "parkvision/time_util.hpp"

#include <ctime>

#include <fmt/format.h>

#include "parkvision/errors.hpp"

namespace pv {

const char* to_string(FetchError::Kind kind) noexcept {
  switch (kind) {
    case FetchError::Kind::kTimeout:
      return "timeout";
    case FetchError::Kind::kConnection:
      return "connection";
    case FetchError::Kind::kHttpStatus:
      return "http_status";
    case FetchError::Kind::kDecode:
      return "decode";
    case FetchError::Kind::kInvalidUrl:
      return "invalid_url";
  }
  return "unknown";
}

std::int64_t to_unix_millis(Timestamp t) noexcept {
  return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

Timestamp from_unix_millis(std::int64_t ms) noexcept {
  return Timestamp(std::chrono::duration_cast<Clock::duration>(std::chrono::milliseconds(ms)));
}

std::string to_rfc3339(Timestamp t) {
  const std::int64_t ms = to_unix_millis(t);
  std::int64_t secs = ms / 1000;
  std::int64_t frac = ms % 1000;
  if (frac < 0) {
    frac += 1000;
    --secs;
  }
  const std::time_t tt = static_cast<std::time_t>(secs);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}.{:03d}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                     tm.tm_hour, tm.tm_min, tm.tm_sec, frac);
}

}  // namespace pv
