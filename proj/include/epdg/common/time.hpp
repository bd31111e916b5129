// time.hpp

#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace epdg {

using SystemTime = std::chrono::system_clock::time_point;

// ISO-8601 UTC with millisecond precision, e.g. 2024-02-13T09:30:00.000Z
std::string iso8601(SystemTime t);

// parses the format produced by iso8601 (fractional part optional)
SystemTime parse_iso8601(std::string_view s);

// Wall clock used for record timestamps. A pinned clock makes command output
// reproducible byte-for-byte.
class Clock {
public:
    Clock() = default;
    explicit Clock(SystemTime fixed) : fixed_(fixed) {}

    SystemTime now() const { return fixed_ ? *fixed_ : std::chrono::system_clock::now(); }
    bool pinned() const { return fixed_.has_value(); }

private:
    std::optional<SystemTime> fixed_;
};

}  // namespace epdg
