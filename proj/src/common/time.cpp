#include "epdg/common/time.hpp"

#include <cctype>
#include <cstdio>
#include <ctime>

#include "epdg/common/errors.hpp"

namespace epdg {

std::string iso8601(SystemTime t) {
    using namespace std::chrono;
    const auto ms = duration_cast<milliseconds>(t.time_since_epoch()).count();
    std::time_t secs = static_cast<std::time_t>(ms / 1000);
    int frac = static_cast<int>(ms % 1000);
    if (frac < 0) {
        frac += 1000;
        --secs;
    }
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, frac);
    return buf;
}

SystemTime parse_iso8601(std::string_view s) {
    std::tm tm{};
    int frac = 0;
    std::string str(s);
    int n = std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d", &tm.tm_year, &tm.tm_mon,
                        &tm.tm_mday, &tm.tm_hour, &tm.tm_min, &tm.tm_sec);
    if (n != 6) throw FormatError("bad ISO-8601 timestamp: " + str);
    auto dot = str.find('.');
    if (dot != std::string::npos) {
        std::string digits;
        for (std::size_t i = dot + 1; i < str.size() && std::isdigit(static_cast<unsigned char>(str[i])); ++i)
            digits.push_back(str[i]);
        digits.resize(3, '0');
        frac = std::stoi(digits);
    }
    tm.tm_year -= 1900;
    tm.tm_mon -= 1;
    const std::time_t secs = timegm(&tm);
    return SystemTime{std::chrono::seconds(secs)} + std::chrono::milliseconds(frac);
}

}  // namespace epdg
