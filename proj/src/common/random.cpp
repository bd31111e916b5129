#include "epdg/common/random.hpp"

#include <openssl/rand.h>

#include <limits>

#include "epdg/common/errors.hpp"

namespace epdg {

std::uint64_t RandomSource::uniform(std::uint64_t bound) {
    if (bound <= 1) return 0;
    // rejection sampling to avoid modulo bias
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    for (;;) {
        std::uint8_t buf[8];
        fill(buf);
        std::uint64_t v = 0;
        for (auto b : buf) v = (v << 8) | b;
        if (v < limit) return v % bound;
    }
}

void SystemRandom::fill(std::span<std::uint8_t> out) {
    if (out.empty()) return;
    if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
        throw Error("system random source failed");
    }
}

void SeededRandom::fill(std::span<std::uint8_t> out) {
    std::size_t i = 0;
    while (i < out.size()) {
        std::uint64_t v = engine_();
        for (int k = 0; k < 8 && i < out.size(); ++k, ++i) {
            out[i] = static_cast<std::uint8_t>(v >> (8 * k));
        }
    }
}

}  // namespace epdg
