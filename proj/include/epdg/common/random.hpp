// random.hpp
//
// randomness sources; every component that needs randomness takes one
// explicitly so tests and simulations can pin it with a seed

#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "epdg/common/bytes.hpp"

namespace epdg {

class RandomSource {
public:
    virtual ~RandomSource() = default;
    virtual void fill(std::span<std::uint8_t> out) = 0;

    Bytes bytes(std::size_t n) {
        Bytes b(n);
        fill(b);
        return b;
    }

    // uniform in [0, bound)
    std::uint64_t uniform(std::uint64_t bound);
};

// OpenSSL CSPRNG
class SystemRandom final : public RandomSource {
public:
    void fill(std::span<std::uint8_t> out) override;
};

// deterministic; for tests, simulations and static-key emulation only
class SeededRandom final : public RandomSource {
public:
    explicit SeededRandom(std::uint64_t seed) : engine_(seed) {}
    void fill(std::span<std::uint8_t> out) override;

private:
    std::mt19937_64 engine_;
};

}  // namespace epdg
