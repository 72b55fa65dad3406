#pragma once

#include <cstdint>

namespace riskshare {

// Stateless generator: every draw is a pure function of (seed, stream, counter),
// so rows can be produced in any order or in parallel.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t bits(std::uint64_t stream, std::uint64_t counter) const;

    // Uniform on the open interval (0,1).
    double uniform(std::uint64_t stream, std::uint64_t counter) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
};

std::uint64_t mix64(std::uint64_t x);

} // namespace riskshare
