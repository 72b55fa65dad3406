#include <riskshare/rng.hpp>

namespace riskshare {

std::uint64_t mix64(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t CounterRng::bits(std::uint64_t stream, std::uint64_t counter) const {
    std::uint64_t key = mix64(seed_ ^ mix64(stream * 0xD1B54A32D192ED03ULL + 0x632BE59BD9B4E019ULL));
    return mix64(mix64(key + counter * 0x9E3779B97F4A7C15ULL) ^ key);
}

double CounterRng::uniform(std::uint64_t stream, std::uint64_t counter) const {
    const std::uint64_t b = bits(stream, counter) >> 11;
    return (static_cast<double>(b) + 0.5) * 0x1.0p-53;
}

} // namespace riskshare
