#ifndef COOC_ATLAS_RNG_HPP
#define COOC_ATLAS_RNG_HPP

#include <cstdint>
#include <random>

namespace cooc_atlas {

// mt19937_64 with fixed uniform/normal transforms. The std distributions are
// implementation-defined, so we do our own to keep fixtures portable.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; the second variate is cached.
    double normal();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0;
};

}

#endif
