#pragma once

#include <cstdint>
#include <random>

namespace rmna {

// Deterministic random source. All sampling goes through explicit methods
// instead of std distributions so that results are identical across
// standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    bool coin() { return (next_u64() >> 32) & 1u; }

    // Uniform integer in [0, n). n must be > 0.
    uint32_t uniform_u32(uint32_t n) {
        // rejection sampling on the top 32 bits to avoid modulo bias
        const uint64_t limit = (0x100000000ULL / n) * n;
        for (;;) {
            uint64_t x = next_u64() >> 32;
            if (x < limit) return static_cast<uint32_t>(x % n);
        }
    }

    // Uniform float in [0, 1) built from 24 mantissa bits.
    float uniform_float() {
        return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f);
    }

    float uniform_range(float lo, float hi) {
        return lo + (hi - lo) * uniform_float();
    }

    // Derive an independent stream seed from two values (splitmix64 finalizer).
    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static uint64_t mix(uint64_t a, uint64_t b, uint64_t c) {
        return mix(mix(a, b), c);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace rmna
