#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace neuronal {

// splitmix64. The state advances by a fixed odd constant, so draw i is a
// pure function of (seed, i): the sequence is identical on every platform
// and independent of how many values were drawn in one go.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 significant bits.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

private:
    std::uint64_t state_;
};

// Standard normals via Box-Muller over splitmix64 uniforms. Each pair of
// uniforms (u1 in (0,1], u2 in [0,1)) yields
//   r = sqrt(-2 ln u1),  z0 = r cos(2 pi u2),  z1 = r sin(2 pi u2);
// z1 is buffered and returned on the next call.
class NormalSampler {
public:
    explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - rng_.next_unit();
        const double u2 = rng_.next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    SplitMix64 rng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace neuronal
