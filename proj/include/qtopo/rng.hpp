#pragma once

#include <cstdint>
#include <random>

namespace qtopo {

// Stream tags keep substreams of one master seed apart.
enum class Stream : std::uint64_t {
    training = 1,
    testing = 2,
    prediction = 3,
    pca = 4,
    split = 5,
    translate = 16,
    rotate = 17,
    noise = 18,
    parameter = 19,
    init = 32,
    shuffle = 33,
    dropout = 34,
    model = 35,
    h_noise = 36,
};

std::uint64_t splitmix64(std::uint64_t& state);

// Mixes (master, stream, index) into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0);
inline std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
    return derive_seed(master, static_cast<std::uint64_t>(stream), index);
}

// mt19937_64 with portable transforms. The std distributions are
// implementation defined, so uniform and normal draws are written out here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }
    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n);
    // Standard normal via the Box-Muller transform.
    double normal();

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace qtopo
