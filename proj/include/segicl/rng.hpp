#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace segicl {

// Deterministic RNG built on mt19937_64, whose output sequence is pinned by
// the standard. The distributions are hand-rolled because libstdc++'s
// std::normal_distribution is not bit-stable across implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit mantissa.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] via rejection-free modulo over a widened
    // range; bias is < 2^-53 for the range sizes used here.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    // Standard normal via Box-Muller; caches the spare value.
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Serializable engine + spare state, for checkpointed training.
    std::string state() const;
    void set_state(const std::string& s);

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Derives an independent stream seed from (root, index) with splitmix64
// finalization, so corpus items / episodes / workers get decorrelated
// streams without sharing engine state.
std::uint64_t split_seed(std::uint64_t root, std::uint64_t index);

}  // namespace segicl
