#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace relmm {

// Deterministic random stream with fully serializable state.
//
// The engine is std::mt19937_64 (state is standard-defined, so replay is
// portable). Distributions are implemented here rather than with
// <random>'s distribution objects because those may carry unspecified
// hidden state, which would break bit-exact checkpoint resume.
class RngStream {
public:
    RngStream() : RngStream(0, "default") {}
    RngStream(uint64_t master_seed, const std::string& name);

    // [0, 1)
    double uniform();
    // [lo, hi)
    double uniform(double lo, double hi);
    // {0, 1, ..., n-1}, unbiased
    uint64_t uniform_index(uint64_t n);
    // standard normal, Box-Muller with explicit cached spare
    double normal();
    bool coin(double p_true);
    uint64_t raw() { return engine_(); }

    // Whitespace-separated decimal engine state plus the Box-Muller cache.
    std::string serialize() const;
    static RngStream deserialize(const std::string& text);

    bool operator==(const RngStream& o) const;

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Stable 64-bit hash used to derive per-stream seeds from (master, name).
uint64_t fnv1a64(const std::string& s);

}  // namespace relmm
