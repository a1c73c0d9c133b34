#include "relmm/rng.hpp"

#include <bit>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace relmm {

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

RngStream::RngStream(uint64_t master_seed, const std::string& name) {
    std::seed_seq seq{static_cast<uint32_t>(master_seed), static_cast<uint32_t>(master_seed >> 32),
                      static_cast<uint32_t>(fnv1a64(name)), static_cast<uint32_t>(fnv1a64(name) >> 32)};
    engine_.seed(seq);
}

double RngStream::uniform() {
    // 53 high bits -> double in [0, 1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

uint64_t RngStream::uniform_index(uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
        v = engine_();
    } while (v >= limit);
    return v % n;
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1, u2;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    spare_ = mag * std::sin(two_pi * u2);
    has_spare_ = true;
    return mag * std::cos(two_pi * u2);
}

bool RngStream::coin(double p_true) { return uniform() < p_true; }

std::string RngStream::serialize() const {
    std::ostringstream os;
    os << engine_;
    os << " " << (has_spare_ ? 1 : 0) << " " << std::bit_cast<uint64_t>(spare_);
    return os.str();
}

RngStream RngStream::deserialize(const std::string& text) {
    RngStream r;
    std::istringstream is(text);
    is >> r.engine_;
    int has = 0;
    uint64_t bits = 0;
    is >> has >> bits;
    if (is.fail()) throw std::runtime_error("RngStream::deserialize: malformed state string");
    r.has_spare_ = has != 0;
    r.spare_ = std::bit_cast<double>(bits);
    return r;
}

bool RngStream::operator==(const RngStream& o) const {
    return engine_ == o.engine_ && has_spare_ == o.has_spare_ &&
           std::bit_cast<uint64_t>(spare_) == std::bit_cast<uint64_t>(o.spare_);
}

}  // namespace relmm
