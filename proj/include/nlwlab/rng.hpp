#ifndef NLWLAB_RNG_HPP
#define NLWLAB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <limits>

namespace nlwlab {

// Philox-4x32-10 counter-based generator. A stream is (key, counter); splitting
// a master seed into worker streams just assigns distinct key halves, so streams
// are reproducible and never overlap regardless of how many numbers each draws.
namespace philox {

struct Block {
    uint32_t x[4];
};

inline void round_once(uint32_t ctr[4], const uint32_t key[2]) {
    constexpr uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    const uint64_t p0 = static_cast<uint64_t>(M0) * ctr[0];
    const uint64_t p1 = static_cast<uint64_t>(M1) * ctr[2];
    const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
    const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
    uint32_t out[4];
    out[0] = hi1 ^ ctr[1] ^ key[0];
    out[1] = lo1;
    out[2] = hi0 ^ ctr[3] ^ key[1];
    out[3] = lo0;
    ctr[0] = out[0];
    ctr[1] = out[1];
    ctr[2] = out[2];
    ctr[3] = out[3];
}

inline Block generate(uint64_t key, uint64_t counter_hi, uint64_t counter_lo) {
    constexpr uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    uint32_t ctr[4] = {
        static_cast<uint32_t>(counter_lo), static_cast<uint32_t>(counter_lo >> 32),
        static_cast<uint32_t>(counter_hi), static_cast<uint32_t>(counter_hi >> 32)};
    uint32_t k[2] = {static_cast<uint32_t>(key), static_cast<uint32_t>(key >> 32)};
    for (int r = 0; r < 10; ++r) {
        round_once(ctr, k);
        k[0] += W0;
        k[1] += W1;
    }
    return Block{{ctr[0], ctr[1], ctr[2], ctr[3]}};
}

}  // namespace philox

// One logical random stream. Conforms to UniformRandomBitGenerator, but all
// sampling used by the lab goes through the explicit methods below so that
// results are bit-reproducible across platforms and standard libraries.
class RngStream {
public:
    using result_type = uint64_t;

    RngStream() = default;
    RngStream(uint64_t master_seed, uint64_t stream_id)
        : key_(master_seed), stream_(stream_id) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<uint64_t>::max(); }

    result_type operator()() { return next_u64(); }

    uint64_t next_u64() {
        if (avail_ == 0) refill();
        --avail_;
        const uint64_t lo = buf_.x[2 * avail_];
        const uint64_t hi = buf_.x[2 * avail_ + 1];
        return (hi << 32) | lo;
    }

    // uniform in (0, 1]; never returns 0 so log() is always safe
    double next_uniform() {
        const uint64_t u = next_u64();
        return (static_cast<double>(u >> 11) + 1.0) * 0x1.0p-53;
    }

    // standard normal via Box-Muller on the counter stream (deterministic
    // everywhere, unlike std::normal_distribution)
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    uint64_t stream_id() const { return stream_; }

private:
    void refill() {
        buf_ = philox::generate(key_, stream_, counter_++);
        avail_ = 2;
    }

    uint64_t key_ = 0;
    uint64_t stream_ = 0;
    uint64_t counter_ = 0;
    philox::Block buf_{};
    int avail_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Counter-based split: the stream id is the key-independent half of the Philox
// counter, so distinct indices give disjoint counter ranges by construction.
inline RngStream split_stream(uint64_t master_seed, uint64_t worker_index) {
    return RngStream(master_seed, worker_index);
}

}  // namespace nlwlab

#endif
