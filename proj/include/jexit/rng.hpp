#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace jexit {

// Philox4x32-10 counter-based generator (Salmon et al., SC 2011).
// A block is a pure function of (counter, key), which is what makes the
// per-trial streams splittable and the path noise addressable by time slot.
namespace philox {

inline constexpr std::uint32_t kWeylA = 0x9E3779B9u;
inline constexpr std::uint32_t kWeylB = 0xBB67AE85u;
inline constexpr std::uint32_t kMultA = 0xD2511F53u;
inline constexpr std::uint32_t kMultB = 0xCD9E8D57u;

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline void round_once(Counter& ctr, const Key& key) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMultA) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMultB) * ctr[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

inline Counter block(Counter ctr, Key key) {
    for (int r = 0; r < 10; ++r) {
        round_once(ctr, key);
        key[0] += kWeylA;
        key[1] += kWeylB;
    }
    return ctr;
}

}  // namespace philox

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// One independent stream per (master_seed, stream_id). Draws come in two
// address spaces: a sequential one for setup draws (initial condition,
// theory sampling) and a slot-indexed one for path noise, where the draw is
// a pure function of the time slot. Slot addressing is what lets two runs
// with different step cadences consume the identical underlying noise.
class RngStream {
  public:
    RngStream(std::uint64_t master_seed, std::uint64_t stream_id) {
        const std::uint64_t mixed =
            splitmix64(splitmix64(master_seed) ^ splitmix64(stream_id + 0x632BE59BD9B4E019ull));
        key_ = {static_cast<std::uint32_t>(mixed), static_cast<std::uint32_t>(mixed >> 32)};
        seed_ = mixed;
    }

    // Derived per-stream seed, recorded in trial output.
    std::uint64_t stream_seed() const { return seed_; }

    // --- sequential domain -------------------------------------------------

    std::uint64_t next_u64() {
        if (seq_have_half_) {
            seq_have_half_ = false;
            return seq_spare_;
        }
        const philox::Counter out = block_at(kDomainSequential, seq_block_++, 0);
        seq_spare_ = join(out[2], out[3]);
        seq_have_half_ = true;
        return join(out[0], out[1]);
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double z0, z1;
        box_muller(next_u64(), next_u64(), z0, z1);
        spare_ = z1;
        have_spare_ = true;
        return z0;
    }

    // --- slot-indexed domain -----------------------------------------------

    // Fill n standard normals addressed by (slot, 0..n-1). Stateless: the
    // same (stream, slot) always yields the same numbers.
    void slot_gaussians(std::uint64_t slot, double* out, int n) const {
        int produced = 0;
        std::uint32_t sub = 0;
        while (produced < n) {
            const philox::Counter words = block_at(kDomainPath, slot, sub++);
            double z0, z1;
            box_muller(join(words[0], words[1]), join(words[2], words[3]), z0, z1);
            out[produced++] = z0;
            if (produced < n) out[produced++] = z1;
        }
    }

  private:
    static constexpr std::uint32_t kDomainSequential = 0;
    static constexpr std::uint32_t kDomainPath = 1;

    philox::Counter block_at(std::uint32_t domain, std::uint64_t index, std::uint32_t sub) const {
        return philox::block({sub, static_cast<std::uint32_t>(index),
                              static_cast<std::uint32_t>(index >> 32), domain},
                             key_);
    }

    static std::uint64_t join(std::uint32_t lo, std::uint32_t hi) {
        return static_cast<std::uint64_t>(hi) << 32 | lo;
    }

    // u1 in (0,1] so the log is always finite.
    static void box_muller(std::uint64_t w1, std::uint64_t w2, double& z0, double& z1) {
        const double u1 = (static_cast<double>(w1 >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = static_cast<double>(w2 >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925287 * u2;
        z0 = r * std::cos(a);
        z1 = r * std::sin(a);
    }

    philox::Key key_;
    std::uint64_t seed_ = 0;
    std::uint64_t seq_block_ = 0;
    std::uint64_t seq_spare_ = 0;
    bool seq_have_half_ = false;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace jexit
