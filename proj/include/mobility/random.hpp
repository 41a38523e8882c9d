#ifndef MOBILITY_RANDOM_HPP
#define MOBILITY_RANDOM_HPP

#include <cstdint>
#include <cmath>
#include <random>

namespace mobility {

/// SplitMix64 finalizer. Used to derive independent stream seeds from a
/// master seed and a counter.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of stream `stream` under `master`. Streams are addressed by counter,
/// so the same (master, stream) always yields the same generator regardless
/// of which thread consumes it.
constexpr std::uint64_t stream_seed(std::uint64_t master, std::uint64_t stream) noexcept
{
    return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Well-known stage tags for splitting the pipeline's master seed.
enum class SeedStage : std::uint64_t {
    synth = 1,
    calibrate = 2,
    decompose = 3,
    init = 4,
};

constexpr std::uint64_t stage_seed(std::uint64_t master, SeedStage stage) noexcept
{
    return stream_seed(master, static_cast<std::uint64_t>(stage));
}

/// Standard normal draws by the polar method on top of mt19937_64. Written
/// out here so streams are identical across standard library vendors.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

    double operator()()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double scale = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * scale;
        has_spare_ = true;
        return u * scale;
    }

    /// Uniform on [0, 1) with 53 bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace mobility

#endif // MOBILITY_RANDOM_HPP
