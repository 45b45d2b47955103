#pragma once

#include <cstdint>
#include <optional>

namespace drnet {

// Named substreams fanned out from a single run seed.
enum class Stream : std::uint64_t {
    weights = 1,
    data = 2,
    sampling = 3,
    shuffle = 4,
    clustering = 5,
};

// splitmix64 stream. Box-Muller normals, Marsaglia-Tsang gamma.
// Single owner: never share one instance across threads.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream_id = 0);
    Rng(std::uint64_t seed, Stream stream) : Rng(seed, static_cast<std::uint64_t>(stream)) {}

    std::uint64_t next_u64();
    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);
    double normal();
    double normal(double mean, double std) { return mean + std * normal(); }
    // Gamma(shape, scale=1); shape >= 1.
    double gamma(double shape);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t state_;
    std::optional<double> spare_normal_;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace drnet
