#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace hmmseq {

// 64-bit FNV-1a. Used wherever a stable (platform independent) hash is
// needed: RNG substreams and config fingerprints.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Seed for a per-chromosome substream.
std::uint64_t substream_seed(std::uint64_t seed, std::string_view stream_id) noexcept;

// Thin wrapper over mt19937_64 with the draws the sampler and simulator need.
// One instance per chain; never shared between threads.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform();                                // (0, 1)
    double normal(double mean = 0.0, double sd = 1.0);
    double gamma(double shape, double scale);
    double inverse_gamma(double shape, double scale); // density ∝ x^{-shape-1} e^{-scale/x}
    std::int64_t poisson(double mean);
    std::size_t categorical(std::span<const double> probs);
    std::vector<double> dirichlet(std::span<const double> alpha);

    // Normal(mean, sd^2) restricted to [lower, +inf).
    double normal_truncated_below(double mean, double sd, double lower);
    // Normal(mean, sd^2) restricted to (-inf, upper].
    double normal_truncated_above(double mean, double sd, double upper);

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace hmmseq
