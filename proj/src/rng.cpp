#include "hmmseq/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace hmmseq {

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t substream_seed(std::uint64_t seed, std::string_view stream_id) noexcept {
    return splitmix64(seed ^ fnv1a64(stream_id));
}

double Rng::uniform() {
    // 53 random bits, shifted off zero
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal(double mean, double sd) {
    std::normal_distribution<double> d(mean, sd);
    return d(engine_);
}

double Rng::gamma(double shape, double scale) {
    std::gamma_distribution<double> d(shape, scale);
    return d(engine_);
}

double Rng::inverse_gamma(double shape, double scale) {
    return 1.0 / gamma(shape, 1.0 / scale);
}

std::int64_t Rng::poisson(double mean) {
    if (mean <= 0.0) return 0;
    std::poisson_distribution<std::int64_t> d(mean);
    return d(engine_);
}

std::size_t Rng::categorical(std::span<const double> probs) {
    double total = 0.0;
    for (double p : probs) total += p;
    double u = uniform() * total;
    for (std::size_t t = 0; t < probs.size(); ++t) {
        if (u < probs[t]) return t;
        u -= probs[t];
    }
    // rounding: fall back to the last state with positive mass
    for (std::size_t t = probs.size(); t-- > 0;)
        if (probs[t] > 0.0) return t;
    throw std::invalid_argument("categorical: all probabilities are zero");
}

std::vector<double> Rng::dirichlet(std::span<const double> alpha) {
    std::vector<double> out(alpha.size());
    double total = 0.0;
    for (std::size_t t = 0; t < alpha.size(); ++t) {
        out[t] = gamma(alpha[t], 1.0);
        total += out[t];
    }
    if (total <= 0.0) {
        // every gamma underflowed; only possible for minuscule concentrations
        out.assign(alpha.size(), 0.0);
        out[categorical(alpha)] = 1.0;
        return out;
    }
    for (double& x : out) x /= total;
    return out;
}

double Rng::normal_truncated_below(double mean, double sd, double lower) {
    const double a = (lower - mean) / sd;
    if (a <= 0.5) {
        // plain rejection accepts with probability >= 0.31
        for (;;) {
            const double x = normal();
            if (x >= a) return mean + sd * x;
        }
    }
    // Robert (1995) translated-exponential proposal
    const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
    for (;;) {
        const double x = a - std::log(uniform()) / rate;
        const double log_accept = -0.5 * (x - rate) * (x - rate);
        if (std::log(uniform()) <= log_accept) return mean + sd * x;
    }
}

double Rng::normal_truncated_above(double mean, double sd, double upper) {
    return -normal_truncated_below(-mean, sd, -upper);
}

} // namespace hmmseq
