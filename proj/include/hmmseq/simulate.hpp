#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "hmmseq/hmm_core.hpp"
#include "hmmseq/ingest.hpp"
#include "hmmseq/rng.hpp"
#include "hmmseq/sampler.hpp"

namespace hmmseq {

enum class NoiseKind { Poisson, NegBinomial };

// Generation design. Defaults reproduce the published simulation parameters
// for beta (mu, sigma^2, A, P) and delta (phi, tau^2, B, Q).
struct SimSpec {
    int chromosomes = 12;
    int genes_per_chromosome = 800;
    int replicates = 6;                 // per treatment
    ModelChoice truth = ModelChoice::HH;

    std::vector<Emission> beta_emissions{{1.0, 0.37}, {3.91, 2.4}};
    std::vector<std::vector<double>> beta_trans{{0.50, 0.50}, {0.05, 0.95}};
    std::vector<double> beta_weights{0.1, 0.9};

    std::vector<Emission> delta_emissions{{-0.4, 0.013}, {0.0, 0.01}, {0.4, 0.013}};
    std::vector<std::vector<double>> delta_trans{{0.50, 0.25, 0.25}, {0.10, 0.80, 0.10}, {0.25, 0.25, 0.50}};
    std::vector<double> delta_weights{0.22, 0.56, 0.22};

    std::vector<double> rho;            // per library (treatment 1 first); empty means all zero

    NoiseKind noise = NoiseKind::Poisson;
    double nb_shape = 2.0;              // gamma law of per-gene dispersion zeta
    double nb_scale = 0.1;

    bool paired = false;                // replicate k of both treatments is subject k
    double sigma_eps2 = 0.0;

    std::uint64_t seed = 1;

    static SimSpec full_scale();        // 12 x 800 genes, 6 + 6 replicates
    static SimSpec desk_scale();        // 2 x 200 genes, 6 + 6 replicates

    StateModel beta_model() const;
    StateModel delta_model() const;
    std::size_t n_libraries() const { return 2 * static_cast<std::size_t>(replicates); }
    void validate() const;
};

struct SimTruth {
    std::vector<GeneMeta> genes;
    StateSequence s;                    // 0-based
    StateSequence h;                    // 0-based; DE when h != 1
    std::vector<double> beta;
    std::vector<double> delta;
    std::vector<double> zeta;           // NB dispersion; 0 for Poisson
    std::vector<double> eps;            // genes x subjects when paired
    std::vector<bool> de;
};

struct SimDataset {
    CountMatrix counts;
    SimTruth truth;
};

StateSequence simulate_states(const StateModel& model, std::size_t n, Rng& rng);

SimDataset simulate_poisson_dataset(const SimSpec& spec);
SimDataset simulate_negbin_dataset(const SimSpec& spec);
SimDataset simulate_dataset(const SimSpec& spec);

// Poisson-gamma mixture with mean `mean` and dispersion zeta (r = 1/zeta).
std::int64_t draw_negbin(double mean, double zeta, Rng& rng);

struct GammaFit {
    double shape = 0.0;
    double scale = 0.0;
};
// Method-of-moments gamma fit: shape = mean^2/var, scale = var/mean.
GammaFit fit_dispersion_gamma(std::span<const double> dispersions);

// gene_id, s, h, beta, delta, zeta, de (states 1-based).
void write_truth(std::ostream& out, const SimTruth& truth);
// gene_id -> de flag, in file order.
std::vector<std::pair<std::string, bool>> read_truth_de(std::istream& in);

} // namespace hmmseq
