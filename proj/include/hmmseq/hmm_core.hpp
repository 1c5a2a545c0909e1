#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmmseq/rng.hpp"

namespace hmmseq {

enum class StateModelKind { FMM, HMM };

struct Emission {
    double mean = 0.0;
    double var = 1.0;
};

// Latent-state law over m in {2, 3} states. States are 0-based in memory;
// files and reports use 1-based labels.
struct StateModel {
    StateModelKind kind = StateModelKind::FMM;
    std::vector<double> weights;              // FMM: length m
    std::vector<std::vector<double>> trans;   // HMM: m x m row-stochastic
    std::vector<Emission> emissions;          // per state

    std::size_t n_states() const noexcept { return emissions.size(); }

    static StateModel mixture(std::vector<double> weights, std::vector<Emission> emissions);
    static StateModel markov(std::vector<std::vector<double>> trans, std::vector<Emission> emissions);

    // Throws std::invalid_argument when probabilities are off by more than 1e-12
    // or a variance is not positive.
    void validate() const;
};

using StateSequence = std::vector<int>;

// Stationary law of an irreducible aperiodic chain. Throws std::domain_error otherwise.
std::vector<double> stationary_distribution(const std::vector<std::vector<double>>& trans);

// P(state_i = t | all other states). `initial` is the HMM initial law
// (stationary distribution); the three-argument overload computes it.
std::vector<double> conditional_state_prior(const StateSequence& seq, std::size_t i, const StateModel& model,
                                            std::span<const double> initial);
std::vector<double> conditional_state_prior(const StateSequence& seq, std::size_t i, const StateModel& model);

double log_joint_states(const StateSequence& seq, const StateModel& model);

// One conjugate Dirichlet-multinomial draw of weights (FMM) or transition
// rows (HMM). `alpha` is the per-cell concentration; emissions are untouched.
StateModel update_state_model_params(const StateSequence& seq, const StateModel& model,
                                     std::span<const double> alpha, Rng& rng);

// Per-state occupancy counts and (HMM) transition counts.
std::vector<double> state_counts(const StateSequence& seq, std::size_t m);
std::vector<std::vector<double>> transition_counts(const StateSequence& seq, std::size_t m);

} // namespace hmmseq
