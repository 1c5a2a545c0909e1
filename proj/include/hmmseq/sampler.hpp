#pragma once

#include <array>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmmseq/hmm_core.hpp"
#include "hmmseq/ingest.hpp"
#include "hmmseq/rng.hpp"

namespace hmmseq {

struct ChainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// (beta-process, delta-process) pair: F = finite mixture, H = hidden Markov.
enum class ModelChoice { FF, FH, HF, HH };

inline constexpr std::array<ModelChoice, 4> kAllModels{ModelChoice::FF, ModelChoice::FH, ModelChoice::HF,
                                                       ModelChoice::HH};

std::string to_string(ModelChoice m);
ModelChoice parse_model_choice(const std::string& label);
StateModelKind beta_kind(ModelChoice m);
StateModelKind delta_kind(ModelChoice m);

// Truncation points of phi_1 and phi_3: the two DE means must differ by a
// fold change of at least 2.
inline constexpr double kPhiUnderUpper = -std::numbers::ln2 / 2.0;
inline constexpr double kPhiOverLower = std::numbers::ln2 / 2.0;

struct SamplerConfig {
    int iterations = 100000;
    int burn_in = 50000;
    int thinning = 10;
    double delta_sep = 0.5;                        // minimum mu_2 - mu_1
    std::array<double, 3> tau2_shape{2.0, 2.0, 2.0};
    std::array<double, 3> tau2_scale{0.05, 0.05, 0.05};
    double dirichlet_alpha = 1.0;                  // per-cell concentration for P, Q, A, B
    bool paired = false;
    double sigma_eps2 = 0.0;                       // fixed subject-effect variance (paired)
    std::uint64_t seed = 1;

    // Components that can be frozen at their initial values (oracle runs).
    bool update_delta = true;
    bool update_beta = true;
    bool update_hyper = true;
    bool update_state_params = true;

    int n_kept() const noexcept;
    void validate() const;
};

// One MCMC configuration for a chromosome. Hyperparameters live in the
// state-model emissions: beta_model has (mu_u, sigma2_u); delta_model has
// (phi_1, tau2_1), (0, tau2_2), (phi_3, tau2_3).
struct ChainState {
    std::vector<double> beta;
    std::vector<double> delta;
    StateSequence s;
    StateSequence h;
    std::vector<double> eps;        // genes x subjects, row-major; empty unless paired
    std::size_t n_subjects = 0;
    StateModel beta_model;
    StateModel delta_model;

    double mu(int u) const { return beta_model.emissions[u].mean; }
    double sigma2(int u) const { return beta_model.emissions[u].var; }
    double phi_under() const { return delta_model.emissions[0].mean; }
    double phi_over() const { return delta_model.emissions[2].mean; }
    double tau2(int t) const { return delta_model.emissions[t].var; }
    double epsilon(std::size_t gene, std::size_t subject) const {
        return eps.empty() ? 0.0 : eps[gene * n_subjects + subject];
    }

    // Throws ChainError naming the violated constraint.
    void check_invariants(double delta_sep) const;
};

// Which parameter a Laplace working decomposition targets.
enum class Target { Delta, Beta, Epsilon };

struct SiteRef {
    Target target = Target::Delta;
    std::size_t gene = 0;
    std::size_t subject = 0;  // Epsilon only
};

// Working values of one site's observations around the current value of the
// target: log lambda* = xi + z * theta_old, w = log lambda* + (Y - lambda*) / lambda*.
struct WorkingSite {
    std::vector<double> y;
    std::vector<double> xi;
    std::vector<double> z;
    std::vector<double> lambda_star;
    std::vector<double> w;
    double theta_old = 0.0;
};

struct CollapsedSite {
    double w_star = 0.0;
    double precision = 0.0;   // sum z^2 lambda*
};

WorkingSite working_values(std::span<const double> y, std::span<const double> xi, std::span<const double> z,
                           double theta_old);
WorkingSite working_decomposition(const SiteRef& site, const ChainState& state, const ChromosomeBlock& block);
CollapsedSite collapse_sufficient(const WorkingSite& site);

// Density of w* under each state after integrating theta out.
std::vector<double> state_emission_likelihood(const CollapsedSite& cs, const StateModel& model);

// Everything the joint (state, value) Laplace-MH move needs for one site.
struct LatentSite {
    std::span<const double> y;
    std::span<const double> xi;
    std::span<const double> z;
    std::span<const double> prior;        // conditional state prior
    std::span<const Emission> emissions;  // theta | state
};

struct SiteProposal {
    std::vector<double> log_state_prob;   // normalised, per state
    std::vector<double> mean;             // theta | state, per state
    std::vector<double> var;
};

// Laplace proposal built at `theta_from`.
SiteProposal laplace_proposal(const LatentSite& site, double theta_from);
double log_proposal_density(const SiteProposal& q, int state, double value);
// Unnormalised log posterior: prior(state) * N(value; emission) * Poisson likelihood.
double log_site_target(const LatentSite& site, int state, double value);
double log_acceptance_ratio(const LatentSite& site, int cur_state, double cur_value, int prop_state,
                            double prop_value);
// Accept with probability min(1, exp(log_ratio)).
bool mh_accept(double log_ratio, Rng& rng);

struct SiteMove {
    int state = 0;
    double value = 0.0;
    bool accepted = false;
};
SiteMove laplace_mh_step(const LatentSite& site, int cur_state, double cur_value, Rng& rng);

// Joint update of (h_i, delta_i) or (s_i, beta_i). Returns the accept flag.
bool mh_update_site(Target target, std::size_t gene, ChainState& state, const ChromosomeBlock& block, Rng& rng);

// Paired designs: Laplace-MH update of every epsilon_ik under N(0, sigma_eps2).
// Returns the number of accepted moves.
std::size_t update_subject_effects(ChainState& state, const ChromosomeBlock& block, const SamplerConfig& cfg,
                                   Rng& rng);
void update_mu_pair(ChainState& state, const SamplerConfig& cfg, Rng& rng);
void update_variance_hyperparams(ChainState& state, const SamplerConfig& cfg, Rng& rng);
// Dirichlet draws for P/A and Q/B. HMM rows are corrected for the stationary
// initial-state term by an independence MH step.
void update_state_params(ChainState& state, const SamplerConfig& cfg, Rng& rng);

// Poisson log-likelihood (with the log Y! term) of a block at the given state.
double block_log_likelihood(const ChainState& state, const ChromosomeBlock& block);
double gene_log_likelihood(const ChainState& state, const ChromosomeBlock& block, std::size_t gene);

ChainState initialize_chain(const ChromosomeBlock& block, ModelChoice model, const SamplerConfig& cfg);

struct HyperSample {
    std::array<double, 2> mu{};
    std::array<double, 2> sigma2{};
    double phi_under = 0.0;
    double phi_over = 0.0;
    std::array<double, 3> tau2{};
};

struct ChainSamples {
    std::string chromosome;
    std::vector<GeneMeta> genes;
    ModelChoice model = ModelChoice::HH;
    std::size_t n_subjects = 0;

    std::vector<int> iterations;            // retained iteration indices
    std::vector<std::uint8_t> h;            // kept x genes (0-based states)
    std::vector<std::uint8_t> s;
    std::vector<double> beta;
    std::vector<double> delta;
    std::vector<double> eps;                // kept x genes x subjects
    std::vector<HyperSample> hyper;
    std::vector<StateModel> beta_models;    // per kept sample
    std::vector<StateModel> delta_models;

    std::vector<double> log_likelihood;     // every iteration
    std::vector<double> accept_delta;       // per-iteration acceptance fraction
    std::vector<double> accept_beta;
    std::vector<double> accept_eps;

    std::size_t n_genes() const noexcept { return genes.size(); }
    std::size_t n_kept() const noexcept { return iterations.size(); }
    double mean_accept_delta() const;
    double mean_accept_beta() const;
    double mean_accept_eps() const;
};

ChainSamples run_chain(const ChromosomeBlock& block, ModelChoice model, const SamplerConfig& cfg,
                       const std::optional<ChainState>& init = std::nullopt);
ChainSamples run_chain(const ChromosomeBlock& block, ModelChoice model, const SamplerConfig& cfg, Rng& rng,
                       const std::optional<ChainState>& init = std::nullopt);

// Runs one chain per block on up to `threads` workers. Output order follows `blocks`.
std::vector<ChainSamples> run_chains(const std::vector<ChromosomeBlock>& blocks, ModelChoice model,
                                     const SamplerConfig& cfg, unsigned threads);

// Empirical-Bayes subject-effect variance for paired designs: mean over
// genes of per-gene moment estimates, floored at 1e-6.
double estimate_sigma_eps(const CountMatrix& cm, const std::vector<double>& rho);
double estimate_sigma_eps(const CountMatrix& cm);

} // namespace hmmseq
