#include "hmmseq/sampler.hpp"

#include "hmmseq/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hmmseq {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double normal_logpdf(double x, double mean, double var) {
    const double d = x - mean;
    return -kLogSqrt2Pi - 0.5 * std::log(var) - 0.5 * d * d / var;
}

double log_sum_exp(std::span<const double> v) {
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double total = 0.0;
    for (double x : v) total += std::exp(x - m);
    return m + std::log(total);
}

// Scratch buffers for one site's observations.
struct SiteBuffers {
    std::vector<double> y, xi, z;
    void clear() {
        y.clear();
        xi.clear();
        z.clear();
    }
};

void fill_site(const SiteRef& site, const ChainState& state, const ChromosomeBlock& block,
               std::span<const int> subject_of, SiteBuffers& buf) {
    buf.clear();
    const std::size_t i = site.gene;
    for (std::size_t l = 0; l < block.n_libraries(); ++l) {
        const int trt = block.libraries[l].treatment;
        const double sign = trt == 1 ? -1.0 : 1.0;
        const double e = subject_of.empty() ? 0.0 : state.epsilon(i, static_cast<std::size_t>(subject_of[l]));
        double xi = 0.0;
        double z = 1.0;
        switch (site.target) {
        case Target::Delta:
            xi = state.beta[i] + e + block.rho[l];
            z = sign;
            break;
        case Target::Beta:
            xi = sign * state.delta[i] + e + block.rho[l];
            break;
        case Target::Epsilon:
            if (subject_of.empty() || static_cast<std::size_t>(subject_of[l]) != site.subject) continue;
            xi = state.beta[i] + sign * state.delta[i] + block.rho[l];
            break;
        }
        buf.y.push_back(static_cast<double>(block.count(i, l)));
        buf.xi.push_back(xi);
        buf.z.push_back(z);
    }
}

double current_value(const SiteRef& site, const ChainState& state) {
    switch (site.target) {
    case Target::Delta: return state.delta[site.gene];
    case Target::Beta: return state.beta[site.gene];
    case Target::Epsilon: return state.epsilon(site.gene, site.subject);
    }
    return 0.0;
}

double site_poisson_kernel(const LatentSite& site, double value) {
    double total = 0.0;
    for (std::size_t l = 0; l < site.y.size(); ++l) {
        const double eta = site.xi[l] + site.z[l] * value;
        total += site.y[l] * eta - std::exp(eta);
    }
    return total;
}

// Performs one joint update; `initial` is the HMM initial law (unused for FMM).
bool update_site(Target target, std::size_t gene, ChainState& state, const ChromosomeBlock& block,
                 std::span<const int> subject_of, std::span<const double> initial, SiteBuffers& buf, Rng& rng) {
    const bool is_delta = target == Target::Delta;
    StateSequence& seq = is_delta ? state.h : state.s;
    std::vector<double>& values = is_delta ? state.delta : state.beta;
    const StateModel& model = is_delta ? state.delta_model : state.beta_model;

    fill_site(SiteRef{target, gene, 0}, state, block, subject_of, buf);
    const auto prior = conditional_state_prior(seq, gene, model, initial);
    const LatentSite site{buf.y, buf.xi, buf.z, prior, model.emissions};
    const SiteMove move = laplace_mh_step(site, seq[gene], values[gene], rng);
    if (move.accepted) {
        seq[gene] = move.state;
        values[gene] = move.value;
    }
    return move.accepted;
}

std::vector<double> initial_law(const StateModel& model) {
    if (model.kind == StateModelKind::FMM) return model.weights;
    return stationary_distribution(model.trans);
}

double log_factorial_total(const ChromosomeBlock& block) {
    double total = 0.0;
    for (auto c : block.counts) total += std::lgamma(static_cast<double>(c) + 1.0);
    return total;
}

} // namespace

// ---------------------------------------------------------------------------
// Model labels and configuration

std::string to_string(ModelChoice m) {
    switch (m) {
    case ModelChoice::FF: return "FF";
    case ModelChoice::FH: return "FH";
    case ModelChoice::HF: return "HF";
    case ModelChoice::HH: return "HH";
    }
    return "?";
}

ModelChoice parse_model_choice(const std::string& label) {
    if (label == "FF") return ModelChoice::FF;
    if (label == "FH") return ModelChoice::FH;
    if (label == "HF") return ModelChoice::HF;
    if (label == "HH") return ModelChoice::HH;
    throw std::invalid_argument("unknown model '" + label + "' (expected FF, FH, HF or HH)");
}

StateModelKind beta_kind(ModelChoice m) {
    return (m == ModelChoice::HF || m == ModelChoice::HH) ? StateModelKind::HMM : StateModelKind::FMM;
}

StateModelKind delta_kind(ModelChoice m) {
    return (m == ModelChoice::FH || m == ModelChoice::HH) ? StateModelKind::HMM : StateModelKind::FMM;
}

int SamplerConfig::n_kept() const noexcept {
    if (iterations <= burn_in || thinning < 1) return 0;
    return (iterations - burn_in + thinning - 1) / thinning;
}

void SamplerConfig::validate() const {
    if (iterations < 1) throw std::invalid_argument("sampler: iterations must be >= 1");
    if (burn_in < 0 || burn_in >= iterations) throw std::invalid_argument("sampler: burn-in must be in [0, iterations)");
    if (thinning < 1) throw std::invalid_argument("sampler: thinning must be >= 1");
    if (!(delta_sep > 0.0)) throw std::invalid_argument("sampler: delta_sep must be positive");
    for (int t = 0; t < 3; ++t)
        if (!(tau2_shape[t] > 0.0) || !(tau2_scale[t] > 0.0))
            throw std::invalid_argument("sampler: tau2 prior parameters must be positive");
    if (!(dirichlet_alpha > 0.0)) throw std::invalid_argument("sampler: Dirichlet concentration must be positive");
    if (paired && !(sigma_eps2 > 0.0)) throw std::invalid_argument("sampler: paired mode needs sigma_eps2 > 0");
}

void ChainState::check_invariants(double delta_sep) const {
    if (mu(0) > mu(1) - delta_sep + 1e-12) throw ChainError("invariant violated: mu_1 <= mu_2 - delta");
    if (!(phi_under() < kPhiUnderUpper + 1e-12)) throw ChainError("invariant violated: phi_1 < -(log 2)/2");
    if (!(phi_over() > kPhiOverLower - 1e-12)) throw ChainError("invariant violated: phi_3 > (log 2)/2");
    for (const auto& e : beta_model.emissions)
        if (!(e.var > 0.0)) throw ChainError("invariant violated: sigma^2 must be positive");
    for (const auto& e : delta_model.emissions)
        if (!(e.var > 0.0)) throw ChainError("invariant violated: tau^2 must be positive");
}

// ---------------------------------------------------------------------------
// Laplace working values

WorkingSite working_values(std::span<const double> y, std::span<const double> xi, std::span<const double> z,
                           double theta_old) {
    WorkingSite out;
    out.y.assign(y.begin(), y.end());
    out.xi.assign(xi.begin(), xi.end());
    out.z.assign(z.begin(), z.end());
    out.theta_old = theta_old;
    out.lambda_star.resize(y.size());
    out.w.resize(y.size());
    for (std::size_t l = 0; l < y.size(); ++l) {
        const double log_lambda = xi[l] + z[l] * theta_old;
        const double lambda = std::exp(log_lambda);
        out.lambda_star[l] = lambda;
        out.w[l] = log_lambda + (y[l] - lambda) / lambda;
    }
    return out;
}

WorkingSite working_decomposition(const SiteRef& site, const ChainState& state, const ChromosomeBlock& block) {
    SiteBuffers buf;
    const auto subject_of = block.subject_index();
    fill_site(site, state, block, subject_of, buf);
    return working_values(buf.y, buf.xi, buf.z, current_value(site, state));
}

CollapsedSite collapse_sufficient(const WorkingSite& site) {
    if (site.w.empty()) throw std::invalid_argument("collapse_sufficient: site has no observations");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t l = 0; l < site.w.size(); ++l) {
        num += site.lambda_star[l] * site.z[l] * (site.w[l] - site.xi[l]);
        den += site.z[l] * site.z[l] * site.lambda_star[l];
    }
    return {num / den, den};
}

std::vector<double> state_emission_likelihood(const CollapsedSite& cs, const StateModel& model) {
    std::vector<double> out(model.n_states());
    for (std::size_t t = 0; t < out.size(); ++t) {
        const auto& e = model.emissions[t];
        out[t] = std::exp(normal_logpdf(cs.w_star, e.mean, e.var + 1.0 / cs.precision));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Joint (state, value) Metropolis-Hastings

SiteProposal laplace_proposal(const LatentSite& site, double theta_from) {
    double precision = 0.0;
    double score = 0.0;
    for (std::size_t l = 0; l < site.y.size(); ++l) {
        const double lambda = std::exp(site.xi[l] + site.z[l] * theta_from);
        precision += site.z[l] * site.z[l] * lambda;
        score += site.z[l] * (site.y[l] - lambda);
    }
    // equals sum lambda* z (w - xi) / sum z^2 lambda*
    const double w_star = theta_from + score / precision;

    const std::size_t m = site.emissions.size();
    SiteProposal q;
    q.log_state_prob.resize(m);
    q.mean.resize(m);
    q.var.resize(m);
    for (std::size_t t = 0; t < m; ++t) {
        const auto& e = site.emissions[t];
        q.log_state_prob[t] = site.prior[t] > 0.0
                                  ? std::log(site.prior[t]) + normal_logpdf(w_star, e.mean, e.var + 1.0 / precision)
                                  : -INFINITY;
        if (e.var > 0.0) {
            q.var[t] = 1.0 / (1.0 / e.var + precision);
            q.mean[t] = q.var[t] * (e.mean / e.var + precision * w_star);
        } else {
            q.var[t] = 0.0;
            q.mean[t] = e.mean;
        }
    }
    const double norm = log_sum_exp(q.log_state_prob);
    for (double& x : q.log_state_prob) x -= norm;
    return q;
}

double log_proposal_density(const SiteProposal& q, int state, double value) {
    return q.log_state_prob[state] + normal_logpdf(value, q.mean[state], q.var[state]);
}

double log_site_target(const LatentSite& site, int state, double value) {
    if (site.prior[state] <= 0.0) return -INFINITY;
    const auto& e = site.emissions[state];
    return std::log(site.prior[state]) + normal_logpdf(value, e.mean, e.var) + site_poisson_kernel(site, value);
}

double log_acceptance_ratio(const LatentSite& site, int cur_state, double cur_value, int prop_state,
                            double prop_value) {
    const SiteProposal fwd = laplace_proposal(site, cur_value);
    const SiteProposal rev = laplace_proposal(site, prop_value);
    return log_site_target(site, prop_state, prop_value) - log_site_target(site, cur_state, cur_value) +
           log_proposal_density(rev, cur_state, cur_value) - log_proposal_density(fwd, prop_state, prop_value);
}

bool mh_accept(double log_ratio, Rng& rng) {
    if (std::isnan(log_ratio)) return false;
    if (log_ratio >= 0.0) return true;
    return std::log(rng.uniform()) < log_ratio;
}

SiteMove laplace_mh_step(const LatentSite& site, int cur_state, double cur_value, Rng& rng) {
    const SiteProposal fwd = laplace_proposal(site, cur_value);
    std::vector<double> probs(fwd.log_state_prob.size());
    for (std::size_t t = 0; t < probs.size(); ++t) probs[t] = std::exp(fwd.log_state_prob[t]);
    const int prop_state = static_cast<int>(rng.categorical(probs));
    const double prop_value = rng.normal(fwd.mean[prop_state], std::sqrt(fwd.var[prop_state]));

    const SiteProposal rev = laplace_proposal(site, prop_value);
    const double log_ratio = log_site_target(site, prop_state, prop_value) -
                             log_site_target(site, cur_state, cur_value) +
                             log_proposal_density(rev, cur_state, cur_value) -
                             log_proposal_density(fwd, prop_state, prop_value);
    if (mh_accept(log_ratio, rng)) return {prop_state, prop_value, true};
    return {cur_state, cur_value, false};
}

bool mh_update_site(Target target, std::size_t gene, ChainState& state, const ChromosomeBlock& block, Rng& rng) {
    if (target == Target::Epsilon)
        throw std::invalid_argument("mh_update_site: use update_subject_effects for epsilon");
    if (gene >= block.n_genes()) throw std::out_of_range("mh_update_site: gene index out of range");
    const auto subject_of = block.subject_index();
    const auto& model = target == Target::Delta ? state.delta_model : state.beta_model;
    const auto initial = initial_law(model);
    SiteBuffers buf;
    return update_site(target, gene, state, block, state.eps.empty() ? std::span<const int>{} : subject_of, initial,
                       buf, rng);
}

// ---------------------------------------------------------------------------
// Subject effects and hyperparameters

std::size_t update_subject_effects(ChainState& state, const ChromosomeBlock& block, const SamplerConfig& cfg,
                                   Rng& rng) {
    if (!cfg.paired || state.eps.empty()) throw ChainError("update_subject_effects: chain is not in paired mode");
    if (!(cfg.sigma_eps2 > 0.0)) throw ChainError("update_subject_effects: sigma_eps2 must be positive");
    const auto subject_of = block.subject_index();
    const double prior[1] = {1.0};
    const Emission emission[1] = {{0.0, cfg.sigma_eps2}};
    SiteBuffers buf;
    std::size_t accepted = 0;
    for (std::size_t i = 0; i < block.n_genes(); ++i) {
        for (std::size_t k = 0; k < state.n_subjects; ++k) {
            fill_site(SiteRef{Target::Epsilon, i, k}, state, block, subject_of, buf);
            const LatentSite site{buf.y, buf.xi, buf.z, prior, emission};
            double& value = state.eps[i * state.n_subjects + k];
            const SiteMove move = laplace_mh_step(site, 0, value, rng);
            if (move.accepted) {
                value = move.value;
                ++accepted;
            }
        }
    }
    return accepted;
}

void update_mu_pair(ChainState& state, const SamplerConfig& cfg, Rng& rng) {
    std::array<double, 2> n{0.0, 0.0};
    std::array<double, 2> sum{0.0, 0.0};
    for (std::size_t i = 0; i < state.beta.size(); ++i) {
        n[state.s[i]] += 1.0;
        sum[state.s[i]] += state.beta[i];
    }
    auto& e = state.beta_model.emissions;
    const double delta = cfg.delta_sep;
    if (n[0] > 0.0 && n[1] > 0.0) {
        const double m1 = sum[0] / n[0], v1 = e[0].var / n[0];
        const double m2 = sum[1] / n[1], v2 = e[1].var / n[1];
        // gap d = mu_2 - mu_1 carries the whole constraint
        const double d = rng.normal_truncated_below(m2 - m1, std::sqrt(v1 + v2), delta);
        const double cond_mean = m1 - v1 / (v1 + v2) * (d - (m2 - m1));
        const double mu1 = rng.normal(cond_mean, std::sqrt(v1 * v2 / (v1 + v2)));
        e[0].mean = mu1;
        e[1].mean = mu1 + d;
    } else if (n[1] > 0.0) {
        e[1].mean = rng.normal_truncated_below(sum[1] / n[1], std::sqrt(e[1].var / n[1]), e[0].mean + delta);
    } else if (n[0] > 0.0) {
        e[0].mean = rng.normal_truncated_above(sum[0] / n[0], std::sqrt(e[0].var / n[0]), e[1].mean - delta);
    }
}

void update_variance_hyperparams(ChainState& state, const SamplerConfig& cfg, Rng& rng) {
    // sigma_u^2 under p(sigma^2) ∝ 1/sigma^2
    {
        std::array<double, 2> n{0.0, 0.0};
        std::array<double, 2> ss{0.0, 0.0};
        for (std::size_t i = 0; i < state.beta.size(); ++i) {
            const int u = state.s[i];
            const double d = state.beta[i] - state.mu(u);
            n[u] += 1.0;
            ss[u] += d * d;
        }
        for (int u = 0; u < 2; ++u) {
            if (n[u] == 0.0 || ss[u] <= 0.0) continue;
            state.beta_model.emissions[u].var = rng.inverse_gamma(n[u] / 2.0, ss[u] / 2.0);
        }
    }

    auto& e = state.delta_model.emissions;
    std::array<double, 3> n{0.0, 0.0, 0.0};
    std::array<double, 3> sum{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < state.delta.size(); ++i) {
        n[state.h[i]] += 1.0;
        sum[state.h[i]] += state.delta[i];
    }
    if (n[0] > 0.0) e[0].mean = rng.normal_truncated_above(sum[0] / n[0], std::sqrt(e[0].var / n[0]), kPhiUnderUpper);
    if (n[2] > 0.0) e[2].mean = rng.normal_truncated_below(sum[2] / n[2], std::sqrt(e[2].var / n[2]), kPhiOverLower);
    e[1].mean = 0.0;

    std::array<double, 3> ss{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < state.delta.size(); ++i) {
        const int t = state.h[i];
        const double d = state.delta[i] - e[t].mean;
        ss[t] += d * d;
    }
    for (int t = 0; t < 3; ++t)
        e[t].var = rng.inverse_gamma(cfg.tau2_shape[t] + n[t] / 2.0, cfg.tau2_scale[t] + ss[t] / 2.0);
}

void update_state_params(ChainState& state, const SamplerConfig& cfg, Rng& rng) {
    auto update = [&](StateModel& model, const StateSequence& seq) {
        const std::vector<double> alpha(model.n_states(), cfg.dirichlet_alpha);
        StateModel proposal = update_state_model_params(seq, model, alpha, rng);
        if (model.kind == StateModelKind::FMM || seq.empty()) {
            model = std::move(proposal);
            return;
        }
        // the conjugate draw ignores the stationary law of the first state
        const double log_ratio = std::log(stationary_distribution(proposal.trans)[seq[0]]) -
                                 std::log(stationary_distribution(model.trans)[seq[0]]);
        if (mh_accept(log_ratio, rng)) model = std::move(proposal);
    };
    update(state.beta_model, state.s);
    update(state.delta_model, state.h);
}

// ---------------------------------------------------------------------------
// Likelihood

double gene_log_likelihood(const ChainState& state, const ChromosomeBlock& block, std::size_t gene) {
    const auto subject_of = block.subject_index();
    double total = 0.0;
    for (std::size_t l = 0; l < block.n_libraries(); ++l) {
        const double sign = block.libraries[l].treatment == 1 ? -1.0 : 1.0;
        const double e = (state.eps.empty() || subject_of.empty()) ? 0.0 : state.epsilon(gene, subject_of[l]);
        const double eta = state.beta[gene] + sign * state.delta[gene] + e + block.rho[l];
        const double y = static_cast<double>(block.count(gene, l));
        total += y * eta - std::exp(eta) - std::lgamma(y + 1.0);
    }
    return total;
}

double block_log_likelihood(const ChainState& state, const ChromosomeBlock& block) {
    double total = 0.0;
    for (std::size_t i = 0; i < block.n_genes(); ++i) total += gene_log_likelihood(state, block, i);
    return total;
}

// ---------------------------------------------------------------------------
// Initialisation

ChainState initialize_chain(const ChromosomeBlock& block, ModelChoice model, const SamplerConfig& cfg) {
    const std::size_t n = block.n_genes();
    if (n == 0) throw ChainError("chromosome " + block.chromosome + ": block has no genes");
    const std::size_t L = block.n_libraries();
    const double mean_rho = std::accumulate(block.rho.begin(), block.rho.end(), 0.0) / static_cast<double>(L);

    ChainState st;
    st.beta.resize(n);
    st.delta.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        std::array<double, 2> norm_sum{0.0, 0.0};
        std::array<double, 2> n_lib{0.0, 0.0};
        for (std::size_t l = 0; l < L; ++l) {
            const double y = static_cast<double>(block.count(i, l));
            const int j = block.libraries[l].treatment - 1;
            total += y;
            norm_sum[j] += y * std::exp(-block.rho[l]);
            n_lib[j] += 1.0;
        }
        st.beta[i] = std::log(1.0 + total / static_cast<double>(L)) - mean_rho;
        const double m1 = n_lib[0] > 0 ? norm_sum[0] / n_lib[0] : 0.0;
        const double m2 = n_lib[1] > 0 ? norm_sum[1] / n_lib[1] : 0.0;
        st.delta[i] = 0.5 * std::log((m2 + 0.5) / (m1 + 0.5));
    }

    // two-means split of beta (exact in one dimension)
    std::vector<double> sorted = st.beta;
    std::sort(sorted.begin(), sorted.end());
    double cut = -INFINITY;
    if (n >= 2) {
        std::vector<double> prefix(n + 1, 0.0), prefix2(n + 1, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            prefix[k + 1] = prefix[k] + sorted[k];
            prefix2[k + 1] = prefix2[k] + sorted[k] * sorted[k];
        }
        double best = INFINITY;
        for (std::size_t k = 1; k < n; ++k) {
            const double nl = static_cast<double>(k), nr = static_cast<double>(n - k);
            const double sl = prefix2[k] - prefix[k] * prefix[k] / nl;
            const double sr = (prefix2[n] - prefix2[k]) - (prefix[n] - prefix[k]) * (prefix[n] - prefix[k]) / nr;
            if (sl + sr < best) {
                best = sl + sr;
                cut = 0.5 * (sorted[k - 1] + sorted[k]);
            }
        }
    }
    st.s.resize(n);
    st.h.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        st.s[i] = st.beta[i] < cut ? 0 : 1;
        st.h[i] = st.delta[i] < kPhiUnderUpper ? 0 : (st.delta[i] > kPhiOverLower ? 2 : 1);
    }

    auto group_moments = [](const std::vector<double>& x, const StateSequence& seq, int t, double center,
                            bool use_center) {
        double cnt = 0.0, sum = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (seq[i] == t) {
                cnt += 1.0;
                sum += x[i];
            }
        const double mean = cnt > 0 ? sum / cnt : NAN;
        const double c = use_center ? center : mean;
        double ss = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (seq[i] == t) ss += (x[i] - c) * (x[i] - c);
        const double var = cnt > 1 ? ss / (cnt - 1.0) : NAN;
        return std::array<double, 3>{cnt, mean, var};
    };

    // beta emissions
    auto g0 = group_moments(st.beta, st.s, 0, 0.0, false);
    auto g1 = group_moments(st.beta, st.s, 1, 0.0, false);
    double mu1 = std::isnan(g0[1]) ? g1[1] - cfg.delta_sep : g0[1];
    double mu2 = std::isnan(g1[1]) ? g0[1] + cfg.delta_sep : g1[1];
    if (mu2 - mu1 < cfg.delta_sep) {
        const double mid = 0.5 * (mu1 + mu2);
        mu1 = mid - 0.5 * cfg.delta_sep;
        mu2 = mid + 0.5 * cfg.delta_sep;
    }
    auto var_or = [](double v, double fallback) { return (std::isnan(v) || v < 1e-3) ? fallback : v; };
    std::vector<Emission> beta_em{{mu1, var_or(g0[2], 1.0)}, {mu2, var_or(g1[2], 1.0)}};

    // delta emissions
    auto d0 = group_moments(st.delta, st.h, 0, 0.0, false);
    auto d2 = group_moments(st.delta, st.h, 2, 0.0, false);
    const double phi1 = std::isnan(d0[1]) ? kPhiUnderUpper - 0.05 : std::min(d0[1], kPhiUnderUpper - 0.01);
    const double phi3 = std::isnan(d2[1]) ? kPhiOverLower + 0.05 : std::max(d2[1], kPhiOverLower + 0.01);
    auto d1 = group_moments(st.delta, st.h, 1, 0.0, true);
    std::vector<Emission> delta_em{
        {phi1, var_or(d0[2], cfg.tau2_scale[0] / std::max(cfg.tau2_shape[0] - 1.0, 1.0))},
        {0.0, var_or(d1[2], cfg.tau2_scale[1] / std::max(cfg.tau2_shape[1] - 1.0, 1.0))},
        {phi3, var_or(d2[2], cfg.tau2_scale[2] / std::max(cfg.tau2_shape[2] - 1.0, 1.0))}};

    auto make_model = [](StateModelKind kind, const StateSequence& seq, std::vector<Emission> em) {
        const std::size_t m = em.size();
        if (kind == StateModelKind::FMM) {
            auto c = state_counts(seq, m);
            const double total = std::accumulate(c.begin(), c.end(), 0.0) + static_cast<double>(m);
            for (double& x : c) x = (x + 1.0) / total;
            return StateModel::mixture(std::move(c), std::move(em));
        }
        auto c = transition_counts(seq, m);
        for (auto& row : c) {
            const double total = std::accumulate(row.begin(), row.end(), 0.0) + static_cast<double>(m);
            for (double& x : row) x = (x + 1.0) / total;
        }
        return StateModel::markov(std::move(c), std::move(em));
    };
    st.beta_model = make_model(beta_kind(model), st.s, std::move(beta_em));
    st.delta_model = make_model(delta_kind(model), st.h, std::move(delta_em));

    if (cfg.paired) {
        st.n_subjects = block.n_subjects();
        if (st.n_subjects == 0) throw ChainError("chromosome " + block.chromosome + ": paired mode needs subject ids");
        st.eps.assign(n * st.n_subjects, 0.0);
    }
    return st;
}

// ---------------------------------------------------------------------------
// Chain driver

double ChainSamples::mean_accept_delta() const {
    return accept_delta.empty() ? 0.0
                                : std::accumulate(accept_delta.begin(), accept_delta.end(), 0.0) /
                                      static_cast<double>(accept_delta.size());
}
double ChainSamples::mean_accept_beta() const {
    return accept_beta.empty() ? 0.0
                               : std::accumulate(accept_beta.begin(), accept_beta.end(), 0.0) /
                                     static_cast<double>(accept_beta.size());
}
double ChainSamples::mean_accept_eps() const {
    return accept_eps.empty() ? 0.0
                              : std::accumulate(accept_eps.begin(), accept_eps.end(), 0.0) /
                                    static_cast<double>(accept_eps.size());
}

ChainSamples run_chain(const ChromosomeBlock& block, ModelChoice model, const SamplerConfig& cfg,
                       const std::optional<ChainState>& init) {
    Rng rng(substream_seed(cfg.seed, block.chromosome));
    return run_chain(block, model, cfg, rng, init);
}

ChainSamples run_chain(const ChromosomeBlock& block, ModelChoice model, const SamplerConfig& cfg, Rng& rng,
                       const std::optional<ChainState>& init) {
    cfg.validate();
    if (block.n_genes() == 0) throw ChainError("chromosome " + block.chromosome + ": block has no genes");
    if (cfg.paired && block.subject_index().empty())
        throw ChainError("chromosome " + block.chromosome + ": paired mode needs subject ids for every library");

    ChainState st = init ? *init : initialize_chain(block, model, cfg);
    const std::size_t n = block.n_genes();
    if (st.beta.size() != n || st.delta.size() != n || st.s.size() != n || st.h.size() != n)
        throw ChainError("chromosome " + block.chromosome + ": initial state does not match block size");
    if (cfg.paired && st.eps.empty()) {
        st.n_subjects = block.n_subjects();
        st.eps.assign(n * st.n_subjects, 0.0);
    }
    const std::vector<int> subject_of = cfg.paired ? block.subject_index() : std::vector<int>{};
    const double log_fact = log_factorial_total(block);

    ChainSamples out;
    out.chromosome = block.chromosome;
    out.genes = block.genes;
    out.model = model;
    out.n_subjects = cfg.paired ? st.n_subjects : 0;
    const auto kept = static_cast<std::size_t>(cfg.n_kept());
    out.iterations.reserve(kept);
    out.h.reserve(kept * n);
    out.s.reserve(kept * n);
    out.beta.reserve(kept * n);
    out.delta.reserve(kept * n);
    out.log_likelihood.reserve(static_cast<std::size_t>(cfg.iterations));

    SiteBuffers buf;
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        // 1. (h, delta) given beta, eps, rho
        if (cfg.update_delta) {
            const auto initial = initial_law(st.delta_model);
            std::size_t acc = 0;
            for (std::size_t i = 0; i < n; ++i)
                acc += update_site(Target::Delta, i, st, block, subject_of, initial, buf, rng) ? 1 : 0;
            out.accept_delta.push_back(static_cast<double>(acc) / static_cast<double>(n));
        }
        // 2. (s, beta) given delta, eps, rho
        if (cfg.update_beta) {
            const auto initial = initial_law(st.beta_model);
            std::size_t acc = 0;
            for (std::size_t i = 0; i < n; ++i)
                acc += update_site(Target::Beta, i, st, block, subject_of, initial, buf, rng) ? 1 : 0;
            out.accept_beta.push_back(static_cast<double>(acc) / static_cast<double>(n));
        }
        // 3. subject effects
        if (cfg.paired) {
            const std::size_t acc = update_subject_effects(st, block, cfg, rng);
            out.accept_eps.push_back(static_cast<double>(acc) / static_cast<double>(n * st.n_subjects));
        }
        // 4-5. hyperparameters
        if (cfg.update_hyper) {
            update_mu_pair(st, cfg, rng);
            update_variance_hyperparams(st, cfg, rng);
        }
        if (cfg.update_state_params) update_state_params(st, cfg, rng);
        st.check_invariants(cfg.delta_sep);

        double ll = -log_fact;
        for (std::size_t i = 0; i < n; ++i) {
            double gene_ll = 0.0;
            for (std::size_t l = 0; l < block.n_libraries(); ++l) {
                const double sign = block.libraries[l].treatment == 1 ? -1.0 : 1.0;
                const double e = subject_of.empty() ? 0.0 : st.epsilon(i, subject_of[l]);
                const double eta = st.beta[i] + sign * st.delta[i] + e + block.rho[l];
                gene_ll += static_cast<double>(block.count(i, l)) * eta - std::exp(eta);
            }
            if (!std::isfinite(gene_ll)) {
                std::ostringstream msg;
                msg << "chromosome " << block.chromosome << ": non-finite log-likelihood at gene '"
                    << block.genes[i].id << "' iteration " << iter;
                throw ChainError(msg.str());
            }
            ll += gene_ll;
        }
        out.log_likelihood.push_back(ll);

        if (iter >= cfg.burn_in && (iter - cfg.burn_in) % cfg.thinning == 0) {
            out.iterations.push_back(iter);
            for (std::size_t i = 0; i < n; ++i) {
                out.h.push_back(static_cast<std::uint8_t>(st.h[i]));
                out.s.push_back(static_cast<std::uint8_t>(st.s[i]));
            }
            out.beta.insert(out.beta.end(), st.beta.begin(), st.beta.end());
            out.delta.insert(out.delta.end(), st.delta.begin(), st.delta.end());
            out.eps.insert(out.eps.end(), st.eps.begin(), st.eps.end());
            HyperSample hs;
            hs.mu = {st.mu(0), st.mu(1)};
            hs.sigma2 = {st.sigma2(0), st.sigma2(1)};
            hs.phi_under = st.phi_under();
            hs.phi_over = st.phi_over();
            hs.tau2 = {st.tau2(0), st.tau2(1), st.tau2(2)};
            out.hyper.push_back(hs);
            out.beta_models.push_back(st.beta_model);
            out.delta_models.push_back(st.delta_model);
        }
    }
    return out;
}

std::vector<ChainSamples> run_chains(const std::vector<ChromosomeBlock>& blocks, ModelChoice model,
                                     const SamplerConfig& cfg, unsigned threads) {
    std::vector<ChainSamples> out(blocks.size());
    parallel_for(blocks.size(), threads, [&](std::size_t b) { out[b] = run_chain(blocks[b], model, cfg); });
    return out;
}

} // namespace hmmseq
