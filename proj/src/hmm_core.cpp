#include "hmmseq/hmm_core.hpp"

#include <cmath>
#include <numeric>

#include <Eigen/Dense>

namespace hmmseq {

namespace {

constexpr double kProbTol = 1e-12;

void check_probability_vector(std::span<const double> p, const char* what) {
    double total = 0.0;
    for (double x : p) {
        if (!(x >= 0.0)) throw std::invalid_argument(std::string(what) + ": negative or NaN probability");
        total += x;
    }
    if (std::abs(total - 1.0) > kProbTol) throw std::invalid_argument(std::string(what) + ": does not sum to 1");
}

bool is_primitive(const std::vector<std::vector<double>>& trans) {
    const auto m = static_cast<Eigen::Index>(trans.size());
    Eigen::MatrixXd pattern(m, m);
    for (Eigen::Index u = 0; u < m; ++u)
        for (Eigen::Index t = 0; t < m; ++t) pattern(u, t) = trans[u][t] > 0.0 ? 1.0 : 0.0;
    Eigen::MatrixXd power = pattern;
    for (Eigen::Index k = 1; k <= m * m; ++k) {
        if ((power.array() > 0.0).all()) return true;
        power = (power * pattern).unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; });
    }
    return false;
}

} // namespace

StateModel StateModel::mixture(std::vector<double> weights, std::vector<Emission> emissions) {
    StateModel m;
    m.kind = StateModelKind::FMM;
    m.weights = std::move(weights);
    m.emissions = std::move(emissions);
    m.validate();
    return m;
}

StateModel StateModel::markov(std::vector<std::vector<double>> trans, std::vector<Emission> emissions) {
    StateModel m;
    m.kind = StateModelKind::HMM;
    m.trans = std::move(trans);
    m.emissions = std::move(emissions);
    m.validate();
    return m;
}

void StateModel::validate() const {
    const std::size_t m = emissions.size();
    if (m < 2) throw std::invalid_argument("state model needs at least 2 states");
    for (const auto& e : emissions)
        if (!(e.var > 0.0)) throw std::invalid_argument("state model: emission variance must be positive");
    if (kind == StateModelKind::FMM) {
        if (weights.size() != m) throw std::invalid_argument("state model: weight vector length mismatch");
        check_probability_vector(weights, "mixture weights");
    } else {
        if (trans.size() != m) throw std::invalid_argument("state model: transition matrix shape mismatch");
        for (const auto& row : trans) {
            if (row.size() != m) throw std::invalid_argument("state model: transition matrix shape mismatch");
            check_probability_vector(row, "transition row");
        }
    }
}

std::vector<double> stationary_distribution(const std::vector<std::vector<double>>& trans) {
    const auto m = static_cast<Eigen::Index>(trans.size());
    if (m == 0) throw std::domain_error("stationary_distribution: empty matrix");
    if (!is_primitive(trans)) throw std::domain_error("stationary_distribution: chain is reducible or periodic");

    // (A^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
    Eigen::MatrixXd lhs(m, m);
    for (Eigen::Index u = 0; u < m; ++u)
        for (Eigen::Index t = 0; t < m; ++t) lhs(t, u) = trans[u][t] - (u == t ? 1.0 : 0.0);
    lhs.row(m - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    rhs(m - 1) = 1.0;
    const Eigen::VectorXd pi = lhs.fullPivLu().solve(rhs);
    std::vector<double> out(pi.data(), pi.data() + m);
    for (double& x : out) x = std::max(x, 0.0);
    const double total = std::accumulate(out.begin(), out.end(), 0.0);
    for (double& x : out) x /= total;
    return out;
}

std::vector<double> conditional_state_prior(const StateSequence& seq, std::size_t i, const StateModel& model,
                                            std::span<const double> initial) {
    const std::size_t m = model.n_states();
    if (i >= seq.size()) throw std::out_of_range("conditional_state_prior: index out of range");
    if (model.kind == StateModelKind::FMM) return model.weights;

    const std::size_t n = seq.size();
    std::vector<double> p(m);
    for (std::size_t t = 0; t < m; ++t) {
        double left = i == 0 ? initial[t] : model.trans[seq[i - 1]][t];
        double right = i + 1 < n ? model.trans[t][seq[i + 1]] : 1.0;
        p[t] = left * right;
    }
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    for (double& x : p) x /= total;
    return p;
}

std::vector<double> conditional_state_prior(const StateSequence& seq, std::size_t i, const StateModel& model) {
    if (model.kind == StateModelKind::FMM) return model.weights;
    const auto initial = stationary_distribution(model.trans);
    return conditional_state_prior(seq, i, model, initial);
}

double log_joint_states(const StateSequence& seq, const StateModel& model) {
    if (seq.empty()) return 0.0;
    if (model.kind == StateModelKind::FMM) {
        double total = 0.0;
        for (int s : seq) total += std::log(model.weights[s]);
        return total;
    }
    const auto initial = stationary_distribution(model.trans);
    double total = std::log(initial[seq[0]]);
    for (std::size_t i = 1; i < seq.size(); ++i) total += std::log(model.trans[seq[i - 1]][seq[i]]);
    return total;
}

std::vector<double> state_counts(const StateSequence& seq, std::size_t m) {
    std::vector<double> c(m, 0.0);
    for (int s : seq) c[s] += 1.0;
    return c;
}

std::vector<std::vector<double>> transition_counts(const StateSequence& seq, std::size_t m) {
    std::vector<std::vector<double>> c(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 1; i < seq.size(); ++i) c[seq[i - 1]][seq[i]] += 1.0;
    return c;
}

StateModel update_state_model_params(const StateSequence& seq, const StateModel& model,
                                     std::span<const double> alpha, Rng& rng) {
    const std::size_t m = model.n_states();
    if (alpha.size() != m) throw std::invalid_argument("update_state_model_params: alpha length mismatch");
    for (double a : alpha)
        if (!(a > 0.0)) throw std::invalid_argument("update_state_model_params: alpha must be positive");

    StateModel out = model;
    if (model.kind == StateModelKind::FMM) {
        auto post = state_counts(seq, m);
        for (std::size_t t = 0; t < m; ++t) post[t] += alpha[t];
        out.weights = rng.dirichlet(post);
    } else {
        const auto counts = transition_counts(seq, m);
        for (std::size_t v = 0; v < m; ++v) {
            std::vector<double> post(m);
            for (std::size_t t = 0; t < m; ++t) post[t] = alpha[t] + counts[v][t];
            out.trans[v] = rng.dirichlet(post);
        }
    }
    return out;
}

} // namespace hmmseq
