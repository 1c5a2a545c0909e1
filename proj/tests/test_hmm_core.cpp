#include "doctest.h"

#include <cmath>
#include <functional>
#include <numeric>

#include <Eigen/Dense>

#include "hmmseq/hmm_core.hpp"

using namespace hmmseq;

namespace {

const std::vector<std::vector<double>> kA{{0.50, 0.50}, {0.05, 0.95}};
const std::vector<std::vector<double>> kB{{0.50, 0.25, 0.25}, {0.10, 0.80, 0.10}, {0.25, 0.25, 0.50}};

std::vector<Emission> unit_emissions(std::size_t m) { return std::vector<Emission>(m, Emission{0.0, 1.0}); }

// Every sequence of length n over m states.
void for_each_sequence(std::size_t n, std::size_t m, const std::function<void(const StateSequence&)>& fn) {
    StateSequence seq(n, 0);
    for (;;) {
        fn(seq);
        std::size_t k = 0;
        while (k < n && ++seq[k] == static_cast<int>(m)) seq[k++] = 0;
        if (k == n) return;
    }
}

// P(s_i = t | s_{-i}) by summing the joint law over the m values at i.
std::vector<double> enumerate_conditional(StateSequence seq, std::size_t i, const StateModel& model) {
    std::vector<double> p(model.n_states());
    for (std::size_t t = 0; t < p.size(); ++t) {
        seq[i] = static_cast<int>(t);
        p[t] = std::exp(log_joint_states(seq, model));
    }
    const double z = std::accumulate(p.begin(), p.end(), 0.0);
    for (double& x : p) x /= z;
    return p;
}

} // namespace

TEST_CASE("stationary distribution of the beta transition matrix") {
    const auto pi = stationary_distribution(kA);
    CHECK(std::abs(pi[0] - 1.0 / 11.0) < 1e-10);
    CHECK(std::abs(pi[1] - 10.0 / 11.0) < 1e-10);
}

TEST_CASE("stationary distribution of symmetric and 3-state matrices") {
    const auto half = stationary_distribution({{0.5, 0.5}, {0.5, 0.5}});
    CHECK(half[0] == doctest::Approx(0.5));
    CHECK(half[1] == doctest::Approx(0.5));

    const auto pi = stationary_distribution(kB);
    // independent oracle: left eigenvector for eigenvalue 1
    Eigen::Matrix3d B;
    for (int u = 0; u < 3; ++u)
        for (int t = 0; t < 3; ++t) B(u, t) = kB[u][t];
    Eigen::EigenSolver<Eigen::Matrix3d> es(B.transpose());
    int k = 0;
    for (int j = 1; j < 3; ++j)
        if (std::abs(es.eigenvalues()[j] - 1.0) < std::abs(es.eigenvalues()[k] - 1.0)) k = j;
    Eigen::Vector3d v = es.eigenvectors().col(k).real();
    v /= v.sum();
    for (int t = 0; t < 3; ++t) CHECK(std::abs(pi[t] - v(t)) < 1e-10);
    for (int t = 0; t < 3; ++t) {
        double s = 0.0;
        for (int u = 0; u < 3; ++u) s += pi[u] * kB[u][t];
        CHECK(std::abs(s - pi[t]) < 1e-10);
    }
    // symmetric B has pi_1 = pi_3; balance gives (2/9, 5/9, 2/9)
    CHECK(pi[0] == doctest::Approx(2.0 / 9.0).epsilon(1e-12));
    CHECK(pi[1] == doctest::Approx(5.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("reducible or periodic matrices are rejected") {
    CHECK_THROWS_AS(stationary_distribution({{1.0, 0.0}, {0.0, 1.0}}), std::domain_error);
    CHECK_THROWS_AS(stationary_distribution({{0.0, 1.0}, {1.0, 0.0}}), std::domain_error);
}

TEST_CASE("mixture conditional prior is the weight vector") {
    const auto model = StateModel::mixture({0.22, 0.56, 0.22}, unit_emissions(3));
    const StateSequence seq{0, 2, 1, 1};
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const auto p = conditional_state_prior(seq, i, model);
        CHECK(p[0] == doctest::Approx(0.22));
        CHECK(p[1] == doctest::Approx(0.56));
        CHECK(p[2] == doctest::Approx(0.22));
    }
}

TEST_CASE("HMM conditional prior with both neighbours in state 2") {
    const auto model = StateModel::markov(kB, unit_emissions(3));
    const auto p = conditional_state_prior({1, 0, 1}, 1, model);
    CHECK(p[0] == doctest::Approx(0.025 / 0.69).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.64 / 0.69).epsilon(1e-12));
    CHECK(p[2] == doctest::Approx(0.025 / 0.69).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.9275).epsilon(1e-4));
}

TEST_CASE("uniform transitions give a uniform conditional") {
    const std::vector<std::vector<double>> u(3, std::vector<double>(3, 1.0 / 3.0));
    const auto model = StateModel::markov(u, unit_emissions(3));
    for (std::size_t i = 0; i < 4; ++i)
        for (double x : conditional_state_prior({0, 2, 1, 0}, i, model)) CHECK(x == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("conditional prior matches enumeration of the joint law") {
    const std::vector<StateModel> models{
        StateModel::markov(kA, unit_emissions(2)),
        StateModel::markov(kB, unit_emissions(3)),
        StateModel::mixture({0.1, 0.9}, unit_emissions(2)),
        StateModel::markov({{0.2, 0.3, 0.5}, {0.6, 0.1, 0.3}, {0.3, 0.3, 0.4}}, unit_emissions(3)),
    };
    for (const auto& model : models) {
        for (std::size_t n = 1; n <= 6; ++n) {
            double worst = 0.0, worst_sum = 0.0;
            for_each_sequence(n, model.n_states(), [&](const StateSequence& seq) {
                for (std::size_t i = 0; i < n; ++i) {
                    const auto p = conditional_state_prior(seq, i, model);
                    const auto q = enumerate_conditional(seq, i, model);
                    double s = 0.0;
                    for (std::size_t t = 0; t < p.size(); ++t) {
                        worst = std::max(worst, std::abs(p[t] - q[t]));
                        s += p[t];
                    }
                    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
                }
            });
            CHECK(worst < 1e-10);
            CHECK(worst_sum < 1e-12);
        }
    }
}

TEST_CASE("log joint of state sequences") {
    const auto hmm = StateModel::markov(kA, unit_emissions(2));
    CHECK(log_joint_states({1}, hmm) == doctest::Approx(std::log(10.0 / 11.0)).epsilon(1e-12));
    const auto fmm = StateModel::mixture({0.1, 0.9}, unit_emissions(2));
    CHECK(log_joint_states({0, 0}, fmm) == doctest::Approx(2.0 * std::log(0.1)).epsilon(1e-12));
    for (const auto* model : {&hmm, &fmm}) {
        double total = 0.0;
        for_each_sequence(5, 2, [&](const StateSequence& s) { total += std::exp(log_joint_states(s, *model)); });
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
    const auto hmm3 = StateModel::markov(kB, unit_emissions(3));
    double total = 0.0;
    for_each_sequence(4, 3, [&](const StateSequence& s) { total += std::exp(log_joint_states(s, hmm3)); });
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("state model validation") {
    CHECK_THROWS(StateModel::mixture({0.5, 0.6}, unit_emissions(2)).validate());
    CHECK_THROWS(StateModel::markov({{0.5, 0.5}, {0.2, 0.7}}, unit_emissions(2)).validate());
    CHECK_THROWS(StateModel::mixture({0.5, 0.5}, {{0.0, 1.0}, {0.0, 0.0}}).validate());
    CHECK_NOTHROW(StateModel::markov(kB, unit_emissions(3)).validate());
}

TEST_CASE("counts helpers") {
    const StateSequence seq{0, 0, 1, 2, 2, 0};
    CHECK(state_counts(seq, 3) == std::vector<double>{3, 1, 2});
    const auto tc = transition_counts(seq, 3);
    CHECK(tc[0] == std::vector<double>{1, 1, 0});
    CHECK(tc[1] == std::vector<double>{0, 0, 1});
    CHECK(tc[2] == std::vector<double>{1, 0, 1});
}

TEST_CASE("Dirichlet update of mixture weights: conjugate mean") {
    const std::size_t n = 8;
    const StateSequence seq(n, 1);
    const auto model = StateModel::mixture({0.5, 0.5}, unit_emissions(2));
    const std::vector<double> alpha{1.0, 1.0};
    Rng rng(5);
    const int draws = 40000;
    double m0 = 0.0;
    for (int d = 0; d < draws; ++d) {
        const auto next = update_state_model_params(seq, model, alpha, rng);
        CHECK(next.weights[0] >= 0.0);
        CHECK(std::abs(next.weights[0] + next.weights[1] - 1.0) < 1e-12);
        m0 += next.weights[0];
    }
    m0 /= draws;
    // Beta(1, 1 + n) mean 1/(n+2); sd of the estimate ~ 0.0005
    CHECK(m0 == doctest::Approx(1.0 / (n + 2)).epsilon(0.03));
}

TEST_CASE("Dirichlet update: prior dominance and empty rows") {
    Rng rng(9);
    const auto fmm = StateModel::mixture({0.5, 0.3, 0.2}, unit_emissions(3));
    const std::vector<double> big{1e7, 2e7, 1e7};
    const auto w = update_state_model_params({0, 0, 1}, fmm, big, rng).weights;
    CHECK(w[0] == doctest::Approx(0.25).epsilon(1e-2));
    CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-2));

    // state 3 never occurs, so its row is a pure prior draw: mean 1/3 each
    const auto hmm = StateModel::markov(kB, unit_emissions(3));
    const std::vector<double> alpha{1.0, 1.0, 1.0};
    std::vector<double> mean(3, 0.0);
    const int draws = 20000;
    for (int d = 0; d < draws; ++d) {
        const auto next = update_state_model_params({0, 1, 0, 1, 1}, hmm, alpha, rng);
        CHECK(next.emissions.size() == 3);
        for (const auto& row : next.trans) {
            CHECK(std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) < 1e-12);
            for (double x : row) CHECK(x >= 0.0);
        }
        for (int t = 0; t < 3; ++t) mean[t] += next.trans[2][t] / draws;
    }
    for (double x : mean) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(0.03));
}
