#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "hmmseq/sampler.hpp"

namespace hmmseq {

namespace {

// Weak ridge on the subject effects so genes with an all-zero subject stay finite.
constexpr double kSubjectRidge = 1e-2;
constexpr int kFitRounds = 30;

} // namespace

double estimate_sigma_eps(const CountMatrix& cm, const std::vector<double>& rho) {
    if (!cm.is_paired()) throw std::invalid_argument("estimate_sigma_eps: count matrix is not a paired layout");
    if (rho.size() != cm.n_libraries()) throw std::invalid_argument("estimate_sigma_eps: rho length mismatch");

    std::map<int, int> dense;
    for (const auto& lib : cm.libraries()) dense.emplace(*lib.subject, 0);
    int next = 0;
    for (auto& [id, idx] : dense) idx = next++;
    const std::size_t K = dense.size();
    if (K < 2) throw std::invalid_argument("estimate_sigma_eps: need at least 2 subjects");

    const std::size_t L = cm.n_libraries();
    std::vector<int> subj(L), trt(L);
    for (std::size_t l = 0; l < L; ++l) {
        subj[l] = dense.at(*cm.libraries()[l].subject);
        trt[l] = cm.libraries()[l].treatment - 1;
    }

    std::vector<double> per_gene;
    per_gene.reserve(cm.n_genes());
    std::vector<double> lambda(L);
    for (std::size_t i = 0; i < cm.n_genes(); ++i) {
        std::array<double, 2> trt_total{0.0, 0.0};
        for (std::size_t l = 0; l < L; ++l) trt_total[trt[l]] += static_cast<double>(cm(i, l));
        if (trt_total[0] <= 0.0 || trt_total[1] <= 0.0) continue;

        std::array<double, 2> a{0.0, 0.0};
        std::vector<double> e(K, 0.0);
        std::vector<double> precision(K, 0.0);
        for (int round = 0; round < kFitRounds; ++round) {
            // exact coordinate maximum for each treatment level
            for (int j = 0; j < 2; ++j) {
                double mass = 0.0;
                for (std::size_t l = 0; l < L; ++l)
                    if (trt[l] == j) mass += std::exp(e[subj[l]] + rho[l]);
                a[j] = std::log(trt_total[j] / mass);
            }
            // and for each subject effect
            std::fill(precision.begin(), precision.end(), 0.0);
            std::vector<double> score(K, 0.0);
            for (std::size_t l = 0; l < L; ++l) {
                const double lam = std::exp(a[trt[l]] + e[subj[l]] + rho[l]);
                score[subj[l]] += static_cast<double>(cm(i, l)) - lam;
                precision[subj[l]] += lam;
            }
            for (std::size_t k = 0; k < K; ++k)
                e[k] += (score[k] - kSubjectRidge * e[k]) / (precision[k] + kSubjectRidge);
            double centre = 0.0;
            for (double x : e) centre += x;
            centre /= static_cast<double>(K);
            for (double& x : e) x -= centre;
            a[0] += centre;
            a[1] += centre;
        }
        for (std::size_t l = 0; l < L; ++l) lambda[l] = std::exp(a[trt[l]] + e[subj[l]] + rho[l]);

        double ss = 0.0, noise = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            ss += e[k] * e[k];
            double prec = 0.0;
            for (std::size_t l = 0; l < L; ++l)
                if (static_cast<std::size_t>(subj[l]) == k) prec += lambda[l];
            noise += 1.0 / (prec + kSubjectRidge);
        }
        // moment estimate: spread of fitted effects minus their sampling noise
        const double est = ss / static_cast<double>(K - 1) - noise / static_cast<double>(K);
        if (std::isfinite(est)) per_gene.push_back(est);
    }
    if (per_gene.empty()) throw std::invalid_argument("estimate_sigma_eps: no gene has counts in both treatments");

    // mean of unclipped per-gene moments: unbiased, unlike their median
    double mean = 0.0;
    for (double x : per_gene) mean += x;
    mean /= static_cast<double>(per_gene.size());
    return std::max(mean, 1e-6);
}

double estimate_sigma_eps(const CountMatrix& cm) {
    return estimate_sigma_eps(cm, upper_quartile_effects(cm));
}

} // namespace hmmseq
