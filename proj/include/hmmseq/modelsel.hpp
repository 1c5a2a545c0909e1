#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

#include "hmmseq/ingest.hpp"
#include "hmmseq/sampler.hpp"

namespace hmmseq {

// -2 * Poisson log-likelihood of the block at (beta, delta, eps). `eps` is
// genes x n_subjects row-major, or empty for unpaired designs.
double deviance(std::span<const double> beta, std::span<const double> delta, std::span<const double> eps,
                std::size_t n_subjects, const ChromosomeBlock& block);

// Laplace approximation of log p(Y_i | beta ~ N(b), delta ~ N(d), eps_k ~ N(0, eps_var)).
// eps_var is ignored for unpaired blocks.
double gene_log_evidence(const ChromosomeBlock& block, std::size_t gene, const Emission& b, const Emission& d,
                         double eps_var);

// -2 log p(Y | state models): gene-level parameters integrated by Laplace,
// the joint (s, h) chain summed out by a scaled forward recursion.
double integrated_deviance(const ChromosomeBlock& block, const StateModel& beta_model, const StateModel& delta_model,
                           double eps_var);

// Deviance used for model comparison.
//  Conditional: Poisson deviance given (beta, delta, eps); theta-bar is their posterior mean.
//  Integrated: -2 log p(Y | P or A, Q or B, mu, sigma^2, phi, tau^2); the plug-in is
//              the retained draw of those parameters with the smallest deviance.
enum class DicDeviance { Conditional, Integrated };

struct DicEntry {
    ModelChoice model = ModelChoice::FF;
    double d_bar = 0.0;    // posterior mean deviance
    double d_hat = 0.0;    // deviance at the posterior mean
    double p_d = 0.0;
    double dic = 0.0;
    bool negative_pd = false;
};

DicEntry dic_from_samples(const ChainSamples& samples, const ChromosomeBlock& block,
                          DicDeviance kind = DicDeviance::Integrated, double eps_var = 0.0);

struct DicReport {
    std::vector<DicEntry> entries;   // one per fitted model, in FF, FH, HF, HH order
    ModelChoice selected = ModelChoice::FF;
    DicDeviance kind = DicDeviance::Integrated;

    const DicEntry& entry(ModelChoice m) const;
};

// Lowest DIC wins; exact ties go to the earliest label.
ModelChoice select_min_dic(const std::vector<DicEntry>& entries);

struct DicSelection {
    DicReport report;
    std::vector<std::vector<ChainSamples>> chains;  // [model][chromosome]
};

// Fits all four models on every block and selects on DIC summed over
// chromosomes. Chains run on up to `threads` workers.
DicSelection dic_select(const std::vector<ChromosomeBlock>& blocks, const SamplerConfig& cfg, unsigned threads,
                        DicDeviance kind = DicDeviance::Integrated);
DicReport dic_select(const ChromosomeBlock& block, const SamplerConfig& cfg,
                     DicDeviance kind = DicDeviance::Integrated);

// Sums per-chromosome entries of each model and picks the minimum.
DicReport combine_dic(const std::vector<std::vector<DicEntry>>& per_model_parts, DicDeviance kind);

void write_dic_report(std::ostream& out, const DicReport& report);

} // namespace hmmseq
