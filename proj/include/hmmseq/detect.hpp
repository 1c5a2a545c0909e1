#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "hmmseq/ingest.hpp"
#include "hmmseq/sampler.hpp"
#include "hmmseq/samples_io.hpp"

namespace hmmseq {

struct GenePosterior {
    GeneMeta gene;
    double p_de = 0.0;      // P(h in {under, over})
    double p_under = 0.0;
    double p_over = 0.0;
    double mean_delta = 0.0;
    double mean_beta = 0.0;
};

// Genes in chromosome-block order, positions ascending within a block.
using PosteriorSummary = std::vector<GenePosterior>;

PosteriorSummary posterior_de_prob(const ChainSamples& samples);
PosteriorSummary posterior_de_prob(const std::vector<ChainSamples>& chains);
PosteriorSummary posterior_de_prob(const SampleTally& tally);

// Posterior expected FDR of calling the top d genes, d = 1..N, after a stable
// sort of p_hat in decreasing order.
std::vector<double> expected_fdr_path(std::span<const double> p_hat);

// Indices sorting p_hat decreasingly; ties keep input order.
std::vector<std::size_t> rank_order(std::span<const double> p_hat);

struct DetectionResult {
    std::vector<std::size_t> order;   // summary indices by decreasing p_de
    std::vector<double> fdr_path;     // FDR-hat_d along `order`
    std::size_t n_called = 0;         // top n_called genes of `order` are called
    double q0 = 0.05;

    std::vector<bool> called_mask(std::size_t n_genes) const;
};

DetectionResult call_de(const PosteriorSummary& summary, double q0);

// One row per gene in rank order: gene_id, chromosome, position, p_de, p_under,
// p_over, mean_delta, mean_beta, rank, fdr_hat, called.
void write_detection_table(std::ostream& out, const PosteriorSummary& summary, const DetectionResult& result);

struct DetectionRow {
    GenePosterior posterior;
    std::size_t rank = 0;
    double fdr_hat = 0.0;
    bool called = false;
};
std::vector<DetectionRow> read_detection_table(std::istream& in);

} // namespace hmmseq
