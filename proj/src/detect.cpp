#include "hmmseq/detect.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace hmmseq {

PosteriorSummary posterior_de_prob(const ChainSamples& samples) {
    const std::size_t n = samples.n_genes();
    const std::size_t kept = samples.n_kept();
    if (kept == 0) throw std::invalid_argument("posterior_de_prob: chain has no retained samples");
    PosteriorSummary out(n);
    for (std::size_t i = 0; i < n; ++i) out[i].gene = samples.genes[i];
    for (std::size_t k = 0; k < kept; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t at = k * n + i;
            if (samples.h[at] == 0) out[i].p_under += 1.0;
            if (samples.h[at] == 2) out[i].p_over += 1.0;
            out[i].mean_delta += samples.delta[at];
            out[i].mean_beta += samples.beta[at];
        }
    }
    const double inv = 1.0 / static_cast<double>(kept);
    for (auto& g : out) {
        g.p_under *= inv;
        g.p_over *= inv;
        g.p_de = g.p_under + g.p_over;
        g.mean_delta *= inv;
        g.mean_beta *= inv;
    }
    return out;
}

PosteriorSummary posterior_de_prob(const std::vector<ChainSamples>& chains) {
    PosteriorSummary out;
    for (const auto& c : chains) {
        auto part = posterior_de_prob(c);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

PosteriorSummary posterior_de_prob(const SampleTally& tally) {
    PosteriorSummary out(tally.genes.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (tally.n[i] <= 0.0)
            throw std::invalid_argument("posterior_de_prob: gene '" + tally.genes[i].id + "' has no samples");
        const double inv = 1.0 / tally.n[i];
        out[i].gene = tally.genes[i];
        out[i].p_under = tally.h_counts[i][0] * inv;
        out[i].p_over = tally.h_counts[i][2] * inv;
        out[i].p_de = out[i].p_under + out[i].p_over;
        out[i].mean_delta = tally.delta_sum[i] * inv;
        out[i].mean_beta = tally.beta_sum[i] * inv;
    }
    return out;
}

std::vector<std::size_t> rank_order(std::span<const double> p_hat) {
    std::vector<std::size_t> order(p_hat.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_hat[a] > p_hat[b]; });
    return order;
}

std::vector<double> expected_fdr_path(std::span<const double> p_hat) {
    const auto order = rank_order(p_hat);
    std::vector<double> path(order.size());
    double miss = 0.0;
    for (std::size_t d = 0; d < order.size(); ++d) {
        miss += 1.0 - p_hat[order[d]];
        path[d] = miss / static_cast<double>(d + 1);
    }
    return path;
}

std::vector<bool> DetectionResult::called_mask(std::size_t n_genes) const {
    std::vector<bool> mask(n_genes, false);
    for (std::size_t d = 0; d < n_called; ++d) mask[order[d]] = true;
    return mask;
}

DetectionResult call_de(const PosteriorSummary& summary, double q0) {
    if (!(q0 > 0.0 && q0 < 1.0)) throw std::invalid_argument("call_de: q0 must lie in (0, 1)");
    std::vector<double> p(summary.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = summary[i].p_de;
    DetectionResult r;
    r.q0 = q0;
    r.order = rank_order(p);
    r.fdr_path = expected_fdr_path(p);
    for (std::size_t d = 0; d < r.fdr_path.size(); ++d)
        if (r.fdr_path[d] < q0) r.n_called = d + 1;
    return r;
}

void write_detection_table(std::ostream& out, const PosteriorSummary& summary, const DetectionResult& result) {
    out << "gene_id\tchromosome\tposition\tp_de\tp_under\tp_over\tmean_delta\tmean_beta\trank\tfdr_hat\tcalled\n";
    for (std::size_t d = 0; d < result.order.size(); ++d) {
        const auto& g = summary[result.order[d]];
        out << g.gene.id << '\t' << g.gene.chromosome << '\t' << g.gene.position << '\t' << format_double(g.p_de)
            << '\t' << format_double(g.p_under) << '\t' << format_double(g.p_over) << '\t'
            << format_double(g.mean_delta) << '\t' << format_double(g.mean_beta) << '\t' << (d + 1) << '\t'
            << format_double(result.fdr_path[d]) << '\t' << (d < result.n_called ? 1 : 0) << '\n';
    }
}

std::vector<DetectionRow> read_detection_table(std::istream& in) {
    std::vector<DetectionRow> rows;
    std::string line;
    bool header = true;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        std::istringstream ss(line);
        std::vector<std::string> f;
        std::string field;
        while (std::getline(ss, field, '\t')) f.push_back(field);
        if (f.size() != 11) throw std::runtime_error("detection table: malformed row at line " + std::to_string(line_no));
        DetectionRow r;
        r.posterior.gene = {f[0], f[1], std::stoll(f[2])};
        r.posterior.p_de = std::stod(f[3]);
        r.posterior.p_under = std::stod(f[4]);
        r.posterior.p_over = std::stod(f[5]);
        r.posterior.mean_delta = std::stod(f[6]);
        r.posterior.mean_beta = std::stod(f[7]);
        r.rank = std::stoul(f[8]);
        r.fdr_hat = std::stod(f[9]);
        r.called = f[10] == "1";
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace hmmseq
