#include "hmmseq/samples_io.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace hmmseq {

std::string format_double(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc()) return "nan";
    return std::string(buf, ptr);
}

std::string ArtifactHeader::config_hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(config.dump())));
    return buf;
}

void ArtifactHeader::write(std::ostream& out) const {
    out << "# hmmseq " << kToolVersion << " " << kind << " seed=" << seed << " config_hash=" << config_hash()
        << '\n';
}

nlohmann::json to_json(const SamplerConfig& cfg) {
    return {{"iterations", cfg.iterations},
            {"burn_in", cfg.burn_in},
            {"thinning", cfg.thinning},
            {"delta_sep", cfg.delta_sep},
            {"tau2_shape", cfg.tau2_shape},
            {"tau2_scale", cfg.tau2_scale},
            {"dirichlet_alpha", cfg.dirichlet_alpha},
            {"paired", cfg.paired},
            {"sigma_eps2", cfg.sigma_eps2},
            {"seed", cfg.seed}};
}

SamplerConfig sampler_config_from_json(const nlohmann::json& j, SamplerConfig base) {
    base.iterations = j.value("iterations", base.iterations);
    base.burn_in = j.value("burn_in", base.burn_in);
    base.thinning = j.value("thinning", base.thinning);
    base.delta_sep = j.value("delta_sep", base.delta_sep);
    base.tau2_shape = j.value("tau2_shape", base.tau2_shape);
    base.tau2_scale = j.value("tau2_scale", base.tau2_scale);
    base.dirichlet_alpha = j.value("dirichlet_alpha", base.dirichlet_alpha);
    base.paired = j.value("paired", base.paired);
    base.sigma_eps2 = j.value("sigma_eps2", base.sigma_eps2);
    base.seed = j.value("seed", base.seed);
    return base;
}

void write_samples(std::ostream& out, const std::vector<ChainSamples>& chains) {
    out << "iteration\tgene\th\tdelta\tbeta\ts\n";
    for (const auto& c : chains) {
        const std::size_t n = c.n_genes();
        for (std::size_t k = 0; k < c.n_kept(); ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t at = k * n + i;
                out << c.iterations[k] << '\t' << c.genes[i].id << '\t' << (c.h[at] + 1) << '\t'
                    << format_double(c.delta[at]) << '\t' << format_double(c.beta[at]) << '\t' << (c.s[at] + 1)
                    << '\n';
            }
        }
    }
}

void write_gene_table(std::ostream& out, const std::vector<ChainSamples>& chains) {
    out << "gene_id\tchromosome\tposition\n";
    for (const auto& c : chains)
        for (const auto& g : c.genes) out << g.id << '\t' << g.chromosome << '\t' << g.position << '\n';
}

nlohmann::json run_metadata(const std::vector<ChainSamples>& chains, const SamplerConfig& cfg) {
    nlohmann::json per_chrom = nlohmann::json::array();
    for (const auto& c : chains) {
        per_chrom.push_back({{"chromosome", c.chromosome},
                             {"genes", c.n_genes()},
                             {"kept", c.n_kept()},
                             {"accept_delta", c.mean_accept_delta()},
                             {"accept_beta", c.mean_accept_beta()},
                             {"accept_eps", c.mean_accept_eps()}});
    }
    return {{"tool", "hmmseq"},
            {"version", kToolVersion},
            {"seed", cfg.seed},
            {"model", chains.empty() ? std::string("?") : to_string(chains.front().model)},
            {"config", to_json(cfg)},
            {"chromosomes", per_chrom}};
}

namespace {

std::vector<std::string> split_tab(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find('\t', start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

} // namespace

SampleTally tally_samples(std::istream& samples, std::istream& gene_table) {
    SampleTally t;
    std::unordered_map<std::string, std::size_t> index;
    std::string line;
    bool header = true;
    while (std::getline(gene_table, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        const auto f = split_tab(line);
        if (f.size() != 3) throw std::runtime_error("gene table: malformed row '" + line + "'");
        index[f[0]] = t.genes.size();
        t.genes.push_back({f[0], f[1], std::stoll(f[2])});
    }
    const std::size_t n = t.genes.size();
    t.h_counts.assign(n, {0.0, 0.0, 0.0});
    t.delta_sum.assign(n, 0.0);
    t.beta_sum.assign(n, 0.0);
    t.n.assign(n, 0.0);

    header = true;
    std::size_t line_no = 0;
    while (std::getline(samples, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        const auto f = split_tab(line);
        if (f.size() != 6) throw std::runtime_error("samples: malformed row at line " + std::to_string(line_no));
        auto it = index.find(f[1]);
        if (it == index.end()) throw std::runtime_error("samples: unknown gene '" + f[1] + "'");
        const std::size_t i = it->second;
        const int h = std::stoi(f[2]);
        if (h < 1 || h > 3) throw std::runtime_error("samples: state out of range at line " + std::to_string(line_no));
        t.h_counts[i][h - 1] += 1.0;
        t.delta_sum[i] += std::stod(f[3]);
        t.beta_sum[i] += std::stod(f[4]);
        t.n[i] += 1.0;
    }
    return t;
}

} // namespace hmmseq
