#include "hmmseq/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "hmmseq/samples_io.hpp"

namespace hmmseq {

SimSpec SimSpec::full_scale() { return SimSpec{}; }

SimSpec SimSpec::desk_scale() {
    SimSpec s;
    s.chromosomes = 2;
    s.genes_per_chromosome = 200;
    return s;
}

StateModel SimSpec::beta_model() const {
    return beta_kind(truth) == StateModelKind::HMM ? StateModel::markov(beta_trans, beta_emissions)
                                                   : StateModel::mixture(beta_weights, beta_emissions);
}

StateModel SimSpec::delta_model() const {
    return delta_kind(truth) == StateModelKind::HMM ? StateModel::markov(delta_trans, delta_emissions)
                                                    : StateModel::mixture(delta_weights, delta_emissions);
}

void SimSpec::validate() const {
    if (chromosomes < 1 || genes_per_chromosome < 1 || replicates < 1)
        throw std::invalid_argument("simulation: chromosome, gene and replicate counts must be >= 1");
    if (!rho.empty() && rho.size() != n_libraries())
        throw std::invalid_argument("simulation: rho must have one entry per library");
    if (noise == NoiseKind::NegBinomial && !(nb_shape > 0.0 && nb_scale > 0.0))
        throw std::invalid_argument("simulation: gamma dispersion parameters must be positive");
    if (paired && !(sigma_eps2 >= 0.0)) throw std::invalid_argument("simulation: sigma_eps2 must be >= 0");
    beta_model().validate();
    delta_model().validate();
}

StateSequence simulate_states(const StateModel& model, std::size_t n, Rng& rng) {
    if (n == 0) throw std::invalid_argument("simulate_states: length must be >= 1");
    StateSequence seq(n);
    if (model.kind == StateModelKind::FMM) {
        for (auto& s : seq) s = static_cast<int>(rng.categorical(model.weights));
        return seq;
    }
    const auto initial = stationary_distribution(model.trans);
    seq[0] = static_cast<int>(rng.categorical(initial));
    for (std::size_t i = 1; i < n; ++i) seq[i] = static_cast<int>(rng.categorical(model.trans[seq[i - 1]]));
    return seq;
}

std::int64_t draw_negbin(double mean, double zeta, Rng& rng) {
    if (zeta <= 0.0) return rng.poisson(mean);
    // lambda ~ Gamma(shape r = 1/zeta, scale zeta * mean), so E[lambda] = mean
    const double lambda = rng.gamma(1.0 / zeta, zeta * mean);
    return rng.poisson(lambda);
}

namespace {

SimDataset generate(const SimSpec& spec, NoiseKind noise) {
    spec.validate();
    const std::size_t K = static_cast<std::size_t>(spec.replicates);
    const std::size_t L = spec.n_libraries();
    std::vector<LibraryMeta> libs;
    for (int j = 1; j <= 2; ++j) {
        for (std::size_t k = 1; k <= K; ++k) {
            LibraryMeta lib;
            lib.name = "t" + std::to_string(j) + "_r" + std::to_string(k);
            lib.treatment = j;
            lib.replicate = static_cast<int>(k);
            if (spec.paired) lib.subject = static_cast<int>(k);
            libs.push_back(lib);
        }
    }
    const std::vector<double> rho = spec.rho.empty() ? std::vector<double>(L, 0.0) : spec.rho;
    const StateModel bm = spec.beta_model();
    const StateModel dm = spec.delta_model();

    SimTruth truth;
    std::vector<GeneMeta> genes;
    std::vector<std::int64_t> counts;
    const auto G = static_cast<std::size_t>(spec.genes_per_chromosome);
    for (int c = 1; c <= spec.chromosomes; ++c) {
        const std::string chrom = "chr" + std::to_string(c);
        Rng rng(substream_seed(spec.seed, "simulate:" + chrom));
        const StateSequence s = simulate_states(bm, G, rng);
        const StateSequence h = simulate_states(dm, G, rng);
        for (std::size_t i = 0; i < G; ++i) {
            GeneMeta g;
            char id[32];
            std::snprintf(id, sizeof id, "%s_g%04zu", chrom.c_str(), i + 1);
            g.id = id;
            g.chromosome = chrom;
            g.position = static_cast<std::int64_t>(i + 1);

            const auto& be = bm.emissions[s[i]];
            const auto& de = dm.emissions[h[i]];
            const double beta = rng.normal(be.mean, std::sqrt(be.var));
            const double delta = rng.normal(de.mean, std::sqrt(de.var));
            const double zeta = noise == NoiseKind::NegBinomial ? rng.gamma(spec.nb_shape, spec.nb_scale) : 0.0;
            std::vector<double> eps(K, 0.0);
            if (spec.paired && spec.sigma_eps2 > 0.0)
                for (auto& e : eps) e = rng.normal(0.0, std::sqrt(spec.sigma_eps2));

            for (std::size_t l = 0; l < L; ++l) {
                const double sign = libs[l].treatment == 1 ? -1.0 : 1.0;
                const double e = spec.paired ? eps[static_cast<std::size_t>(libs[l].replicate - 1)] : 0.0;
                const double mean = std::exp(beta + sign * delta + e + rho[l]);
                counts.push_back(noise == NoiseKind::NegBinomial ? draw_negbin(mean, zeta, rng) : rng.poisson(mean));
            }
            truth.s.push_back(s[i]);
            truth.h.push_back(h[i]);
            truth.beta.push_back(beta);
            truth.delta.push_back(delta);
            truth.zeta.push_back(zeta);
            truth.de.push_back(h[i] != 1);
            if (spec.paired) truth.eps.insert(truth.eps.end(), eps.begin(), eps.end());
            genes.push_back(std::move(g));
        }
    }
    truth.genes = genes;
    CountMatrix cm(std::move(genes), std::move(libs), std::move(counts));
    cm.validate();
    return {std::move(cm), std::move(truth)};
}

} // namespace

SimDataset simulate_poisson_dataset(const SimSpec& spec) {
    if (spec.noise != NoiseKind::Poisson) throw std::invalid_argument("simulate_poisson_dataset: spec noise is not Poisson");
    return generate(spec, NoiseKind::Poisson);
}

SimDataset simulate_negbin_dataset(const SimSpec& spec) {
    if (spec.noise != NoiseKind::NegBinomial)
        throw std::invalid_argument("simulate_negbin_dataset: spec noise is not negative binomial");
    return generate(spec, NoiseKind::NegBinomial);
}

SimDataset simulate_dataset(const SimSpec& spec) { return generate(spec, spec.noise); }

GammaFit fit_dispersion_gamma(std::span<const double> dispersions) {
    if (dispersions.size() < 2) throw std::invalid_argument("fit_dispersion_gamma: need at least 2 values");
    double mean = 0.0;
    for (double d : dispersions) {
        if (!(d > 0.0)) throw std::invalid_argument("fit_dispersion_gamma: dispersions must be positive");
        mean += d;
    }
    mean /= static_cast<double>(dispersions.size());
    double var = 0.0;
    for (double d : dispersions) var += (d - mean) * (d - mean);
    var /= static_cast<double>(dispersions.size() - 1);
    if (!(var > 0.0)) throw std::invalid_argument("fit_dispersion_gamma: zero variance gives a degenerate gamma");
    return {mean * mean / var, var / mean};
}

void write_truth(std::ostream& out, const SimTruth& truth) {
    out << "gene_id\ts\th\tbeta\tdelta\tzeta\tde\n";
    for (std::size_t i = 0; i < truth.genes.size(); ++i) {
        out << truth.genes[i].id << '\t' << (truth.s[i] + 1) << '\t' << (truth.h[i] + 1) << '\t'
            << format_double(truth.beta[i]) << '\t' << format_double(truth.delta[i]) << '\t'
            << format_double(truth.zeta[i]) << '\t' << (truth.de[i] ? 1 : 0) << '\n';
    }
}

std::vector<std::pair<std::string, bool>> read_truth_de(std::istream& in) {
    std::vector<std::pair<std::string, bool>> out;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        std::istringstream ss(line);
        std::vector<std::string> f;
        std::string field;
        while (std::getline(ss, field, '\t')) f.push_back(field);
        if (f.size() != 7) throw std::runtime_error("truth file: malformed row '" + line + "'");
        out.emplace_back(f[0], f[6] == "1");
    }
    return out;
}

} // namespace hmmseq
