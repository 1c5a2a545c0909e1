#include "hmmseq/modelsel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <ostream>

#include "hmmseq/parallel.hpp"
#include "hmmseq/samples_io.hpp"

namespace hmmseq {

namespace {

std::vector<double> column_means(const std::vector<double>& draws, std::size_t kept, std::size_t width) {
    std::vector<double> mean(width, 0.0);
    if (width == 0) return mean;
    for (std::size_t k = 0; k < kept; ++k)
        for (std::size_t i = 0; i < width; ++i) mean[i] += draws[k * width + i];
    for (double& x : mean) x /= static_cast<double>(kept);
    return mean;
}

} // namespace

double deviance(std::span<const double> beta, std::span<const double> delta, std::span<const double> eps,
                std::size_t n_subjects, const ChromosomeBlock& block) {
    const auto subject_of = eps.empty() ? std::vector<int>{} : block.subject_index();
    double ll = 0.0;
    for (std::size_t i = 0; i < block.n_genes(); ++i) {
        for (std::size_t l = 0; l < block.n_libraries(); ++l) {
            const double sign = block.libraries[l].treatment == 1 ? -1.0 : 1.0;
            const double e = subject_of.empty() ? 0.0 : eps[i * n_subjects + static_cast<std::size_t>(subject_of[l])];
            const double eta = beta[i] + sign * delta[i] + e + block.rho[l];
            const double y = static_cast<double>(block.count(i, l));
            ll += y * eta - std::exp(eta) - std::lgamma(y + 1.0);
        }
    }
    return -2.0 * ll;
}

namespace {

// Per-gene sufficient data for the evidence integral.
struct GeneObs {
    // unpaired: treatment totals and offset masses
    double y1 = 0.0, y2 = 0.0, r1 = 0.0, r2 = 0.0;
    double konst = 0.0;  // sum y * rho - sum log y!
    // paired: raw observations
    std::vector<double> y, rho, sign;
    std::vector<int> subject;
};

class EvidenceCache {
public:
    EvidenceCache(const ChromosomeBlock& block, double eps_var)
        : eps_var_(eps_var), n_subjects_(eps_var > 0.0 ? block.n_subjects() : 0) {
        const auto subject_of = n_subjects_ ? block.subject_index() : std::vector<int>{};
        genes_.resize(block.n_genes());
        for (std::size_t i = 0; i < block.n_genes(); ++i) {
            auto& g = genes_[i];
            for (std::size_t l = 0; l < block.n_libraries(); ++l) {
                const double y = static_cast<double>(block.count(i, l));
                const double rho = block.rho[l];
                const bool t1 = block.libraries[l].treatment == 1;
                (t1 ? g.y1 : g.y2) += y;
                (t1 ? g.r1 : g.r2) += std::exp(rho);
                g.konst += y * rho - std::lgamma(y + 1.0);
                if (n_subjects_) {
                    g.y.push_back(y);
                    g.rho.push_back(rho);
                    g.sign.push_back(t1 ? -1.0 : 1.0);
                    g.subject.push_back(subject_of[l]);
                }
            }
        }
    }

    std::size_t n_genes() const { return genes_.size(); }

    double log_evidence(std::size_t i, const Emission& b, const Emission& d) const {
        return n_subjects_ ? paired(genes_[i], b, d) : unpaired(genes_[i], b, d);
    }

private:
    // Concave objective in (beta, delta); Newton with step halving.
    static double unpaired(const GeneObs& g, const Emission& b, const Emission& d) {
        auto objective = [&](double beta, double delta) {
            const double a = beta - delta, c = beta + delta;
            const double db = beta - b.mean, dd = delta - d.mean;
            return g.y1 * a - g.r1 * std::exp(a) + g.y2 * c - g.r2 * std::exp(c) - 0.5 * db * db / b.var -
                   0.5 * dd * dd / d.var;
        };
        const double l1 = std::log((g.y1 + 0.5) / g.r1), l2 = std::log((g.y2 + 0.5) / g.r2);
        double beta = 0.5 * (l1 + l2), delta = 0.5 * (l2 - l1);
        double f = objective(beta, delta);
        double hbb = 0.0, hdd = 0.0, hbd = 0.0;
        for (int it = 0; it < 100; ++it) {
            const double p1 = g.r1 * std::exp(beta - delta), p2 = g.r2 * std::exp(beta + delta);
            const double gb = (g.y1 - p1) + (g.y2 - p2) - (beta - b.mean) / b.var;
            const double gd = -(g.y1 - p1) + (g.y2 - p2) - (delta - d.mean) / d.var;
            hbb = p1 + p2 + 1.0 / b.var;
            hdd = p1 + p2 + 1.0 / d.var;
            hbd = p2 - p1;
            const double det = hbb * hdd - hbd * hbd;
            double sb = (hdd * gb - hbd * gd) / det, sd = (hbb * gd - hbd * gb) / det;
            double step = 1.0;
            double fn = objective(beta + sb, delta + sd);
            while (!(fn >= f) && step > 1e-8) {
                step *= 0.5;
                fn = objective(beta + step * sb, delta + step * sd);
            }
            beta += step * sb;
            delta += step * sd;
            const bool done = std::abs(step * sb) + std::abs(step * sd) < 1e-10 || fn - f < 1e-13;
            f = fn;
            if (done) break;
        }
        const double p1 = g.r1 * std::exp(beta - delta), p2 = g.r2 * std::exp(beta + delta);
        hbb = p1 + p2 + 1.0 / b.var;
        hdd = p1 + p2 + 1.0 / d.var;
        hbd = p2 - p1;
        return f + g.konst - 0.5 * std::log(b.var) - 0.5 * std::log(d.var) - 0.5 * std::log(hbb * hdd - hbd * hbd);
    }

    double paired(const GeneObs& g, const Emission& b, const Emission& d) const {
        const std::size_t K = n_subjects_, dim = 2 + K;
        const std::size_t L = g.y.size();
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim), var = Eigen::VectorXd::Constant(dim, eps_var_);
        mean(0) = b.mean;
        var(0) = b.var;
        mean(1) = d.mean;
        var(1) = d.var;
        auto eta = [&](const Eigen::VectorXd& x, std::size_t l) {
            return x(0) + g.sign[l] * x(1) + x(2 + g.subject[l]) + g.rho[l];
        };
        auto objective = [&](const Eigen::VectorXd& x) {
            double f = 0.0;
            for (std::size_t l = 0; l < L; ++l) {
                const double e = eta(x, l);
                f += g.y[l] * e - std::exp(e) - g.y[l] * g.rho[l];
            }
            return f - 0.5 * ((x - mean).array().square() / var.array()).sum();
        };
        Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
        const double l1 = std::log((g.y1 + 0.5) / g.r1), l2 = std::log((g.y2 + 0.5) / g.r2);
        x(0) = 0.5 * (l1 + l2);
        x(1) = 0.5 * (l2 - l1);
        Eigen::MatrixXd H(dim, dim);
        Eigen::VectorXd grad(dim);
        auto derivatives = [&](const Eigen::VectorXd& at) {
            H.setZero();
            grad = -((at - mean).array() / var.array()).matrix();
            for (std::size_t j = 0; j < dim; ++j) H(j, j) = 1.0 / var(j);
            for (std::size_t l = 0; l < L; ++l) {
                const double lam = std::exp(eta(at, l));
                const std::size_t idx[3] = {0, 1, 2 + static_cast<std::size_t>(g.subject[l])};
                const double a[3] = {1.0, g.sign[l], 1.0};
                for (int r = 0; r < 3; ++r) {
                    grad(idx[r]) += a[r] * (g.y[l] - lam);
                    for (int c = 0; c < 3; ++c) H(idx[r], idx[c]) += a[r] * a[c] * lam;
                }
            }
        };
        double f = objective(x);
        for (int it = 0; it < 100; ++it) {
            derivatives(x);
            const Eigen::VectorXd s = H.ldlt().solve(grad);
            double step = 1.0;
            double fn = objective(x + s);
            while (!(fn >= f) && step > 1e-8) {
                step *= 0.5;
                fn = objective(x + step * s);
            }
            x += step * s;
            const bool done = step * s.lpNorm<1>() < 1e-10 || fn - f < 1e-13;
            f = fn;
            if (done) break;
        }
        derivatives(x);
        const double logdet = H.ldlt().vectorD().array().log().sum();
        return f + g.konst - 0.5 * var.array().log().sum() - 0.5 * logdet;
    }

    double eps_var_;
    std::size_t n_subjects_;
    std::vector<GeneObs> genes_;
};

// Markov-chain view of a state model: FMMs have every row equal to the weights.
struct ChainLaw {
    std::vector<double> initial;
    std::vector<std::vector<double>> trans;
};

ChainLaw chain_law(const StateModel& m) {
    if (m.kind == StateModelKind::HMM) return {stationary_distribution(m.trans), m.trans};
    return {m.weights, std::vector<std::vector<double>>(m.weights.size(), m.weights)};
}

double integrated_deviance(const EvidenceCache& cache, const StateModel& bm, const StateModel& dm) {
    const ChainLaw lb = chain_law(bm), ld = chain_law(dm);
    const std::size_t mb = bm.n_states(), md = dm.n_states(), m = mb * md;
    std::vector<double> alpha(m), next(m), logg(m);
    double total = 0.0;
    for (std::size_t i = 0; i < cache.n_genes(); ++i) {
        double top = -INFINITY;
        for (std::size_t u = 0; u < mb; ++u)
            for (std::size_t t = 0; t < md; ++t) {
                logg[u * md + t] = cache.log_evidence(i, bm.emissions[u], dm.emissions[t]);
                top = std::max(top, logg[u * md + t]);
            }
        if (i == 0) {
            for (std::size_t u = 0; u < mb; ++u)
                for (std::size_t t = 0; t < md; ++t) next[u * md + t] = lb.initial[u] * ld.initial[t];
        } else {
            for (std::size_t u = 0; u < mb; ++u)
                for (std::size_t t = 0; t < md; ++t) {
                    double s = 0.0;
                    for (std::size_t pu = 0; pu < mb; ++pu)
                        for (std::size_t pt = 0; pt < md; ++pt)
                            s += alpha[pu * md + pt] * lb.trans[pu][u] * ld.trans[pt][t];
                    next[u * md + t] = s;
                }
        }
        double c = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            next[k] *= std::exp(logg[k] - top);
            c += next[k];
        }
        for (std::size_t k = 0; k < m; ++k) alpha[k] = next[k] / c;
        total += std::log(c) + top;
    }
    return -2.0 * total;
}

} // namespace

double gene_log_evidence(const ChromosomeBlock& block, std::size_t gene, const Emission& b, const Emission& d,
                         double eps_var) {
    if (gene >= block.n_genes()) throw std::out_of_range("gene_log_evidence: gene index out of range");
    ChromosomeBlock one = block;
    one.genes = {block.genes[gene]};
    one.counts.assign(block.counts.begin() + static_cast<std::ptrdiff_t>(gene * block.n_libraries()),
                      block.counts.begin() + static_cast<std::ptrdiff_t>((gene + 1) * block.n_libraries()));
    return EvidenceCache(one, eps_var).log_evidence(0, b, d);
}

double integrated_deviance(const ChromosomeBlock& block, const StateModel& beta_model, const StateModel& delta_model,
                           double eps_var) {
    return integrated_deviance(EvidenceCache(block, eps_var), beta_model, delta_model);
}

DicEntry dic_from_samples(const ChainSamples& samples, const ChromosomeBlock& block, DicDeviance kind,
                          double eps_var) {
    const std::size_t kept = samples.n_kept();
    const std::size_t n = samples.n_genes();
    const std::size_t ns = samples.n_subjects;
    if (kept == 0) throw std::invalid_argument("dic: chain has no retained samples");
    if (n != block.n_genes()) throw std::invalid_argument("dic: samples do not match block");

    DicEntry out;
    out.model = samples.model;
    if (kind == DicDeviance::Conditional) {
        for (std::size_t k = 0; k < kept; ++k) {
            std::span<const double> b(samples.beta.data() + k * n, n);
            std::span<const double> d(samples.delta.data() + k * n, n);
            std::span<const double> e = ns ? std::span<const double>(samples.eps.data() + k * n * ns, n * ns)
                                           : std::span<const double>{};
            out.d_bar += deviance(b, d, e, ns, block);
        }
        out.d_bar /= static_cast<double>(kept);
        out.d_hat = deviance(column_means(samples.beta, kept, n), column_means(samples.delta, kept, n),
                             column_means(samples.eps, kept, n * ns), ns, block);
    } else {
        // Averaged state-model parameters can sit between posterior modes, so the
        // plug-in is the retained draw of highest integrated likelihood.
        const EvidenceCache cache(block, ns ? eps_var : 0.0);
        out.d_hat = INFINITY;
        for (std::size_t k = 0; k < kept; ++k) {
            const double d = integrated_deviance(cache, samples.beta_models[k], samples.delta_models[k]);
            out.d_bar += d;
            out.d_hat = std::min(out.d_hat, d);
        }
        out.d_bar /= static_cast<double>(kept);
    }
    out.p_d = out.d_bar - out.d_hat;
    out.dic = out.d_bar + out.p_d;
    out.negative_pd = out.p_d < 0.0;
    return out;
}

const DicEntry& DicReport::entry(ModelChoice m) const {
    for (const auto& e : entries)
        if (e.model == m) return e;
    throw std::out_of_range("DIC report has no entry for model " + to_string(m));
}

ModelChoice select_min_dic(const std::vector<DicEntry>& entries) {
    if (entries.empty()) throw std::invalid_argument("select_min_dic: no entries");
    const DicEntry* best = &entries.front();
    for (const auto& e : entries)
        if (e.dic < best->dic || (e.dic == best->dic && static_cast<int>(e.model) < static_cast<int>(best->model)))
            best = &e;
    return best->model;
}

DicSelection dic_select(const std::vector<ChromosomeBlock>& blocks, const SamplerConfig& cfg, unsigned threads,
                        DicDeviance kind) {
    const std::size_t nb = blocks.size();
    DicSelection sel;
    sel.chains.assign(kAllModels.size(), std::vector<ChainSamples>(nb));
    std::vector<std::vector<DicEntry>> parts(kAllModels.size(), std::vector<DicEntry>(nb));
    parallel_for(kAllModels.size() * nb, threads, [&](std::size_t job) {
        const std::size_t m = job / nb, b = job % nb;
        try {
            sel.chains[m][b] = run_chain(blocks[b], kAllModels[m], cfg);
            parts[m][b] = dic_from_samples(sel.chains[m][b], blocks[b], kind, cfg.sigma_eps2);
        } catch (const std::exception& e) {
            throw ChainError("model " + to_string(kAllModels[m]) + ": " + e.what());
        }
    });
    sel.report = combine_dic(parts, kind);
    return sel;
}

DicReport combine_dic(const std::vector<std::vector<DicEntry>>& per_model_parts, DicDeviance kind) {
    DicReport report;
    report.kind = kind;
    for (const auto& parts : per_model_parts) {
        if (parts.empty()) throw std::invalid_argument("combine_dic: model without entries");
        DicEntry total;
        total.model = parts.front().model;
        for (const auto& p : parts) {
            total.d_bar += p.d_bar;
            total.d_hat += p.d_hat;
        }
        total.p_d = total.d_bar - total.d_hat;
        total.dic = total.d_bar + total.p_d;
        total.negative_pd = total.p_d < 0.0;
        report.entries.push_back(total);
    }
    report.selected = select_min_dic(report.entries);
    return report;
}

DicReport dic_select(const ChromosomeBlock& block, const SamplerConfig& cfg, DicDeviance kind) {
    return dic_select(std::vector<ChromosomeBlock>{block}, cfg, 1, kind).report;
}

void write_dic_report(std::ostream& out, const DicReport& report) {
    out << "deviance=" << (report.kind == DicDeviance::Conditional ? "conditional" : "integrated") << '\n';
    for (const auto& e : report.entries) {
        const auto label = to_string(e.model);
        out << label << ".d_bar=" << format_double(e.d_bar) << '\n';
        out << label << ".d_hat=" << format_double(e.d_hat) << '\n';
        out << label << ".p_d=" << format_double(e.p_d) << '\n';
        out << label << ".dic=" << format_double(e.dic) << '\n';
        if (e.negative_pd) out << label << ".warning=negative_p_d\n";
    }
    out << "selected=" << to_string(report.selected) << '\n';
}

} // namespace hmmseq
