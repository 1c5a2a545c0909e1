#include "hmmseq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <boost/math/distributions/chi_squared.hpp>

#include "hmmseq/detect.hpp"
#include "hmmseq/samples_io.hpp"

namespace hmmseq {

RocCurve roc_curve(std::span<const double> scores, const std::vector<bool>& truth) {
    if (scores.size() != truth.size()) throw EvalError("roc: scores and truth differ in length");
    const auto n_pos = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), true));
    const std::size_t n_neg = truth.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw EvalError("roc: truth must contain both positives and negatives");
    for (double s : scores)
        if (std::isnan(s)) throw EvalError("roc: NaN score");

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve roc;
    roc.fpr.push_back(0.0);
    roc.tpr.push_back(0.0);
    std::size_t tp = 0, fp = 0;
    for (std::size_t k = 0; k < idx.size();) {
        const double s = scores[idx[k]];
        for (; k < idx.size() && scores[idx[k]] == s; ++k) (truth[idx[k]] ? tp : fp)++;
        const double x = static_cast<double>(fp) / static_cast<double>(n_neg);
        const double y = static_cast<double>(tp) / static_cast<double>(n_pos);
        roc.auc += (x - roc.fpr.back()) * (y + roc.tpr.back()) / 2.0;
        roc.fpr.push_back(x);
        roc.tpr.push_back(y);
    }
    return roc;
}

double observed_fdr(const std::vector<bool>& called, const std::vector<bool>& truth) {
    if (called.size() != truth.size()) throw EvalError("fdr: call mask and truth differ in length");
    std::size_t n = 0, f = 0;
    for (std::size_t i = 0; i < called.size(); ++i) {
        if (!called[i]) continue;
        ++n;
        if (!truth[i]) ++f;
    }
    return n == 0 ? 0.0 : static_cast<double>(f) / static_cast<double>(n);
}

std::vector<CalibrationPoint> fdr_calibration(std::span<const double> p_hat, const std::vector<bool>& truth,
                                              std::span<const double> nominal_grid) {
    if (p_hat.size() != truth.size()) throw EvalError("fdr calibration: p_hat and truth differ in length");
    PosteriorSummary summary(p_hat.size());
    for (std::size_t i = 0; i < p_hat.size(); ++i) summary[i].p_de = p_hat[i];

    std::vector<CalibrationPoint> out;
    for (double q : nominal_grid) {
        const auto mask = call_de(summary, q).called_mask(p_hat.size());
        CalibrationPoint pt;
        pt.nominal = q;
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (!mask[i]) continue;
            ++pt.n_called;
            if (!truth[i]) ++pt.n_false;
        }
        pt.observed = pt.n_called == 0 ? 0.0 : static_cast<double>(pt.n_false) / static_cast<double>(pt.n_called);
        out.push_back(pt);
    }
    return out;
}

std::vector<OverlapRegion> overlap_counts(const std::vector<std::pair<std::string, std::set<std::string>>>& sets) {
    const std::size_t k = sets.size();
    if (k < 2 || k > 4) throw EvalError("overlap: need 2 to 4 call sets, got " + std::to_string(k));
    const std::uint32_t full = (1u << k) - 1;

    std::set<std::string> all;
    for (const auto& [name, s] : sets) all.insert(s.begin(), s.end());
    std::vector<std::size_t> exact(full + 1, 0);
    for (const auto& id : all) {
        std::uint32_t m = 0;
        for (std::size_t j = 0; j < k; ++j)
            if (sets[j].second.count(id)) m |= 1u << j;
        ++exact[m];
    }
    std::vector<OverlapRegion> out;
    for (std::uint32_t m = 1; m <= full; ++m) {
        OverlapRegion r;
        r.mask = m;
        r.exclusive = exact[m];
        for (std::uint32_t sup = m; sup <= full; ++sup)
            if ((sup & m) == m) r.inclusive += exact[sup];
        out.push_back(r);
    }
    return out;
}

std::vector<std::int64_t> de_gaps(const std::vector<bool>& calls) {
    std::vector<std::int64_t> gaps;
    std::int64_t last = -1;
    for (std::size_t i = 0; i < calls.size(); ++i) {
        if (!calls[i]) continue;
        const auto pos = static_cast<std::int64_t>(i);
        if (last >= 0) gaps.push_back(pos - last - 1);
        last = pos;
    }
    return gaps;
}

SpatialTestResult spatial_geometric_test(const std::vector<std::vector<bool>>& calls_by_chromosome,
                                         std::size_t min_gaps) {
    SpatialTestResult r;
    std::vector<std::int64_t> gaps;
    for (const auto& chrom : calls_by_chromosome) {
        r.n_genes += chrom.size();
        r.n_de += static_cast<std::size_t>(std::count(chrom.begin(), chrom.end(), true));
        const auto g = de_gaps(chrom);
        gaps.insert(gaps.end(), g.begin(), g.end());
    }
    r.n_gaps = gaps.size();
    if (r.n_gaps < min_gaps || r.n_gaps == 0)
        throw EvalError("spatial test: insufficient gaps (" + std::to_string(r.n_gaps) + " < " +
                        std::to_string(std::max<std::size_t>(min_gaps, 1)) + ")");
    r.p_hat = static_cast<double>(r.n_de) / static_cast<double>(r.n_genes);
    const double p = r.p_hat;
    const double n = static_cast<double>(r.n_gaps);

    // Singleton cells up to the larger of the largest gap and the point where
    // the geometric tail drops below 5 expected; one open tail cell after that.
    std::int64_t kmax = *std::max_element(gaps.begin(), gaps.end());
    std::int64_t ktail = 0;
    while (n * std::pow(1.0 - p, static_cast<double>(ktail)) >= 5.0 && p < 1.0) ++ktail;
    const std::int64_t top = std::max(kmax, ktail) + 1;

    std::vector<GapCell> raw;
    for (std::int64_t k = 0; k < top; ++k)
        raw.push_back({k, k, 0.0, n * std::pow(1.0 - p, static_cast<double>(k)) * p});
    raw.push_back({top, -1, 0.0, n * std::pow(1.0 - p, static_cast<double>(top))});
    for (std::int64_t g : gaps) raw[static_cast<std::size_t>(std::min(g, top))].observed += 1.0;

    std::vector<GapCell> merged;  // built right to left
    GapCell acc{0, -1, 0.0, 0.0};
    bool open = false;
    for (auto it = raw.rbegin(); it != raw.rend(); ++it) {
        if (!open) {
            acc = *it;
            open = true;
        } else {
            acc.lo = it->lo;
            acc.observed += it->observed;
            acc.expected += it->expected;
        }
        if (acc.expected >= 5.0) {
            merged.push_back(acc);
            open = false;
        }
    }
    if (open) {
        if (merged.empty()) {
            merged.push_back(acc);
        } else {
            merged.back().lo = acc.lo;
            merged.back().observed += acc.observed;
            merged.back().expected += acc.expected;
        }
    }
    std::reverse(merged.begin(), merged.end());
    r.cells = merged;
    r.df = static_cast<int>(merged.size()) - 2;
    if (r.df < 1)
        throw EvalError("spatial test: insufficient gaps to form 3 cells with expectation >= 5");

    for (const auto& c : merged) r.statistic += (c.observed - c.expected) * (c.observed - c.expected) / c.expected;
    const boost::math::chi_squared dist(static_cast<double>(r.df));
    r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
    return r;
}

void write_roc(std::ostream& out, const RocCurve& roc) {
    out << "# auc=" << format_double(roc.auc) << '\n';
    out << "fpr\ttpr\n";
    for (std::size_t i = 0; i < roc.fpr.size(); ++i)
        out << format_double(roc.fpr[i]) << '\t' << format_double(roc.tpr[i]) << '\n';
}

void write_calibration(std::ostream& out, const std::vector<CalibrationPoint>& points) {
    out << "nominal\tobserved\tn_called\tn_false\n";
    for (const auto& p : points)
        out << format_double(p.nominal) << '\t' << format_double(p.observed) << '\t' << p.n_called << '\t' << p.n_false
            << '\n';
}

void write_overlap(std::ostream& out, const std::vector<std::string>& names, const std::vector<OverlapRegion>& regions) {
    out << "region\texclusive\tintersection\n";
    for (const auto& r : regions) {
        std::string label;
        for (std::size_t j = 0; j < names.size(); ++j) {
            if (!(r.mask & (1u << j))) continue;
            if (!label.empty()) label += '&';
            label += names[j];
        }
        out << label << '\t' << r.exclusive << '\t' << r.inclusive << '\n';
    }
}

void write_spatial_report(std::ostream& out, const SpatialTestResult& r) {
    out << "n_genes=" << r.n_genes << '\n';
    out << "n_de=" << r.n_de << '\n';
    out << "n_gaps=" << r.n_gaps << '\n';
    out << "p_hat=" << format_double(r.p_hat) << '\n';
    out << "chi_square=" << format_double(r.statistic) << '\n';
    out << "df=" << r.df << '\n';
    out << "p_value=" << format_double(r.p_value) << '\n';
    out << "cell\tlo\thi\tobserved\texpected\n";
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
        const auto& c = r.cells[i];
        out << i << '\t' << c.lo << '\t' << (c.hi < 0 ? std::string("inf") : std::to_string(c.hi)) << '\t'
            << format_double(c.observed) << '\t' << format_double(c.expected) << '\n';
    }
}

} // namespace hmmseq
