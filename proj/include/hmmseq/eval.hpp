#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hmmseq {

struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RocCurve {
    std::vector<double> fpr;  // starts at (0, 0), ends at (1, 1)
    std::vector<double> tpr;
    double auc = 0.0;
};

// Sweeps the threshold from high to low; tied scores form a single step.
RocCurve roc_curve(std::span<const double> scores, const std::vector<bool>& truth);

struct CalibrationPoint {
    double nominal = 0.0;
    double observed = 0.0;
    std::size_t n_called = 0;
    std::size_t n_false = 0;
};

// Calls at each nominal level with the posterior expected-FDR rule and scores
// the call set against truth. Empty call sets have observed FDR 0.
std::vector<CalibrationPoint> fdr_calibration(std::span<const double> p_hat, const std::vector<bool>& truth,
                                              std::span<const double> nominal_grid);

// Observed FDR of a call set: false calls / calls, 0 when nothing is called.
double observed_fdr(const std::vector<bool>& called, const std::vector<bool>& truth);

struct OverlapRegion {
    std::uint32_t mask = 0;       // bit k set: region lies inside set k
    std::size_t exclusive = 0;    // in exactly these sets
    std::size_t inclusive = 0;    // in at least these sets (their intersection)
};

// Every nonempty region of the Venn lattice for 2 to 4 named sets, ordered by mask.
std::vector<OverlapRegion> overlap_counts(const std::vector<std::pair<std::string, std::set<std::string>>>& sets);

struct GapCell {
    std::int64_t lo = 0;      // gap values [lo, hi]; hi < 0 means open-ended
    std::int64_t hi = 0;
    double observed = 0.0;
    double expected = 0.0;
};

struct SpatialTestResult {
    std::size_t n_gaps = 0;
    std::size_t n_de = 0;
    std::size_t n_genes = 0;
    double p_hat = 0.0;
    double statistic = 0.0;
    int df = 0;
    double p_value = 1.0;
    std::vector<GapCell> cells;
};

// Inter-DE gaps (non-DE genes between consecutive DE genes) pooled across
// chromosomes; chi-square goodness of fit against Geometric(#DE / #genes)
// with cells merged right to left until every expected count is >= 5.
SpatialTestResult spatial_geometric_test(const std::vector<std::vector<bool>>& calls_by_chromosome,
                                         std::size_t min_gaps = 20);

std::vector<std::int64_t> de_gaps(const std::vector<bool>& calls);

void write_roc(std::ostream& out, const RocCurve& roc);
void write_calibration(std::ostream& out, const std::vector<CalibrationPoint>& points);
void write_overlap(std::ostream& out, const std::vector<std::string>& names, const std::vector<OverlapRegion>& regions);
void write_spatial_report(std::ostream& out, const SpatialTestResult& r);

} // namespace hmmseq
