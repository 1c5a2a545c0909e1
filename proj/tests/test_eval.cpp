#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "hmmseq/eval.hpp"
#include "hmmseq/plot.hpp"

using namespace hmmseq;

namespace {

// P(score of a random positive > random negative) + 0.5 P(tie), by all pairs.
double mann_whitney_auc(const std::vector<double>& s, const std::vector<bool>& t) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (t[i] && !t[j]) {
                pairs += 1.0;
                wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
    return wins / pairs;
}

// Bernoulli(p) calls of length n.
std::vector<bool> iid_calls(std::size_t n, double p, std::mt19937_64& gen) {
    std::bernoulli_distribution b(p);
    std::vector<bool> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = b(gen);
    return c;
}

} // namespace

TEST_CASE("ROC of a perfect ranking and of constant scores") {
    const std::vector<bool> truth{true, true, false, false, false};
    const auto perfect = roc_curve(std::vector<double>{0.9, 0.8, 0.3, 0.2, 0.1}, truth);
    CHECK(perfect.auc == doctest::Approx(1.0));
    CHECK(perfect.fpr.front() == 0.0);
    CHECK(perfect.tpr.front() == 0.0);
    CHECK(perfect.fpr.back() == 1.0);
    CHECK(perfect.tpr.back() == 1.0);
    const auto tied = roc_curve(std::vector<double>(5, 0.5), truth);
    CHECK(tied.auc == doctest::Approx(0.5));
    CHECK(tied.fpr.size() == 2);
    const auto reversed = roc_curve(std::vector<double>{0.1, 0.2, 0.3, 0.8, 0.9}, truth);
    CHECK(reversed.auc == doctest::Approx(0.0));
}

TEST_CASE("AUC equals the Mann-Whitney statistic") {
    std::mt19937_64 gen(12);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int rep = 0; rep < 30; ++rep) {
        const std::size_t n = 20 + gen() % 80;
        std::vector<double> s(n);
        std::vector<bool> t(n);
        for (std::size_t i = 0; i < n; ++i) {
            t[i] = i % 3 == 0;
            // coarse rounding forces ties
            s[i] = std::round(4.0 * (z(gen) + (t[i] ? 1.0 : 0.0))) / 4.0;
        }
        const auto roc = roc_curve(s, t);
        CHECK(roc.auc == doctest::Approx(mann_whitney_auc(s, t)).epsilon(1e-12));
        for (std::size_t k = 1; k < roc.fpr.size(); ++k) {
            CHECK(roc.fpr[k] >= roc.fpr[k - 1]);
            CHECK(roc.tpr[k] >= roc.tpr[k - 1]);
        }
    }
}

TEST_CASE("ROC input validation") {
    CHECK_THROWS_AS(roc_curve(std::vector<double>{0.1, 0.2}, {true}), EvalError);
    CHECK_THROWS_AS(roc_curve(std::vector<double>{0.1, 0.2}, {true, true}), EvalError);
    CHECK_THROWS_AS(roc_curve(std::vector<double>{0.1, NAN}, {true, false}), EvalError);
}

TEST_CASE("observed FDR and calibration") {
    CHECK(observed_fdr({false, false}, {true, false}) == 0.0);
    CHECK(observed_fdr({true, true, true, false}, {true, false, true, true}) == doctest::Approx(1.0 / 3.0));

    // certain genes that are truly DE: nothing false at any level
    const std::vector<double> p{1.0, 1.0, 1.0, 0.0, 0.0};
    const std::vector<bool> truth{true, true, true, false, false};
    const std::vector<double> grid{0.01, 0.05, 0.3};
    const auto pts = fdr_calibration(p, truth, grid);
    REQUIRE(pts.size() == 3);
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(pts[k].n_called == 3);
        CHECK(pts[k].observed == 0.0);
    }
    // FDR-hat_4 = 1/4 < 0.3 <= FDR-hat_5 = 2/5
    CHECK(pts[2].n_called == 4);
    CHECK(pts[2].n_false == 1);
    CHECK(pts[2].observed == doctest::Approx(0.25));

    // empty call sets report 0
    const auto none = fdr_calibration(std::vector<double>{0.5, 0.4}, {true, false}, std::vector<double>{0.01});
    CHECK(none[0].n_called == 0);
    CHECK(none[0].observed == 0.0);

    // a confidently wrong ranking: called gene is false
    const auto bad = fdr_calibration(std::vector<double>{0.99, 0.1}, {false, true}, std::vector<double>{0.05});
    CHECK(bad[0].n_called == 1);
    CHECK(bad[0].observed == 1.0);
}

TEST_CASE("calibrated probabilities give calibrated FDR") {
    std::mt19937_64 gen(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t n = 200000;
    std::vector<double> p(n);
    std::vector<bool> t(n);
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = std::pow(u(gen), 0.3);
        t[i] = u(gen) < p[i];
    }
    const std::vector<double> grid{0.05, 0.1, 0.2};
    for (const auto& c : fdr_calibration(p, t, grid)) CHECK(c.observed == doctest::Approx(c.nominal).epsilon(0.1));
}

TEST_CASE("Venn region counts match brute force") {
    std::mt19937_64 gen(4);
    for (std::size_t k = 2; k <= 4; ++k) {
        std::vector<std::pair<std::string, std::set<std::string>>> sets(k);
        for (std::size_t j = 0; j < k; ++j) {
            sets[j].first = "S" + std::to_string(j);
            for (int e = 0; e < 60; ++e)
                if (gen() % 2) sets[j].second.insert("e" + std::to_string(e));
        }
        const auto regions = overlap_counts(sets);
        REQUIRE(regions.size() == (1u << k) - 1);
        for (const auto& r : regions) {
            std::size_t excl = 0, incl = 0;
            for (int e = 0; e < 60; ++e) {
                const std::string id = "e" + std::to_string(e);
                std::uint32_t member = 0;
                for (std::size_t j = 0; j < k; ++j)
                    if (sets[j].second.count(id)) member |= 1u << j;
                excl += member == r.mask;
                incl += (member & r.mask) == r.mask;
            }
            CHECK(r.exclusive == excl);
            CHECK(r.inclusive == incl);
        }
    }
    CHECK_THROWS_AS(overlap_counts({{"a", {}}}), EvalError);
}

TEST_CASE("overlap table labels") {
    const auto regions = overlap_counts({{"x", {"1", "2"}}, {"y", {"2", "3"}}});
    std::ostringstream os;
    write_overlap(os, {"x", "y"}, regions);
    CHECK(os.str().find("x&y\t1\t1") != std::string::npos);
    CHECK(os.str().find("x\t1\t2") != std::string::npos);
}

TEST_CASE("DE gaps") {
    CHECK(de_gaps({false, true, false, false, true, true, false, true, false}) == std::vector<std::int64_t>{2, 0, 1});
    CHECK(de_gaps({true}).empty());
    CHECK(de_gaps({false, false}).empty());
}

TEST_CASE("spatial test under the geometric null") {
    std::mt19937_64 gen(77);
    int rejected = 0;
    const int reps = 300;
    for (int r = 0; r < reps; ++r) {
        const auto res = spatial_geometric_test({iid_calls(1500, 0.2, gen), iid_calls(1000, 0.2, gen)});
        CHECK(res.df >= 1);
        CHECK(res.p_value >= 0.0);
        CHECK(res.p_value <= 1.0);
        for (const auto& c : res.cells) CHECK(c.expected >= 5.0);
        rejected += res.p_value < 0.05;
    }
    // binomial sd at 300 reps is 0.013
    CHECK(static_cast<double>(rejected) / reps == doctest::Approx(0.05).epsilon(0.8));
}

TEST_CASE("spatial test detects clustered calls") {
    std::mt19937_64 gen(5);
    std::vector<bool> calls;
    while (calls.size() < 3000) {
        const bool de = gen() % 4 == 0;
        const std::size_t run = de ? 5 + gen() % 10 : 20 + gen() % 40;
        calls.insert(calls.end(), run, de);
    }
    const auto res = spatial_geometric_test({calls});
    CHECK(res.p_value < 1e-6);
}

TEST_CASE("spatial test degenerate inputs") {
    CHECK_THROWS_AS(spatial_geometric_test({std::vector<bool>(100, false)}), EvalError);
    std::vector<bool> one(100, false);
    one[40] = true;
    CHECK_THROWS_AS(spatial_geometric_test({one}), EvalError);
    // every gene DE: all gaps zero, no cells to compare
    CHECK_THROWS_AS(spatial_geometric_test({std::vector<bool>(100, true)}), EvalError);
}

TEST_CASE("spatial test cell accounting") {
    std::mt19937_64 gen(2);
    const auto res = spatial_geometric_test({iid_calls(2000, 0.3, gen)});
    double obs = 0.0, exp = 0.0;
    for (const auto& c : res.cells) {
        obs += c.observed;
        exp += c.expected;
    }
    CHECK(obs == doctest::Approx(static_cast<double>(res.n_gaps)));
    CHECK(exp == doctest::Approx(static_cast<double>(res.n_gaps)).epsilon(1e-9));
    CHECK(res.cells.back().hi < 0);
    CHECK(res.df == static_cast<int>(res.cells.size()) - 2);
    std::ostringstream os;
    write_spatial_report(os, res);
    CHECK(os.str().find("p_value=") != std::string::npos);
}

TEST_CASE("SVG plots are well formed") {
    const auto roc = roc_curve(std::vector<double>{0.9, 0.1, 0.5}, {true, false, true});
    const auto svg = roc_svg(roc, "ROC");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("<polyline") != std::string::npos);
    std::vector<CalibrationPoint> pts{{0.05, 0.04, 10, 0}, {0.1, 0.12, 20, 2}};
    CHECK(calibration_svg(pts, "FDR").find("<circle") != std::string::npos);
}
