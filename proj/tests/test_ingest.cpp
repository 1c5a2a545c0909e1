#include "doctest.h"

#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "hmmseq/ingest.hpp"

using namespace hmmseq;

namespace {

CountMatrix parse(const std::string& text) {
    std::istringstream in(text);
    return parse_counts(in, "test");
}

CountMatrix make(const std::vector<std::string>& chroms, const std::vector<std::vector<std::int64_t>>& rows) {
    std::vector<GeneMeta> genes;
    std::vector<std::int64_t> counts;
    std::map<std::string, std::int64_t> pos;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        genes.push_back({"g" + std::to_string(i), chroms[i], ++pos[chroms[i]]});
        counts.insert(counts.end(), rows[i].begin(), rows[i].end());
    }
    std::vector<LibraryMeta> libs;
    for (std::size_t l = 0; l < rows.front().size(); ++l)
        libs.push_back({"L" + std::to_string(l), l < rows.front().size() / 2 ? 1 : 2, static_cast<int>(l) + 1, {}});
    return CountMatrix(genes, libs, counts);
}

std::string error_of(const std::string& text) {
    try {
        parse(text);
    } catch (const IngestError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("well-formed file parses to the right shape") {
    const auto cm = parse(
        "gene_id\tchromosome\tposition\ta\tb\tc\td\n"
        "g1\tchr1\t10\t1\t2\t3\t4\n"
        "g2\tchr1\t20\t5\t6\t7\t8\n"
        "g3\tchr2\t5\t0\t0\t1\t9\n");
    CHECK(cm.n_genes() == 3);
    CHECK(cm.n_libraries() == 4);
    CHECK(cm(1, 2) == 7);
    CHECK(cm.genes()[2].chromosome == "chr2");
    CHECK(cm.libraries()[3].name == "d");
}

TEST_CASE("comma-delimited input and comment lines") {
    const auto cm = parse("# produced elsewhere\ngene_id,chromosome,position,a,b\ng1,1,1,3,4\n");
    CHECK(cm.n_genes() == 1);
    CHECK(cm(0, 1) == 4);
}

TEST_CASE("parse errors carry line numbers") {
    const std::string head = "gene_id\tchromosome\tposition\ta\tb\n";
    CHECK(error_of(head + "g1\tc\t1\t1\t-1\n").find("negative count at line 2") != std::string::npos);
    CHECK(error_of(head + "g1\tc\t1\t1\n").find("malformed row at line 2") != std::string::npos);
    CHECK(error_of(head + "g1\tc\t1\t1\t2.5\n").find("non-integer count at line 2") != std::string::npos);
    const auto dup = error_of(head + "g1\tc\t1\t1\t2\ng1\tc\t2\t1\t2\n");
    CHECK(dup.find("duplicate gene id 'g1'") != std::string::npos);
    CHECK(dup.find("line 3") != std::string::npos);
}

TEST_CASE("count matrix invariants") {
    auto cm = make({"1", "1"}, {{1, 2}, {3, 4}});
    CHECK_NOTHROW(cm.validate());
    CHECK_THROWS_AS(CountMatrix(cm.genes(), cm.libraries(), {1, 2, 3}).validate(), IngestError);
    auto libs = cm.libraries();
    libs[0].treatment = 3;
    CHECK_THROWS_AS(CountMatrix(cm.genes(), libs, cm.counts()).validate(), IngestError);
    auto genes = cm.genes();
    genes[1].position = genes[0].position;
    CHECK_THROWS_AS(CountMatrix(genes, cm.libraries(), cm.counts()).validate(), IngestError);
}

TEST_CASE("paired layout requires each subject once per treatment") {
    auto cm = make({"1"}, {{1, 2, 3, 4}});
    auto libs = cm.libraries();
    libs[0].subject = 1;
    libs[1].subject = 2;
    libs[2].subject = 1;
    libs[3].subject = 2;
    CountMatrix ok(cm.genes(), libs, cm.counts());
    CHECK_NOTHROW(ok.validate());
    CHECK(ok.is_paired());
    libs[3].subject = 1;
    CHECK_THROWS_AS(CountMatrix(cm.genes(), libs, cm.counts()).validate(), IngestError);
}

TEST_CASE("filter_low_counts boundary, identity, idempotence and monotonicity") {
    const auto cm = make({"1", "1", "1", "1"}, {{4, 5}, {5, 5}, {0, 0}, {30, 1}});
    const auto f = filter_low_counts(cm, 10);
    REQUIRE(f.n_genes() == 2);
    CHECK(f.genes()[0].id == "g1");  // row sum 10 kept
    CHECK(f.genes()[1].id == "g3");  // row sum 9 dropped
    CHECK(filter_low_counts(cm, 0).n_genes() == cm.n_genes());
    CHECK(filter_low_counts(f, 10).counts() == f.counts());
    std::mt19937_64 rng(3);
    std::vector<std::vector<std::int64_t>> rows(50, std::vector<std::int64_t>(4));
    for (auto& r : rows)
        for (auto& x : r) x = static_cast<std::int64_t>(rng() % 20);
    const auto big = make(std::vector<std::string>(50, "1"), rows);
    std::size_t prev = big.n_genes();
    for (std::int64_t t = 0; t <= 80; t += 5) {
        const auto g = filter_low_counts(big, t);
        CHECK(g.n_genes() <= prev);
        prev = g.n_genes();
        for (std::size_t i = 0; i < g.n_genes(); ++i) CHECK(g.row_total(i) >= t);
    }
}

TEST_CASE("upper-quartile effects") {
    SUBCASE("identical libraries give zero offsets") {
        const auto rho = upper_quartile_effects(make({"1", "1", "1"}, {{1, 1}, {5, 5}, {9, 9}}));
        CHECK(rho[0] == doctest::Approx(0.0));
        CHECK(rho[1] == doctest::Approx(0.0));
    }
    SUBCASE("doubling a library shifts its offset by log 2") {
        const auto rho = upper_quartile_effects(make({"1", "1", "1", "1"}, {{1, 2}, {3, 6}, {7, 14}, {0, 0}}));
        CHECK(rho[1] - rho[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("single library centres to zero") {
        std::vector<GeneMeta> genes{{"g", "1", 1}};
        CountMatrix cm(genes, {{"L", 1, 1, {}}}, {12});
        CHECK(upper_quartile_effects(cm) == std::vector<double>{0.0});
    }
    SUBCASE("all-zero library is rejected") {
        CHECK_THROWS(upper_quartile_effects(make({"1", "1"}, {{1, 0}, {2, 0}})));
    }
    SUBCASE("sum to zero and invariant to an all-zero gene") {
        std::mt19937_64 rng(11);
        std::vector<std::vector<std::int64_t>> rows(40, std::vector<std::int64_t>(6));
        for (auto& r : rows)
            for (auto& x : r) x = static_cast<std::int64_t>(rng() % 500);
        const auto rho = upper_quartile_effects(make(std::vector<std::string>(40, "1"), rows));
        CHECK(std::abs(std::accumulate(rho.begin(), rho.end(), 0.0)) < 1e-12);
        rows.push_back(std::vector<std::int64_t>(6, 0));
        const auto rho0 = upper_quartile_effects(make(std::vector<std::string>(41, "1"), rows));
        for (std::size_t l = 0; l < rho.size(); ++l) CHECK(rho0[l] == doctest::Approx(rho[l]).epsilon(1e-14));
    }
}

TEST_CASE("upper quartile uses the type-7 quantile of nonzero counts") {
    // nonzero counts of library 0: 1,2,3,4,10 -> 75th percentile 4
    // nonzero counts of library 1: 8 (only one) -> 8
    const auto rho = upper_quartile_effects(make({"1", "1", "1", "1", "1", "1"}, {{1, 0}, {2, 0}, {3, 0}, {4, 8}, {10, 0}, {0, 0}}));
    CHECK(rho[1] - rho[0] == doctest::Approx(std::log(8.0 / 4.0)).epsilon(1e-12));
}

TEST_CASE("split_by_chromosome partitions and preserves order") {
    const auto cm = make({"1", "1", "2"}, {{1, 1}, {2, 2}, {3, 3}});
    const std::vector<double> rho{0.1, -0.1};
    const auto blocks = split_by_chromosome(cm, rho);
    REQUIRE(blocks.size() == 2);
    CHECK(blocks[0].n_genes() == 2);
    CHECK(blocks[1].n_genes() == 1);
    CHECK(blocks[1].count(0, 1) == 3);
    CHECK(blocks[0].rho == rho);

    std::vector<std::string> ids;
    for (const auto& b : blocks)
        for (const auto& g : b.genes) ids.push_back(g.id);
    std::vector<std::string> want;
    for (const auto& g : cm.genes()) want.push_back(g.id);
    CHECK(ids == want);

    const auto one = split_by_chromosome(make({"x", "x"}, {{1, 2}, {3, 4}}), {0.0, 0.0});
    REQUIRE(one.size() == 1);
    CHECK(one[0].counts == std::vector<std::int64_t>{1, 2, 3, 4});
}

TEST_CASE("interleaved chromosomes are regrouped by position") {
    std::vector<GeneMeta> genes{{"a", "1", 1}, {"b", "2", 1}, {"c", "1", 2}, {"d", "2", 5}};
    CountMatrix cm(genes, {{"L", 1, 1, {}}}, {1, 2, 3, 4});
    const auto blocks = split_by_chromosome(cm, {0.0});
    REQUIRE(blocks.size() == 2);
    CHECK(blocks[0].genes[1].id == "c");
    CHECK(blocks[1].counts == std::vector<std::int64_t>{2, 4});
}

TEST_CASE("layout round trip and subject indices") {
    auto cm = make({"1"}, {{1, 2, 3, 4}});
    std::vector<LibraryMeta> layout{{"L0", 1, 1, 7}, {"L1", 1, 2, 9}, {"L2", 2, 1, 7}, {"L3", 2, 2, 9}};
    const auto paired = apply_layout(cm, layout);
    CHECK(paired.is_paired());
    const auto blocks = split_by_chromosome(paired, std::vector<double>(4, 0.0));
    CHECK(blocks[0].n_subjects() == 2);
    CHECK(blocks[0].subject_index() == std::vector<int>{0, 1, 0, 1});

    std::ostringstream os;
    write_counts(os, paired);
    std::istringstream is(os.str());
    const auto back = parse_counts(is);
    CHECK(back.counts() == paired.counts());
    CHECK(layout_json(layout).find("\"subject\": 7") != std::string::npos);

    layout.pop_back();
    CHECK_THROWS_AS(apply_layout(cm, layout), IngestError);
}
