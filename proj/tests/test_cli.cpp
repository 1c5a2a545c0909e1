#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hmmseq/cli.hpp"
#include "hmmseq/detect.hpp"

using namespace hmmseq;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_command(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("hmmseq_cli_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<std::string> small_sim(const fs::path& dir, const std::string& seed) {
    return {"simulate", "--chromosomes", "2", "--genes", "120", "--replicates", "3",
            "--seed", seed, "--out-dir", dir.string()};
}

std::vector<std::string> short_fit(const fs::path& in, const fs::path& out) {
    return {"fit", "--input", (in / "counts.tsv").string(), "--layout", (in / "layout.json").string(),
            "--iters", "400", "--burnin", "200", "--thin", "5", "--seed", "3", "--out-dir", out.string()};
}

} // namespace

TEST_CASE("simulate is byte-identical for a fixed seed") {
    const auto a = scratch("sim_a"), b = scratch("sim_b"), c = scratch("sim_c");
    REQUIRE(run(small_sim(a, "9")).code == 0);
    REQUIRE(run(small_sim(b, "9")).code == 0);
    REQUIRE(run(small_sim(c, "10")).code == 0);
    for (const char* f : {"counts.tsv", "truth.tsv", "layout.json"}) {
        CHECK(slurp(a / f) == slurp(b / f));
        CHECK(!slurp(a / f).empty());
    }
    CHECK(slurp(a / "counts.tsv") != slurp(c / "counts.tsv"));
    CHECK(slurp(a / "counts.tsv").rfind("# hmmseq 1.0.0 counts seed=9", 0) == 0);
}

TEST_CASE("fit, detect, eval and spatial-test pipeline") {
    const auto sim = scratch("pipe_sim"), fit = scratch("pipe_fit"), det = scratch("pipe_det"),
               ev = scratch("pipe_eval");
    REQUIRE(run(small_sim(sim, "4")).code == 0);
    const auto f = run(short_fit(sim, fit));
    REQUIRE_MESSAGE(f.code == 0, f.err);
    for (const char* name : {"samples.tsv", "genes.tsv", "run_meta.json"}) CHECK(fs::exists(fit / name));

    const auto d = run({"detect", "--input", fit.string(), "--q0", "0.05", "--out-dir", det.string()});
    REQUIRE_MESSAGE(d.code == 0, d.err);
    std::ifstream table(det / "detect.tsv");
    const auto rows = read_detection_table(table);
    CHECK(rows.size() > 200);
    std::ifstream calls(det / "calls.txt");
    std::string line;
    std::size_t n_calls = 0;
    bool header_seen = false;
    while (std::getline(calls, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            CHECK(line == "gene_id");
            header_seen = true;
            continue;
        }
        ++n_calls;
    }
    std::size_t flagged = 0;
    for (const auto& r : rows) flagged += r.called;
    CHECK(n_calls == flagged);
    CHECK(n_calls > 0);

    const auto e = run({"eval", "--input", (det / "detect.tsv").string(), "--truth", (sim / "truth.tsv").string(),
                        "--q0-grid", "0.05,0.1", "--out-dir", ev.string()});
    REQUIRE_MESSAGE(e.code == 0, e.err);
    for (const char* name : {"roc.tsv", "fdr_calibration.tsv", "roc.svg", "fdr_calibration.svg", "overlap.tsv"})
        CHECK(fs::exists(ev / name));
    CHECK(slurp(ev / "overlap.tsv").find("hmmseq&truth") != std::string::npos);

    const auto s = run({"spatial-test", "--input", (det / "detect.tsv").string(), "--out-dir", ev.string()});
    if (s.code == 0) {
        CHECK(slurp(ev / "spatial_report.txt").find("p_value=") != std::string::npos);
    } else {
        CHECK(s.err.rfind("hmmseq eval: insufficient gaps", 0) == 0);
    }

    // rerun with the same seed and config: byte-identical artifacts
    const auto fit2 = scratch("pipe_fit2"), det2 = scratch("pipe_det2");
    REQUIRE(run(short_fit(sim, fit2)).code == 0);
    REQUIRE(run({"detect", "--input", fit2.string(), "--out-dir", det2.string()}).code == 0);
    CHECK(slurp(fit / "samples.tsv") == slurp(fit2 / "samples.tsv"));
    CHECK(slurp(det / "detect.tsv") == slurp(det2 / "detect.tsv"));
}

TEST_CASE("select writes a report naming a model") {
    const auto sim = scratch("sel_sim"), out = scratch("sel_out");
    REQUIRE(run({"simulate", "--chromosomes", "1", "--genes", "60", "--replicates", "2", "--out-dir", sim.string()})
                .code == 0);
    const auto r = run({"select", "--input", (sim / "counts.tsv").string(), "--layout", (sim / "layout.json").string(),
                        "--iters", "200", "--burnin", "100", "--thin", "5", "--out-dir", out.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto report = slurp(out / "dic_report.txt");
    CHECK(report.find("deviance=integrated") != std::string::npos);
    const auto at = report.find("selected=");
    REQUIRE(at != std::string::npos);
    const auto label = report.substr(at + 9, 2);
    CHECK((label == "FF" || label == "FH" || label == "HF" || label == "HH"));
    for (const char* m : {"FF.dic=", "FH.dic=", "HF.dic=", "HH.dic="}) CHECK(report.find(m) != std::string::npos);
}

TEST_CASE("paired designs fit with an estimated subject variance") {
    const auto sim = scratch("pair_sim"), out = scratch("pair_fit");
    REQUIRE(run({"simulate", "--chromosomes", "1", "--genes", "60", "--replicates", "3", "--paired", "--out-dir",
                 sim.string()})
                .code == 0);
    const auto r = run({"fit", "--input", (sim / "counts.tsv").string(), "--layout", (sim / "layout.json").string(),
                        "--paired", "--iters", "100", "--burnin", "50", "--thin", "5", "--out-dir", out.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(slurp(out / "run_meta.json").find("sigma_eps2") != std::string::npos);
}

TEST_CASE("config file values apply and flags override them") {
    const auto dir = scratch("cfg");
    std::ofstream(dir / "run.toml") << "[simulate]\nseed = 21\ngenes = 30\nchromosomes = 1\nreplicates = 2\n";
    const auto a = dir / "a", b = dir / "b", c = dir / "c";
    REQUIRE(run({"--config", (dir / "run.toml").string(), "simulate", "--out-dir", a.string()}).code == 0);
    REQUIRE(run({"simulate", "--seed", "21", "--genes", "30", "--chromosomes", "1", "--replicates", "2", "--out-dir",
                 b.string()})
                .code == 0);
    REQUIRE(run({"--config", (dir / "run.toml").string(), "simulate", "--seed", "22", "--out-dir", c.string()}).code ==
            0);
    CHECK(slurp(a / "counts.tsv") == slurp(b / "counts.tsv"));
    CHECK(slurp(a / "counts.tsv") != slurp(c / "counts.tsv"));
}

TEST_CASE("failures are one module-qualified line") {
    const auto dir = scratch("err");
    auto one_line = [](const Run& r) { return r.err.find('\n') == r.err.size() - 1; };

    const auto missing = run({"fit", "--input", (dir / "nope.tsv").string(), "--out-dir", dir.string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.rfind("hmmseq ingest: ", 0) == 0);
    CHECK(one_line(missing));

    std::ofstream(dir / "bad.tsv") << "gene_id\tchromosome\tposition\ta\tb\ng1\t1\t1\t5\t-2\n";
    const auto bad = run({"fit", "--input", (dir / "bad.tsv").string(), "--out-dir", dir.string()});
    CHECK(bad.code == 1);
    CHECK(bad.err.rfind("hmmseq ingest: ", 0) == 0);
    CHECK(bad.err.find("negative count at line 2") != std::string::npos);

    const auto flag = run({"simulate", "--no-such-flag"});
    CHECK(flag.code != 0);
    CHECK(flag.err.rfind("hmmseq cli: ", 0) == 0);

    const auto q0 = run({"detect", "--input", dir.string(), "--q0", "1.5", "--out-dir", dir.string()});
    CHECK(q0.code == 1);
    CHECK(q0.err.rfind("hmmseq detect: ", 0) == 0);

    const auto model = run({"simulate", "--truth-model", "XY", "--out-dir", dir.string()});
    CHECK(model.code == 1);
    CHECK(model.err.rfind("hmmseq simulate: ", 0) == 0);
    CHECK(one_line(model));

    CHECK(run({}).code != 0);
}
