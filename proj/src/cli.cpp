#include "hmmseq/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "hmmseq/detect.hpp"
#include "hmmseq/eval.hpp"
#include "hmmseq/ingest.hpp"
#include "hmmseq/modelsel.hpp"
#include "hmmseq/parallel.hpp"
#include "hmmseq/plot.hpp"
#include "hmmseq/sampler.hpp"
#include "hmmseq/samples_io.hpp"
#include "hmmseq/simulate.hpp"

namespace hmmseq {

namespace fs = std::filesystem;

namespace {

// Error raised by the CLI itself (bad paths, inconsistent options).
struct CliError : std::runtime_error {
    CliError(std::string module, const std::string& msg) : std::runtime_error(msg), module(std::move(module)) {}
    std::string module;
};

struct CommonOptions {
    std::uint64_t seed = 1;
    int threads = 0;
    std::string out_dir = ".";
};

struct FitOptions {
    std::string input;
    std::string layout;
    std::string model = "HH";
    bool paired = false;
    std::optional<double> sigma_eps2;
    int iters = 100000;
    int burnin = 50000;
    int thin = 10;
    std::int64_t min_count = 10;
    std::string deviance = "integrated";
};

struct SimOptions {
    std::string preset = "desk";
    std::string truth = "HH";
    std::string noise = "poisson";
    bool paired = false;
    double sigma_eps2 = 0.1;
    std::optional<int> chromosomes;
    std::optional<int> genes;
    std::optional<int> replicates;
};

struct DetectOptions {
    std::string input;  // fit output directory
    double q0 = 0.05;
};

struct EvalOptions {
    std::string input;  // detect table
    std::string truth;
    std::vector<double> grid;
    std::vector<std::string> compare;
};

struct SpatialOptions {
    std::string input;  // detect table
    std::size_t min_gaps = 20;
};

std::ofstream open_out(const std::string& dir, const std::string& name) {
    fs::create_directories(dir);
    const fs::path path = fs::path(dir) / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CliError("cli", "cannot write '" + path.string() + "'");
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CliError("cli", "cannot read '" + path + "'");
    return in;
}

SamplerConfig sampler_config(const FitOptions& f, const CommonOptions& c) {
    SamplerConfig cfg;
    cfg.iterations = f.iters;
    cfg.burn_in = f.burnin;
    cfg.thinning = f.thin;
    cfg.seed = c.seed;
    cfg.paired = f.paired;
    return cfg;
}

DicDeviance parse_deviance(const std::string& s) {
    if (s == "integrated") return DicDeviance::Integrated;
    if (s == "conditional") return DicDeviance::Conditional;
    throw CliError("modelsel", "unknown deviance '" + s + "' (expected integrated or conditional)");
}

struct Prepared {
    CountMatrix counts;
    std::vector<ChromosomeBlock> blocks;
    SamplerConfig cfg;
};

Prepared prepare(const FitOptions& f, const CommonOptions& c) {
    if (f.input.empty()) throw CliError("cli", "--input is required");
    CountMatrix cm = load_counts(f.input);
    if (!f.layout.empty()) cm = apply_layout(cm, load_layout(f.layout));
    cm = filter_low_counts(cm, f.min_count);
    if (cm.n_genes() == 0) throw IngestError("no genes pass the low-count filter");
    const auto rho = upper_quartile_effects(cm);
    SamplerConfig cfg = sampler_config(f, c);
    if (f.paired) {
        if (!cm.is_paired()) throw IngestError("--paired requires a subject for every library");
        cfg.sigma_eps2 = f.sigma_eps2 ? *f.sigma_eps2 : estimate_sigma_eps(cm, rho);
    }
    cfg.validate();
    auto blocks = split_by_chromosome(cm, rho);
    return {std::move(cm), std::move(blocks), cfg};
}

nlohmann::json fit_config_json(const FitOptions& f, const SamplerConfig& cfg) {
    nlohmann::json j = to_json(cfg);
    j["model"] = f.model;
    j["min_count"] = f.min_count;
    j["deviance"] = f.deviance;
    return j;
}

void write_fit_outputs(const std::vector<ChainSamples>& chains, const SamplerConfig& cfg, const nlohmann::json& config,
                       const std::string& dir) {
    const ArtifactHeader header{"samples", cfg.seed, config};
    {
        auto out = open_out(dir, "samples.tsv");
        header.write(out);
        write_samples(out, chains);
    }
    {
        auto out = open_out(dir, "genes.tsv");
        ArtifactHeader{"genes", cfg.seed, config}.write(out);
        write_gene_table(out, chains);
    }
    {
        auto out = open_out(dir, "run_meta.json");
        auto meta = run_metadata(chains, cfg);
        meta["config_hash"] = header.config_hash();
        meta["run_config"] = config;
        out << meta.dump(2) << '\n';
    }
}

void write_dic(const DicReport& report, const SamplerConfig& cfg, const nlohmann::json& config, const std::string& dir) {
    auto out = open_out(dir, "dic_report.txt");
    ArtifactHeader{"dic_report", cfg.seed, config}.write(out);
    write_dic_report(out, report);
}

int cmd_simulate(const SimOptions& s, const CommonOptions& c, std::ostream& log) {
    SimSpec spec;
    if (s.preset == "desk") spec = SimSpec::desk_scale();
    else if (s.preset == "full") spec = SimSpec::full_scale();
    else throw CliError("simulate", "unknown preset '" + s.preset + "' (expected desk or full)");
    spec.truth = parse_model_choice(s.truth);
    if (s.noise == "poisson") spec.noise = NoiseKind::Poisson;
    else if (s.noise == "negbin") spec.noise = NoiseKind::NegBinomial;
    else throw CliError("simulate", "unknown noise '" + s.noise + "' (expected poisson or negbin)");
    if (s.chromosomes) spec.chromosomes = *s.chromosomes;
    if (s.genes) spec.genes_per_chromosome = *s.genes;
    if (s.replicates) spec.replicates = *s.replicates;
    spec.paired = s.paired;
    spec.sigma_eps2 = s.paired ? s.sigma_eps2 : 0.0;
    spec.seed = c.seed;

    const nlohmann::json config = {{"preset", s.preset},
                                   {"truth", s.truth},
                                   {"noise", s.noise},
                                   {"paired", spec.paired},
                                   {"sigma_eps2", spec.sigma_eps2},
                                   {"chromosomes", spec.chromosomes},
                                   {"genes_per_chromosome", spec.genes_per_chromosome},
                                   {"replicates", spec.replicates}};
    const SimDataset data = simulate_dataset(spec);
    const ArtifactHeader header{"counts", spec.seed, config};
    {
        auto out = open_out(c.out_dir, "counts.tsv");
        header.write(out);
        write_counts(out, data.counts);
    }
    {
        auto out = open_out(c.out_dir, "truth.tsv");
        ArtifactHeader{"truth", spec.seed, config}.write(out);
        write_truth(out, data.truth);
    }
    {
        auto out = open_out(c.out_dir, "layout.json");
        auto j = nlohmann::json::parse(layout_json(data.counts.libraries()));
        j["hmmseq"] = {{"version", kToolVersion}, {"seed", spec.seed}, {"config_hash", header.config_hash()}};
        out << j.dump(2) << '\n';
    }
    log << "simulated " << data.counts.n_genes() << " genes x " << data.counts.n_libraries() << " libraries into "
        << c.out_dir << '\n';
    return 0;
}

int cmd_fit(const FitOptions& f, const CommonOptions& c, std::ostream& log) {
    Prepared p = prepare(f, c);
    const unsigned threads = resolve_threads(c.threads);
    const auto config = fit_config_json(f, p.cfg);
    std::vector<ChainSamples> chains;
    if (f.model == "auto") {
        DicSelection sel = dic_select(p.blocks, p.cfg, threads, parse_deviance(f.deviance));
        write_dic(sel.report, p.cfg, config, c.out_dir);
        chains = std::move(sel.chains[static_cast<std::size_t>(sel.report.selected)]);
        log << "selected model " << to_string(sel.report.selected) << '\n';
    } else {
        chains = run_chains(p.blocks, parse_model_choice(f.model), p.cfg, threads);
    }
    write_fit_outputs(chains, p.cfg, config, c.out_dir);
    log << "fit " << p.counts.n_genes() << " genes on " << p.blocks.size() << " chromosome(s); "
        << chains.front().n_kept() << " draws kept per chain\n";
    return 0;
}

int cmd_select(const FitOptions& f, const CommonOptions& c, std::ostream& log) {
    Prepared p = prepare(f, c);
    const auto config = fit_config_json(f, p.cfg);
    const DicSelection sel = dic_select(p.blocks, p.cfg, resolve_threads(c.threads), parse_deviance(f.deviance));
    write_dic(sel.report, p.cfg, config, c.out_dir);
    log << "selected model " << to_string(sel.report.selected) << '\n';
    return 0;
}

int cmd_detect(const DetectOptions& d, const CommonOptions& c, std::ostream& log) {
    if (d.input.empty()) throw CliError("cli", "--input (fit output directory) is required");
    if (!(d.q0 > 0.0 && d.q0 < 1.0)) throw CliError("detect", "--q0 must lie in (0, 1)");
    auto samples = open_in((fs::path(d.input) / "samples.tsv").string());
    auto genes = open_in((fs::path(d.input) / "genes.tsv").string());
    const PosteriorSummary summary = posterior_de_prob(tally_samples(samples, genes));
    const DetectionResult result = call_de(summary, d.q0);

    std::uint64_t seed = c.seed;
    nlohmann::json fit_config = nlohmann::json::object();
    if (std::ifstream meta_in(fs::path(d.input) / "run_meta.json"); meta_in) {
        const auto meta = nlohmann::json::parse(meta_in);
        seed = meta.value("seed", seed);
        fit_config = meta.value("run_config", fit_config);
    }
    const nlohmann::json config = {{"q0", d.q0}, {"fit", fit_config}};
    {
        auto out = open_out(c.out_dir, "detect.tsv");
        ArtifactHeader{"detect", seed, config}.write(out);
        write_detection_table(out, summary, result);
    }
    {
        auto out = open_out(c.out_dir, "calls.txt");
        ArtifactHeader{"calls", seed, config}.write(out);
        out << "gene_id\n";
        for (std::size_t r = 0; r < result.n_called; ++r) out << summary[result.order[r]].gene.id << '\n';
    }
    log << result.n_called << " of " << summary.size() << " genes called DE at q0=" << d.q0 << '\n';
    return 0;
}

std::vector<std::string> read_id_list(const std::string& path) {
    auto in = open_in(path);
    std::vector<std::string> ids;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            if (line == "gene_id") continue;
        }
        ids.push_back(line.substr(0, line.find_first_of("\t,")));
    }
    return ids;
}

int cmd_eval(const EvalOptions& e, const CommonOptions& c, std::ostream& log) {
    if (e.input.empty() || e.truth.empty()) throw CliError("cli", "--input (detect table) and --truth are required");
    auto det_in = open_in(e.input);
    const auto rows = read_detection_table(det_in);
    auto truth_in = open_in(e.truth);
    std::map<std::string, bool> truth_map;
    for (const auto& [id, de] : read_truth_de(truth_in)) truth_map[id] = de;

    std::vector<double> p_hat;
    std::vector<bool> truth;
    std::set<std::string> called;
    for (const auto& r : rows) {
        const auto it = truth_map.find(r.posterior.gene.id);
        if (it == truth_map.end()) throw EvalError("gene '" + r.posterior.gene.id + "' is missing from the truth file");
        p_hat.push_back(r.posterior.p_de);
        truth.push_back(it->second);
        if (r.called) called.insert(r.posterior.gene.id);
    }
    std::vector<double> grid = e.grid;
    if (grid.empty())
        for (int k = 1; k <= 20; ++k) grid.push_back(0.01 * k);
    for (double q : grid)
        if (!(q > 0.0 && q < 1.0)) throw EvalError("nominal FDR grid values must lie in (0, 1)");

    const nlohmann::json config = {{"grid", grid}, {"compare", e.compare}};
    const ArtifactHeader header{"eval", c.seed, config};
    const RocCurve roc = roc_curve(p_hat, truth);
    const auto calib = fdr_calibration(p_hat, truth, grid);
    {
        auto out = open_out(c.out_dir, "roc.tsv");
        header.write(out);
        write_roc(out, roc);
    }
    {
        auto out = open_out(c.out_dir, "fdr_calibration.tsv");
        header.write(out);
        write_calibration(out, calib);
    }
    open_out(c.out_dir, "roc.svg") << roc_svg(roc, "ROC");
    open_out(c.out_dir, "fdr_calibration.svg") << calibration_svg(calib, "FDR calibration");

    std::vector<std::pair<std::string, std::set<std::string>>> sets{{"hmmseq", called}};
    std::set<std::string> truth_set;
    for (const auto& [id, de] : truth_map)
        if (de) truth_set.insert(id);
    if (e.compare.empty()) sets.emplace_back("truth", truth_set);
    for (const auto& path : e.compare) {
        const auto ids = read_id_list(path);
        sets.emplace_back(fs::path(path).stem().string(), std::set<std::string>(ids.begin(), ids.end()));
    }
    std::vector<std::string> names;
    for (const auto& s : sets) names.push_back(s.first);
    {
        auto out = open_out(c.out_dir, "overlap.tsv");
        header.write(out);
        write_overlap(out, names, overlap_counts(sets));
    }
    log << "AUC " << format_double(roc.auc) << '\n';
    return 0;
}

int cmd_spatial(const SpatialOptions& s, const CommonOptions& c, std::ostream& log) {
    if (s.input.empty()) throw CliError("cli", "--input (detect table) is required");
    auto in = open_in(s.input);
    const auto rows = read_detection_table(in);
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::pair<std::int64_t, bool>>> by_chrom;
    for (const auto& r : rows) {
        const auto& g = r.posterior.gene;
        if (!by_chrom.count(g.chromosome)) order.push_back(g.chromosome);
        by_chrom[g.chromosome].emplace_back(g.position, r.called);
    }
    std::vector<std::vector<bool>> calls;
    for (const auto& chrom : order) {
        auto genes = by_chrom[chrom];
        std::stable_sort(genes.begin(), genes.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<bool> flags;
        for (const auto& g : genes) flags.push_back(g.second);
        calls.push_back(std::move(flags));
    }
    const auto result = spatial_geometric_test(calls, s.min_gaps);
    auto out = open_out(c.out_dir, "spatial_report.txt");
    ArtifactHeader{"spatial_test", c.seed, {{"min_gaps", s.min_gaps}}}.write(out);
    write_spatial_report(out, result);
    log << "spatial test p-value " << format_double(result.p_value) << '\n';
    return 0;
}

std::string module_of(const std::exception& e, const std::string& fallback) {
    if (const auto* ce = dynamic_cast<const CliError*>(&e)) return ce->module;
    if (dynamic_cast<const IngestError*>(&e)) return "ingest";
    if (dynamic_cast<const ChainError*>(&e)) return "sampler";
    if (dynamic_cast<const EvalError*>(&e)) return "eval";
    if (dynamic_cast<const std::domain_error*>(&e)) return "hmm_core";
    return fallback;
}

void add_common(CLI::App* sub, CommonOptions& c) {
    sub->add_option("--seed", c.seed, "Random seed");
    sub->add_option("--threads", c.threads, "Worker threads (default: HMMSEQ_THREADS or 1)")->check(CLI::NonNegativeNumber);
    sub->add_option("--out-dir", c.out_dir, "Output directory");
}

void add_fit_options(CLI::App* sub, FitOptions& f) {
    sub->add_option("--input", f.input, "Count matrix (TSV or CSV)");
    sub->add_option("--layout", f.layout, "Library layout JSON");
    sub->add_flag("--paired", f.paired, "Paired design with subject effects");
    sub->add_option("--sigma-eps2", f.sigma_eps2, "Subject-effect variance (paired; estimated when omitted)");
    sub->add_option("--iters", f.iters, "MCMC iterations")->check(CLI::PositiveNumber);
    sub->add_option("--burnin", f.burnin, "Burn-in iterations")->check(CLI::NonNegativeNumber);
    sub->add_option("--thin", f.thin, "Thinning interval")->check(CLI::PositiveNumber);
    sub->add_option("--min-count", f.min_count, "Drop genes whose total count is below this");
    sub->add_option("--deviance", f.deviance, "DIC deviance: integrated or conditional");
}

} // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"hmmseq: Bayesian hidden Markov detection of differentially expressed genes"};
    app.set_config("--config", "", "TOML/INI configuration file (flags take precedence)");
    app.require_subcommand(1);

    CommonOptions common;
    FitOptions fit;
    SimOptions sim;
    DetectOptions det;
    EvalOptions ev;
    SpatialOptions sp;

    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic count matrix with known truth");
    add_common(simulate, common);
    simulate->add_option("--preset", sim.preset, "desk (2x200 genes) or full (12x800 genes)");
    simulate->add_option("--truth-model", sim.truth, "Generating model: FF, FH, HF or HH");
    simulate->add_option("--noise", sim.noise, "poisson or negbin");
    simulate->add_flag("--paired", sim.paired, "Add subject effects");
    simulate->add_option("--sigma-eps2", sim.sigma_eps2, "Subject-effect variance");
    simulate->add_option("--chromosomes", sim.chromosomes, "Override chromosome count");
    simulate->add_option("--genes", sim.genes, "Override genes per chromosome");
    simulate->add_option("--replicates", sim.replicates, "Override replicates per treatment");

    auto* fitc = app.add_subcommand("fit", "Run the sampler and write posterior draws");
    add_common(fitc, common);
    add_fit_options(fitc, fit);
    fitc->add_option("--model", fit.model, "FF, FH, HF, HH or auto (DIC)");

    auto* select = app.add_subcommand("select", "Fit all four models and report DIC");
    add_common(select, common);
    add_fit_options(select, fit);

    auto* detect = app.add_subcommand("detect", "Posterior DE probabilities and FDR-controlled calls");
    add_common(detect, common);
    detect->add_option("--input", det.input, "Directory written by fit");
    detect->add_option("--q0", det.q0, "Nominal FDR level");

    auto* eval = app.add_subcommand("eval", "Score detections against a truth file");
    add_common(eval, common);
    eval->add_option("--input", ev.input, "Detection table written by detect");
    eval->add_option("--truth", ev.truth, "Truth file written by simulate");
    eval->add_option("--q0-grid", ev.grid, "Nominal FDR levels for calibration")->delimiter(',');
    eval->add_option("--compare", ev.compare, "Other call lists (one gene id per line) for overlap")->delimiter(',');

    auto* spatial = app.add_subcommand("spatial-test", "Geometric goodness-of-fit test of DE call spacing");
    add_common(spatial, common);
    spatial->add_option("--input", sp.input, "Detection table written by detect");
    spatial->add_option("--min-gaps", sp.min_gaps, "Minimum number of gaps");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "hmmseq cli: " << e.what() << '\n';
        return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        if (name == "simulate") return cmd_simulate(sim, common, out);
        if (name == "fit") {
            if (fit.model != "auto") parse_model_choice(fit.model);
            return cmd_fit(fit, common, out);
        }
        if (name == "select") return cmd_select(fit, common, out);
        if (name == "detect") return cmd_detect(det, common, out);
        if (name == "eval") return cmd_eval(ev, common, out);
        if (name == "spatial-test") return cmd_spatial(sp, common, out);
    } catch (const std::exception& e) {
        err << "hmmseq " << module_of(e, name) << ": " << e.what() << '\n';
        return 1;
    }
    err << "hmmseq cli: unknown subcommand '" << name << "'\n";
    return 2;
}

int run_command(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_command(args, std::cout, std::cerr);
}

} // namespace hmmseq
