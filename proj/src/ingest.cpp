#include "hmmseq/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace hmmseq {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, delim)) {
        if (!field.empty() && field.back() == '\r') field.pop_back();
        out.push_back(field);
    }
    if (!line.empty() && line.back() == delim) out.emplace_back();
    return out;
}

bool parse_int(const std::string& s, std::int64_t& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first != last && *first == ' ') ++first;
    while (last != first && *(last - 1) == ' ') --last;
    if (first == last) return false;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

double quantile_type7(std::vector<double> v, double prob) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

} // namespace

CountMatrix::CountMatrix(std::vector<GeneMeta> genes, std::vector<LibraryMeta> libraries,
                         std::vector<std::int64_t> counts)
    : genes_(std::move(genes)), libraries_(std::move(libraries)), counts_(std::move(counts)) {
    if (counts_.size() != genes_.size() * libraries_.size())
        throw IngestError("count matrix shape does not match gene/library metadata");
}

std::int64_t CountMatrix::row_total(std::size_t gene) const {
    std::int64_t total = 0;
    for (std::size_t l = 0; l < libraries_.size(); ++l) total += (*this)(gene, l);
    return total;
}

bool CountMatrix::is_paired() const {
    return !libraries_.empty() &&
           std::all_of(libraries_.begin(), libraries_.end(),
                       [](const LibraryMeta& l) { return l.subject.has_value(); });
}

void CountMatrix::validate() const {
    if (counts_.size() != genes_.size() * libraries_.size())
        throw IngestError("count matrix shape does not match gene/library metadata");
    for (const auto& lib : libraries_) {
        if (lib.treatment != 1 && lib.treatment != 2)
            throw IngestError("library '" + lib.name + "': treatment must be 1 or 2");
        if (lib.replicate < 1)
            throw IngestError("library '" + lib.name + "': replicate must be >= 1");
    }
    std::unordered_set<std::string> ids;
    std::unordered_map<std::string, std::int64_t> last_pos;
    for (const auto& g : genes_) {
        if (!ids.insert(g.id).second) throw IngestError("duplicate gene id '" + g.id + "'");
        auto it = last_pos.find(g.chromosome);
        if (it != last_pos.end() && g.position <= it->second)
            throw IngestError("gene '" + g.id + "': positions must strictly increase within chromosome " +
                              g.chromosome);
        last_pos[g.chromosome] = g.position;
    }
    for (auto c : counts_)
        if (c < 0) throw IngestError("negative count in matrix");

    const bool any_subject = std::any_of(libraries_.begin(), libraries_.end(),
                                         [](const LibraryMeta& l) { return l.subject.has_value(); });
    if (any_subject) {
        if (!is_paired()) throw IngestError("paired layout: every library needs a subject");
        std::map<int, std::array<int, 2>> seen;
        for (const auto& lib : libraries_) seen[*lib.subject][lib.treatment - 1] += 1;
        for (const auto& [subject, per_trt] : seen)
            if (per_trt[0] != 1 || per_trt[1] != 1)
                throw IngestError("paired layout: subject " + std::to_string(subject) +
                                  " must appear exactly once per treatment");
    }
}

std::size_t ChromosomeBlock::n_subjects() const {
    std::set<int> s;
    for (const auto& lib : libraries)
        if (lib.subject) s.insert(*lib.subject);
    return s.size();
}

std::vector<int> ChromosomeBlock::subject_index() const {
    std::vector<int> ids;
    for (const auto& lib : libraries)
        if (lib.subject) ids.push_back(*lib.subject);
    if (ids.size() != libraries.size()) return {};
    std::vector<int> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<int> out;
    out.reserve(ids.size());
    for (int id : ids)
        out.push_back(static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), id) - sorted.begin()));
    return out;
}

CountMatrix parse_counts(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    char delim = '\t';
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        delim = line.find('\t') != std::string::npos ? '\t' : ',';
        header = split_line(line, delim);
        break;
    }
    if (header.size() < 4)
        throw IngestError(source + ": header must name gene_id, chromosome, position and at least one library");

    const std::size_t n_lib = header.size() - 3;
    std::vector<LibraryMeta> libs(n_lib);
    for (std::size_t l = 0; l < n_lib; ++l) {
        libs[l].name = header[l + 3];
        libs[l].replicate = static_cast<int>(l) + 1;
    }

    std::vector<GeneMeta> genes;
    std::vector<std::int64_t> counts;
    std::unordered_set<std::string> ids;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split_line(line, delim);
        const std::string where = source + ":" + std::to_string(line_no);
        if (fields.size() != header.size())
            throw IngestError("malformed row at line " + std::to_string(line_no) + " (" + where + "): expected " +
                              std::to_string(header.size()) + " columns, found " + std::to_string(fields.size()));
        GeneMeta g;
        g.id = fields[0];
        g.chromosome = fields[1];
        if (!parse_int(fields[2], g.position))
            throw IngestError("non-integer position at line " + std::to_string(line_no) + " (" + where + ")");
        if (!ids.insert(g.id).second)
            throw IngestError("duplicate gene id '" + g.id + "' at line " + std::to_string(line_no));
        for (std::size_t l = 0; l < n_lib; ++l) {
            std::int64_t c = 0;
            if (!parse_int(fields[l + 3], c))
                throw IngestError("non-integer count at line " + std::to_string(line_no) + " (" + where + ")");
            if (c < 0) throw IngestError("negative count at line " + std::to_string(line_no) + " (" + where + ")");
            counts.push_back(c);
        }
        genes.push_back(std::move(g));
    }
    CountMatrix cm(std::move(genes), std::move(libs), std::move(counts));
    cm.validate();
    return cm;
}

CountMatrix load_counts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open count file '" + path + "'");
    return parse_counts(in, path);
}

std::vector<LibraryMeta> load_layout(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open layout file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IngestError("layout '" + path + "': " + e.what());
    }
    std::vector<LibraryMeta> out;
    try {
        for (const auto& item : j.at("libraries")) {
            LibraryMeta lib;
            lib.name = item.at("name").get<std::string>();
            lib.treatment = item.at("treatment").get<int>();
            lib.replicate = item.value("replicate", 1);
            if (item.contains("subject") && !item["subject"].is_null()) lib.subject = item["subject"].get<int>();
            out.push_back(std::move(lib));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IngestError("layout '" + path + "': " + e.what());
    }
    return out;
}

CountMatrix apply_layout(const CountMatrix& cm, const std::vector<LibraryMeta>& layout) {
    std::unordered_map<std::string, const LibraryMeta*> by_name;
    for (const auto& lib : layout) by_name[lib.name] = &lib;
    std::vector<LibraryMeta> libs;
    for (const auto& lib : cm.libraries()) {
        auto it = by_name.find(lib.name);
        if (it == by_name.end()) throw IngestError("layout has no entry for library '" + lib.name + "'");
        libs.push_back(*it->second);
    }
    CountMatrix out(cm.genes(), std::move(libs), cm.counts());
    out.validate();
    return out;
}

void write_counts(std::ostream& out, const CountMatrix& cm) {
    out << "gene_id\tchromosome\tposition";
    for (const auto& lib : cm.libraries()) out << '\t' << lib.name;
    out << '\n';
    for (std::size_t i = 0; i < cm.n_genes(); ++i) {
        const auto& g = cm.genes()[i];
        out << g.id << '\t' << g.chromosome << '\t' << g.position;
        for (std::size_t l = 0; l < cm.n_libraries(); ++l) out << '\t' << cm(i, l);
        out << '\n';
    }
}

std::string layout_json(const std::vector<LibraryMeta>& libraries) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& lib : libraries) {
        nlohmann::json item = {{"name", lib.name}, {"treatment", lib.treatment}, {"replicate", lib.replicate}};
        if (lib.subject) item["subject"] = *lib.subject;
        arr.push_back(std::move(item));
    }
    return nlohmann::json{{"libraries", arr}}.dump(2) + "\n";
}

CountMatrix filter_low_counts(const CountMatrix& cm, std::int64_t threshold) {
    if (threshold < 0) throw std::invalid_argument("filter_low_counts: threshold must be >= 0");
    std::vector<GeneMeta> genes;
    std::vector<std::int64_t> counts;
    for (std::size_t i = 0; i < cm.n_genes(); ++i) {
        if (cm.row_total(i) < threshold) continue;
        genes.push_back(cm.genes()[i]);
        for (std::size_t l = 0; l < cm.n_libraries(); ++l) counts.push_back(cm(i, l));
    }
    return CountMatrix(std::move(genes), cm.libraries(), std::move(counts));
}

std::vector<double> upper_quartile_effects(const CountMatrix& cm) {
    const std::size_t n_lib = cm.n_libraries();
    std::vector<double> log_uq(n_lib);
    for (std::size_t l = 0; l < n_lib; ++l) {
        std::vector<double> nonzero;
        for (std::size_t i = 0; i < cm.n_genes(); ++i)
            if (cm(i, l) > 0) nonzero.push_back(static_cast<double>(cm(i, l)));
        if (nonzero.empty())
            throw IngestError("upper-quartile normalisation: library '" + cm.libraries()[l].name + "' has no nonzero counts");
        log_uq[l] = std::log(quantile_type7(std::move(nonzero), 0.75));
    }
    const double mean = std::accumulate(log_uq.begin(), log_uq.end(), 0.0) / static_cast<double>(n_lib);
    for (double& x : log_uq) x -= mean;
    return log_uq;
}

std::vector<ChromosomeBlock> split_by_chromosome(const CountMatrix& cm, const std::vector<double>& rho) {
    if (rho.size() != cm.n_libraries())
        throw std::invalid_argument("split_by_chromosome: rho length must equal the number of libraries");
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<std::size_t>> rows;
    for (std::size_t i = 0; i < cm.n_genes(); ++i) {
        const auto& chrom = cm.genes()[i].chromosome;
        auto [it, inserted] = rows.try_emplace(chrom);
        if (inserted) order.push_back(chrom);
        it->second.push_back(i);
    }
    std::vector<ChromosomeBlock> blocks;
    blocks.reserve(order.size());
    for (const auto& chrom : order) {
        auto idx = rows[chrom];
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return cm.genes()[a].position < cm.genes()[b].position;
        });
        ChromosomeBlock b;
        b.chromosome = chrom;
        b.libraries = cm.libraries();
        b.rho = rho;
        for (std::size_t i : idx) {
            b.genes.push_back(cm.genes()[i]);
            for (std::size_t l = 0; l < cm.n_libraries(); ++l) b.counts.push_back(cm(i, l));
        }
        blocks.push_back(std::move(b));
    }
    return blocks;
}

} // namespace hmmseq
