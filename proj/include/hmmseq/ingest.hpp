#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmmseq {

struct IngestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GeneMeta {
    std::string id;
    std::string chromosome;
    std::int64_t position = 0;
};

struct LibraryMeta {
    std::string name;
    int treatment = 1;                 // 1 or 2
    int replicate = 1;                 // >= 1
    std::optional<int> subject;        // paired designs only
};

// Gene x library read counts, row-major.
class CountMatrix {
public:
    CountMatrix() = default;
    CountMatrix(std::vector<GeneMeta> genes, std::vector<LibraryMeta> libraries,
                std::vector<std::int64_t> counts);

    std::size_t n_genes() const noexcept { return genes_.size(); }
    std::size_t n_libraries() const noexcept { return libraries_.size(); }

    const std::vector<GeneMeta>& genes() const noexcept { return genes_; }
    const std::vector<LibraryMeta>& libraries() const noexcept { return libraries_; }
    const std::vector<std::int64_t>& counts() const noexcept { return counts_; }

    std::int64_t operator()(std::size_t gene, std::size_t lib) const {
        return counts_[gene * libraries_.size() + lib];
    }

    std::int64_t row_total(std::size_t gene) const;
    bool is_paired() const;

    // Throws IngestError on any invariant violation.
    void validate() const;

private:
    std::vector<GeneMeta> genes_;
    std::vector<LibraryMeta> libraries_;
    std::vector<std::int64_t> counts_;
};

// The unit of MCMC analysis: one chromosome's genes in genomic order.
struct ChromosomeBlock {
    std::string chromosome;
    std::vector<GeneMeta> genes;
    std::vector<LibraryMeta> libraries;
    std::vector<std::int64_t> counts;  // genes x libraries, row-major
    std::vector<double> rho;           // per-library log offsets

    std::size_t n_genes() const noexcept { return genes.size(); }
    std::size_t n_libraries() const noexcept { return libraries.size(); }
    std::int64_t count(std::size_t gene, std::size_t lib) const {
        return counts[gene * libraries.size() + lib];
    }
    // Number of distinct subjects (paired) or 0.
    std::size_t n_subjects() const;
    // Subject index (0-based, dense) per library; empty when unpaired.
    std::vector<int> subject_index() const;
};

// Parses the delimited count table. The delimiter is taken from the header
// line (tab if present, otherwise comma). Lines starting with '#' are skipped.
// Library metadata defaults to treatment 1/replicate k until a layout is applied.
CountMatrix load_counts(const std::string& path);
CountMatrix parse_counts(std::istream& in, const std::string& source = "<stream>");

// Layout sidecar (JSON): {"libraries": [{"name":..,"treatment":1,"replicate":1,"subject":1}, ...]}
std::vector<LibraryMeta> load_layout(const std::string& path);
CountMatrix apply_layout(const CountMatrix& cm, const std::vector<LibraryMeta>& layout);

void write_counts(std::ostream& out, const CountMatrix& cm);
std::string layout_json(const std::vector<LibraryMeta>& libraries);

CountMatrix filter_low_counts(const CountMatrix& cm, std::int64_t threshold = 10);

// Upper-quartile library offsets, centred to sum to zero.
std::vector<double> upper_quartile_effects(const CountMatrix& cm);

std::vector<ChromosomeBlock> split_by_chromosome(const CountMatrix& cm,
                                                 const std::vector<double>& rho);

} // namespace hmmseq
