#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hmmseq/sampler.hpp"

#include "json.hpp"

namespace hmmseq {

inline constexpr const char* kToolVersion = "1.0.0";

// Shortest round-trip decimal form; used for every numeric artifact.
std::string format_double(double x);

// Identifies how an artifact was produced. Written as leading '#' lines.
struct ArtifactHeader {
    std::string kind;
    std::uint64_t seed = 0;
    nlohmann::json config = nlohmann::json::object();

    std::string config_hash() const;  // FNV-1a of the canonical config dump, hex
    void write(std::ostream& out) const;
};

nlohmann::json to_json(const SamplerConfig& cfg);
SamplerConfig sampler_config_from_json(const nlohmann::json& j, SamplerConfig base = {});

// Columnar draws: iteration, gene, h, delta, beta, s (1-based states).
void write_samples(std::ostream& out, const std::vector<ChainSamples>& chains);
// gene_id, chromosome, position in chain order.
void write_gene_table(std::ostream& out, const std::vector<ChainSamples>& chains);
nlohmann::json run_metadata(const std::vector<ChainSamples>& chains, const SamplerConfig& cfg);

// Streaming reader for samples files: per-gene state frequencies and means.
struct SampleTally {
    std::vector<GeneMeta> genes;
    std::vector<std::array<double, 3>> h_counts;
    std::vector<double> delta_sum;
    std::vector<double> beta_sum;
    std::vector<double> n;
};
SampleTally tally_samples(std::istream& samples, std::istream& gene_table);

} // namespace hmmseq
