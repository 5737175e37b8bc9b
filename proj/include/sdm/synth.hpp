#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdm/data.hpp"
#include "sdm/geo.hpp"
#include "sdm/metrics.hpp"
#include "sdm/rng.hpp"

namespace sdm {

// Configuration of a generated world: smooth environment raster, Gaussian
// feature-space niches, power-law presence counts, and a ground-truth
// presence-absence evaluation set.
struct SynthConfig {
    int species = 200;
    int grid_width = 64;
    int grid_height = 64;
    int feature_dim = 8;
    long long total_observations = 20000;
    double tail_exponent = 1.3;
    double niche_width_min = 1.5;
    double niche_width_max = 3.0;
    int eval_sites = 500;
    double lon_min = -5.0, lon_max = 15.0;
    double lat_min = 40.0, lat_max = 50.0;
    int geo_prior_cases = 0;              // 0 disables the geo-prior benchmark
    double geo_prior_corrupt_fraction = 0.3;
    uint64_t seed = 0;

    void validate() const; // throws ValidationError naming the bad field
};

// Gaussian suitability bump in feature space: exp(-|x - center|^2 /
// (2 width^2)), in (0, 1] and 1 exactly at the center.
struct NicheModel {
    std::vector<double> center;
    double width = 1.0;

    double suitability(std::span<const double> features) const;
};

// Sum of K random low-frequency cosine waves per channel, standardized to
// empirical mean 0 / variance 1 per channel.
EnvGrid generate_env_grid(const SynthConfig& config, Rng& rng);

// Deterministic power-law counts: proportional to rank^(-exponent),
// largest-remainder rounded to sum exactly to total, minimum 1 per
// species, non-increasing.
std::vector<long long> draw_longtail_counts(int species, long long total, double exponent);

// Each niche centers on the feature vector of a random grid cell so every
// species has somewhere suitable; widths are uniform in the configured
// range.
std::vector<NicheModel> generate_niches(const EnvGrid& grid, int species, double width_min,
                                        double width_max, Rng& rng);

// Draws counts[s] presence cells per species with probability proportional
// to suitability, jittering a point inside each cell. Randomness comes
// from a per-species stream derived from the seed.
std::vector<OccurrenceRecord> sample_presences(const std::vector<NicheModel>& niches,
                                               const EnvGrid& grid,
                                               const std::vector<long long>& counts,
                                               uint64_t seed);

// Uniform random sites with Bernoulli(suitability) ground-truth labels.
// Constant label columns are redrawn up to 10 times, then excluded.
EvalSet generate_eval_set(const std::vector<NicheModel>& niches, const EnvGrid& grid, int n_sites,
                          bool with_encoder, Rng& rng);

// Synthetic geo-prior benchmark: cases at random sites with the true class
// drawn by local suitability. A corrupt_fraction share of cases gets the
// true class demoted to rank 2 (vision ratio 0.9 against a random rival).
std::vector<GeoPriorCase> generate_geo_prior_cases(const std::vector<NicheModel>& niches,
                                                   const EnvGrid& grid, int n_cases,
                                                   double corrupt_fraction, Rng& rng);

struct SynthWorld {
    EnvGrid grid;
    std::vector<NicheModel> niches;
    std::vector<OccurrenceRecord> records;
    EvalSet eval;
    std::vector<GeoPriorCase> geo_prior;
};

// Runs the full generation pipeline with sub-streams derived from
// config.seed.
SynthWorld generate_world(const SynthConfig& config, bool with_encoder);

// JSON manifest describing one generated world (config, seed, file names).
std::string synth_manifest_json(const SynthConfig& config,
                                const std::vector<std::string>& files);

} // namespace sdm
