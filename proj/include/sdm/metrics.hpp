#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sdm/data.hpp"
#include "sdm/geo.hpp"
#include "sdm/model.hpp"

namespace sdm {

// Area under the ROC curve via the Mann-Whitney statistic: the fraction of
// (positive, negative) site pairs ranked correctly, ties counting half.
// Needs at least one positive and one negative label.
double roc_auc(std::span<const double> scores, std::span<const uint8_t> labels);

// Average precision: mean of precision@k over the ranks k of the positive
// sites, scores sorted descending with ties broken by ascending site
// index. Needs at least one positive label.
double average_precision(std::span<const double> scores, std::span<const uint8_t> labels);

struct BucketMean {
    std::string label;
    double mean = 0.0; // NaN when the bucket holds no scored species
    int species_counted = 0;
};

// Per-species values of one ranking metric plus the aggregations used in
// the loss comparisons: mean over all scored species, mean over rare
// species, and per-frequency-bucket means.
struct MetricReport {
    std::vector<double> per_species; // NaN for excluded species
    double all_mean = 0.0;
    double rare_mean = 0.0; // NaN when no rare species is scorable
    int rare_count = 0;
    std::vector<BucketMean> buckets;
};

struct EvaluationResult {
    MetricReport auc;
    MetricReport ap;
    std::vector<int> excluded_species;
    long long rare_threshold = 0;
};

// Eval-mode forward over every site, then per-species AUC and AP with the
// catalog's training counts defining "rare" and the frequency buckets.
EvaluationResult evaluate(Parameters& params, const EvalSet& eval, const SpeciesCatalog& catalog,
                          long long rare_threshold, const std::vector<long long>& bucket_edges);

// One image-classification case for the geo-prior task.
struct GeoPriorCase {
    double lon = 0.0, lat = 0.0;
    int true_class = 0;
    std::vector<double> vision_scores;
};

struct GeoPriorResult {
    double baseline_top1 = 0.0; // fractions in [0, 1]
    double combined_top1 = 0.0;
    double delta_top1_pp = 0.0; // (combined - baseline) * 100
    int cases_used = 0;
    int cases_skipped = 0; // locations outside the grid
};

// Rescores each case by vision_score * predicted suitability at the case
// location and reports the top-1 accuracy change in percentage points.
// Argmax ties break toward the lower species index.
GeoPriorResult geo_prior_gain(Parameters& params, const std::vector<GeoPriorCase>& cases,
                              const EnvGrid& grid, bool with_encoder);

// Geo-prior CSV: header "lon,lat,true_class,score_0,...,score_{S-1}".
std::vector<GeoPriorCase> load_geo_prior_cases(const std::string& path, int species_count);
void save_geo_prior_cases(const std::vector<GeoPriorCase>& cases, const std::string& path);

} // namespace sdm
