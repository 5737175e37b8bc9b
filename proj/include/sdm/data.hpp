#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdm/geo.hpp"
#include "sdm/matrix.hpp"
#include "sdm/rng.hpp"

namespace sdm {

// Presence bookkeeping per species: counts n_p(s), total n, and the
// imbalance weights w_s = n / n_p(s).
struct SpeciesCatalog {
    int species_count = 0;
    long long total = 0;
    std::vector<long long> counts;
    std::vector<double> weights;

    // true when some species owns every record (n_p(s) = n); the full
    // weighted loss is singular in that case
    bool has_singular_weight() const;
    std::vector<int> singular_species() const;
};

// One single-positive training record: an encoded feature row and the
// index of the observed species.
struct TrainSample {
    std::vector<double> features;
    int positive = 0;
};

// Column-packed training set: one feature row and one positive species
// index per occurrence record.
struct Dataset {
    Matrix features; // n x D
    std::vector<int> positives;

    int size() const { return features.rows; }
    int dim() const { return features.cols; }
};

// Presence-absence evaluation data. labels is sites x S, row-major.
// Species whose label column is constant have no defined ranking metric;
// they are listed in excluded and skipped by evaluate().
struct EvalSet {
    Matrix features; // sites x D
    std::vector<double> lons, lats;
    std::vector<uint8_t> labels;
    int species_count = 0;

    std::vector<int> usable;
    std::vector<int> excluded;

    int site_count() const { return features.rows; }
    uint8_t label(int site, int species) const {
        return labels[static_cast<size_t>(site) * species_count + species];
    }

    // recomputes usable/excluded from the label columns
    void refresh_usability();
};

struct FrequencyBucket {
    long long lo = 0;  // exclusive, 0 for the first bucket
    long long hi = -1; // inclusive; -1 marks the open-ended last bucket
    std::string label;
    std::vector<int> species;
};

// Occurrence CSV: header "lon,lat,species_id", one record per row.
std::vector<OccurrenceRecord> load_occurrences_csv(const std::string& path);
void save_occurrences_csv(const std::vector<OccurrenceRecord>& records, const std::string& path);

// Keeps at most cap records per species, chosen uniformly without
// replacement; survivors keep their original relative order.
std::vector<OccurrenceRecord> cap_per_species(const std::vector<OccurrenceRecord>& records,
                                              long long cap, Rng& rng);

// Counts records per species and derives the weights. Every species in
// [0, species_count) must appear at least once.
SpeciesCatalog build_catalog(const std::vector<OccurrenceRecord>& records, int species_count);

// Builds the training matrix (location encoding ++ env features when the
// encoder is enabled) and the catalog in one pass. species_count <= 0
// infers S = 1 + max species id.
std::pair<Dataset, SpeciesCatalog> assemble_dataset(const std::vector<OccurrenceRecord>& records,
                                                    const EnvGrid& grid, bool with_encoder,
                                                    int species_count = 0);

// Partitions species by training count: buckets (<=e1], (e1,e2], ...,
// (ek, inf). Species land in the first bucket whose upper edge covers
// their count.
std::vector<FrequencyBucket> group_by_frequency(const SpeciesCatalog& catalog,
                                                const std::vector<long long>& edges);

// Evaluation-set CSV pair: sites "site_id,lon,lat" and labels
// "site_id,species_id,label" (every site x species pair present).
void save_eval_set_csv(const EvalSet& eval, const std::string& sites_path,
                       const std::string& labels_path);
EvalSet load_eval_set_csv(const std::string& sites_path, const std::string& labels_path,
                          const EnvGrid& grid, bool with_encoder, int species_count);

} // namespace sdm
