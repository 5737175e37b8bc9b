#include "sdm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "sdm/errors.hpp"

namespace sdm {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string tok;
    std::istringstream ls(line);
    while (std::getline(ls, tok, ',')) out.push_back(tok);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& tok) {
    size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
}

long long parse_ll(const std::string& tok) {
    size_t pos = 0;
    const long long v = std::stoll(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

} // namespace

bool SpeciesCatalog::has_singular_weight() const {
    return std::any_of(counts.begin(), counts.end(), [&](long long c) { return c == total; });
}

std::vector<int> SpeciesCatalog::singular_species() const {
    std::vector<int> out;
    for (int s = 0; s < species_count; ++s) {
        if (counts[s] == total) out.push_back(s);
    }
    return out;
}

void EvalSet::refresh_usability() {
    usable.clear();
    excluded.clear();
    for (int s = 0; s < species_count; ++s) {
        bool has_pos = false, has_neg = false;
        for (int i = 0; i < site_count(); ++i) {
            (label(i, s) ? has_pos : has_neg) = true;
            if (has_pos && has_neg) break;
        }
        (has_pos && has_neg ? usable : excluded).push_back(s);
    }
}

std::vector<OccurrenceRecord> load_occurrences_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open occurrences file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("occurrences file is empty: " + path);
    if (strip_cr(line) != "lon,lat,species_id") {
        throw ValidationError("occurrences header must be 'lon,lat,species_id' in " + path);
    }

    std::vector<OccurrenceRecord> records;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto toks = split_csv_line(line);
        if (toks.size() != 3) {
            throw ValidationError("malformed occurrence row at line " + std::to_string(line_no) +
                                  " in " + path);
        }
        OccurrenceRecord rec;
        try {
            rec.lon = parse_double(toks[0]);
            rec.lat = parse_double(toks[1]);
            rec.species_id = static_cast<int>(parse_ll(toks[2]));
        } catch (const std::exception&) {
            throw ValidationError("malformed occurrence row at line " + std::to_string(line_no) +
                                  " in " + path);
        }
        if (rec.species_id < 0) {
            throw ValidationError("invalid species id at line " + std::to_string(line_no) +
                                  " in " + path);
        }
        if (rec.lon < -180.0 || rec.lon > 180.0 || rec.lat < -90.0 || rec.lat > 90.0) {
            throw ValidationError("coordinate out of range at line " + std::to_string(line_no) +
                                  " in " + path);
        }
        records.push_back(rec);
    }
    return records;
}

void save_occurrences_csv(const std::vector<OccurrenceRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open occurrences file for writing: " + path);
    out << "lon,lat,species_id\n";
    char buf[128];
    for (const auto& rec : records) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d\n", rec.lon, rec.lat, rec.species_id);
        out << buf;
    }
    if (!out) throw ValidationError("failed writing occurrences file: " + path);
}

std::vector<OccurrenceRecord> cap_per_species(const std::vector<OccurrenceRecord>& records,
                                              long long cap, Rng& rng) {
    if (cap < 1) throw ValidationError("cap_per_species requires cap >= 1");

    std::unordered_map<int, std::vector<size_t>> by_species;
    for (size_t i = 0; i < records.size(); ++i) {
        by_species[records[i].species_id].push_back(i);
    }

    std::vector<int> ids;
    ids.reserve(by_species.size());
    for (const auto& [id, idx] : by_species) ids.push_back(id);
    std::sort(ids.begin(), ids.end());

    std::vector<char> keep(records.size(), 1);
    for (int id : ids) {
        auto& idx = by_species[id];
        const long long n = static_cast<long long>(idx.size());
        if (n <= cap) continue;
        // partial Fisher-Yates: the first cap entries are a uniform subset
        for (long long k = 0; k < cap; ++k) {
            const long long j = k + static_cast<long long>(rng.uniform_int(n - k));
            std::swap(idx[k], idx[j]);
        }
        for (long long k = cap; k < n; ++k) keep[idx[k]] = 0;
    }

    std::vector<OccurrenceRecord> out;
    out.reserve(records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        if (keep[i]) out.push_back(records[i]);
    }
    return out;
}

SpeciesCatalog build_catalog(const std::vector<OccurrenceRecord>& records, int species_count) {
    if (species_count < 1) {
        throw ValidationError("catalog requires at least one species with records; got none");
    }
    SpeciesCatalog cat;
    cat.species_count = species_count;
    cat.total = static_cast<long long>(records.size());
    cat.counts.assign(species_count, 0);
    for (const auto& rec : records) {
        if (rec.species_id < 0 || rec.species_id >= species_count) {
            throw ValidationError("record species id " + std::to_string(rec.species_id) +
                                  " outside [0, " + std::to_string(species_count) + ")");
        }
        ++cat.counts[rec.species_id];
    }
    std::vector<int> missing;
    for (int s = 0; s < species_count; ++s) {
        if (cat.counts[s] == 0) missing.push_back(s);
    }
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << "species with zero records (weight undefined):";
        for (int s : missing) msg << ' ' << s;
        throw ValidationError(msg.str());
    }
    cat.weights.resize(species_count);
    for (int s = 0; s < species_count; ++s) {
        cat.weights[s] = static_cast<double>(cat.total) / static_cast<double>(cat.counts[s]);
    }
    return cat;
}

std::pair<Dataset, SpeciesCatalog> assemble_dataset(const std::vector<OccurrenceRecord>& records,
                                                    const EnvGrid& grid, bool with_encoder,
                                                    int species_count) {
    if (species_count <= 0) {
        int max_id = -1;
        for (const auto& rec : records) max_id = std::max(max_id, rec.species_id);
        species_count = max_id + 1;
    }
    SpeciesCatalog catalog = build_catalog(records, species_count);

    Dataset ds;
    const int dim = feature_row_dim(grid, with_encoder);
    ds.features = Matrix(static_cast<int>(records.size()), dim);
    ds.positives.reserve(records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        assemble_feature_row(grid, with_encoder, records[i].lon, records[i].lat,
                             ds.features.row(static_cast<int>(i)));
        ds.positives.push_back(records[i].species_id);
    }
    return {std::move(ds), std::move(catalog)};
}

std::vector<FrequencyBucket> group_by_frequency(const SpeciesCatalog& catalog,
                                                const std::vector<long long>& edges) {
    for (size_t i = 0; i + 1 < edges.size(); ++i) {
        if (edges[i] >= edges[i + 1]) {
            throw ValidationError("bucket edges must be strictly ascending");
        }
    }
    std::vector<FrequencyBucket> buckets(edges.size() + 1);
    for (size_t b = 0; b < buckets.size(); ++b) {
        auto& bucket = buckets[b];
        bucket.lo = b == 0 ? 0 : edges[b - 1];
        bucket.hi = b < edges.size() ? edges[b] : -1;
        std::ostringstream label;
        if (b == 0) {
            label << "<=" << bucket.hi;
        } else if (b < edges.size()) {
            label << '(' << bucket.lo << ',' << bucket.hi << ']';
        } else {
            label << '>' << bucket.lo;
        }
        bucket.label = label.str();
    }
    if (edges.empty()) buckets[0].label = "all";

    for (int s = 0; s < catalog.species_count; ++s) {
        const long long c = catalog.counts[s];
        size_t b = 0;
        while (b < edges.size() && c > edges[b]) ++b;
        buckets[b].species.push_back(s);
    }
    return buckets;
}

void save_eval_set_csv(const EvalSet& eval, const std::string& sites_path,
                       const std::string& labels_path) {
    std::ofstream sites(sites_path);
    if (!sites) throw ValidationError("cannot open eval sites file for writing: " + sites_path);
    sites << "site_id,lon,lat\n";
    char buf[128];
    for (int i = 0; i < eval.site_count(); ++i) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", i, eval.lons[i], eval.lats[i]);
        sites << buf;
    }
    if (!sites) throw ValidationError("failed writing eval sites file: " + sites_path);

    std::ofstream labels(labels_path);
    if (!labels) throw ValidationError("cannot open eval labels file for writing: " + labels_path);
    labels << "site_id,species_id,label\n";
    for (int i = 0; i < eval.site_count(); ++i) {
        for (int s = 0; s < eval.species_count; ++s) {
            labels << i << ',' << s << ',' << int(eval.label(i, s)) << '\n';
        }
    }
    if (!labels) throw ValidationError("failed writing eval labels file: " + labels_path);
}

EvalSet load_eval_set_csv(const std::string& sites_path, const std::string& labels_path,
                          const EnvGrid& grid, bool with_encoder, int species_count) {
    if (species_count < 1) throw ValidationError("eval set requires species_count >= 1");

    std::ifstream sites(sites_path);
    if (!sites) throw ValidationError("cannot open eval sites file: " + sites_path);
    std::string line;
    if (!std::getline(sites, line) || strip_cr(line) != "site_id,lon,lat") {
        throw ValidationError("eval sites header must be 'site_id,lon,lat' in " + sites_path);
    }

    EvalSet eval;
    eval.species_count = species_count;
    int line_no = 1;
    while (std::getline(sites, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto toks = split_csv_line(line);
        long long id = -1;
        double lon = 0, lat = 0;
        try {
            if (toks.size() != 3) throw std::invalid_argument(line);
            id = parse_ll(toks[0]);
            lon = parse_double(toks[1]);
            lat = parse_double(toks[2]);
        } catch (const std::exception&) {
            throw ValidationError("malformed eval site row at line " + std::to_string(line_no) +
                                  " in " + sites_path);
        }
        if (id != static_cast<long long>(eval.lons.size())) {
            throw ValidationError("eval site ids must be 0..n-1 in order; bad id at line " +
                                  std::to_string(line_no) + " in " + sites_path);
        }
        eval.lons.push_back(lon);
        eval.lats.push_back(lat);
    }
    const int n_sites = static_cast<int>(eval.lons.size());
    if (n_sites == 0) throw ValidationError("eval sites file has no sites: " + sites_path);

    eval.features = Matrix(n_sites, feature_row_dim(grid, with_encoder));
    for (int i = 0; i < n_sites; ++i) {
        assemble_feature_row(grid, with_encoder, eval.lons[i], eval.lats[i], eval.features.row(i));
    }

    std::ifstream labels(labels_path);
    if (!labels) throw ValidationError("cannot open eval labels file: " + labels_path);
    if (!std::getline(labels, line) || strip_cr(line) != "site_id,species_id,label") {
        throw ValidationError("eval labels header must be 'site_id,species_id,label' in " +
                              labels_path);
    }
    eval.labels.assign(static_cast<size_t>(n_sites) * species_count, 0);
    std::vector<char> seen(eval.labels.size(), 0);
    line_no = 1;
    while (std::getline(labels, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto toks = split_csv_line(line);
        long long site = -1, species = -1, value = -1;
        try {
            if (toks.size() != 3) throw std::invalid_argument(line);
            site = parse_ll(toks[0]);
            species = parse_ll(toks[1]);
            value = parse_ll(toks[2]);
        } catch (const std::exception&) {
            throw ValidationError("malformed eval label row at line " + std::to_string(line_no) +
                                  " in " + labels_path);
        }
        if (site < 0 || site >= n_sites || species < 0 || species >= species_count ||
            (value != 0 && value != 1)) {
            throw ValidationError("eval label out of range at line " + std::to_string(line_no) +
                                  " in " + labels_path);
        }
        const size_t at = static_cast<size_t>(site) * species_count + species;
        eval.labels[at] = static_cast<uint8_t>(value);
        seen[at] = 1;
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
        throw ValidationError("eval labels file is missing site/species pairs: " + labels_path);
    }
    eval.refresh_usability();
    return eval;
}

} // namespace sdm
