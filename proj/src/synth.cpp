#include "sdm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "sdm/errors.hpp"

namespace sdm {

using json = nlohmann::json;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// sub-stream tags hanging off the world seed
enum Stream : uint64_t {
    kGridStream = 1,
    kNicheStream = 2,
    kPresenceStream = 3,
    kEvalStream = 4,
    kGeoPriorStream = 5,
};

std::array<double, 2> jitter_point_in_cell(const EnvGrid& grid, int cell, Rng& rng) {
    const int iy = cell / grid.width, ix = cell % grid.width;
    // jitter in (0, 1] so the point extracts back to the drawn cell
    const double lon =
        std::min(grid.lon_max, grid.lon_min + (ix + rng.uniform_pos()) * grid.cell_width());
    const double lat =
        std::min(grid.lat_max, grid.lat_min + (iy + rng.uniform_pos()) * grid.cell_height());
    return {lon, lat};
}

} // namespace

void SynthConfig::validate() const {
    if (species < 2) throw ValidationError("synth species must be >= 2");
    if (grid_width < 1 || grid_height < 1) {
        throw ValidationError("synth grid dimensions must be >= 1");
    }
    if (feature_dim < 1) throw ValidationError("synth feature_dim must be >= 1");
    if (total_observations < species) {
        throw ValidationError("synth total_observations must be >= species");
    }
    if (!(tail_exponent >= 0.0)) throw ValidationError("synth tail_exponent must be >= 0");
    if (!(niche_width_min > 0.0) || !(niche_width_max >= niche_width_min)) {
        throw ValidationError("synth niche width range must satisfy 0 < min <= max");
    }
    if (eval_sites < 1) throw ValidationError("synth eval_sites must be >= 1");
    if (!(lon_min < lon_max) || !(lat_min < lat_max)) {
        throw ValidationError("synth bounds must satisfy lon_min < lon_max, lat_min < lat_max");
    }
    if (geo_prior_cases < 0) throw ValidationError("synth geo_prior_cases must be >= 0");
    if (geo_prior_corrupt_fraction < 0.0 || geo_prior_corrupt_fraction > 1.0) {
        throw ValidationError("synth geo_prior_corrupt_fraction must be in [0, 1]");
    }
}

double NicheModel::suitability(std::span<const double> features) const {
    double d2 = 0.0;
    for (size_t f = 0; f < features.size(); ++f) {
        const double d = features[f] - center[f];
        d2 += d * d;
    }
    return std::exp(-d2 / (2.0 * width * width));
}

EnvGrid generate_env_grid(const SynthConfig& config, Rng& rng) {
    config.validate();
    EnvGrid grid;
    grid.width = config.grid_width;
    grid.height = config.grid_height;
    grid.feature_dim = config.feature_dim;
    grid.lon_min = config.lon_min;
    grid.lon_max = config.lon_max;
    grid.lat_min = config.lat_min;
    grid.lat_max = config.lat_max;
    const int cells = grid.cell_count();
    grid.values.assign(static_cast<size_t>(cells) * grid.feature_dim, 0.0);

    constexpr int kWaves = 8;
    constexpr double kMaxFreq = 3.0; // cycles across the grid, keeps fields smooth
    std::vector<double> channel(cells);
    for (int f = 0; f < grid.feature_dim; ++f) {
        std::array<double, kWaves> amp, fx, fy, phase;
        for (int k = 0; k < kWaves; ++k) {
            amp[k] = rng.uniform(0.5, 1.5);
            fx[k] = rng.uniform(-kMaxFreq, kMaxFreq);
            fy[k] = rng.uniform(-kMaxFreq, kMaxFreq);
            phase[k] = rng.uniform(0.0, kTwoPi);
        }
        for (int iy = 0; iy < grid.height; ++iy) {
            const double gy = (iy + 0.5) / grid.height;
            for (int ix = 0; ix < grid.width; ++ix) {
                const double gx = (ix + 0.5) / grid.width;
                double v = 0.0;
                for (int k = 0; k < kWaves; ++k) {
                    v += amp[k] * std::cos(kTwoPi * (fx[k] * gx + fy[k] * gy) + phase[k]);
                }
                channel[iy * grid.width + ix] = v;
            }
        }
        const double mean = std::accumulate(channel.begin(), channel.end(), 0.0) / cells;
        double var = 0.0;
        for (double& v : channel) {
            v -= mean;
            var += v * v;
        }
        var /= cells;
        const double scale = var > 1e-24 ? 1.0 / std::sqrt(var) : 0.0;
        for (int c = 0; c < cells; ++c) {
            grid.values[static_cast<size_t>(c) * grid.feature_dim + f] = channel[c] * scale;
        }
    }
    return grid;
}

std::vector<long long> draw_longtail_counts(int species, long long total, double exponent) {
    if (species < 1) throw ValidationError("draw_longtail_counts needs species >= 1");
    if (total < species) throw ValidationError("draw_longtail_counts needs total >= species");
    if (!(exponent >= 0.0)) throw ValidationError("tail exponent must be >= 0");

    std::vector<double> quota(species);
    double norm = 0.0;
    for (int r = 0; r < species; ++r) {
        quota[r] = std::pow(static_cast<double>(r + 1), -exponent);
        norm += quota[r];
    }
    std::vector<long long> counts(species);
    std::vector<std::pair<double, int>> remainder(species);
    long long assigned = 0;
    for (int r = 0; r < species; ++r) {
        const double q = static_cast<double>(total) * quota[r] / norm;
        counts[r] = static_cast<long long>(std::floor(q));
        remainder[r] = {q - std::floor(q), r};
        assigned += counts[r];
    }
    // largest remainder first, rank breaking ties, until the total is exact
    std::sort(remainder.begin(), remainder.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (long long k = 0; k < total - assigned; ++k) {
        ++counts[remainder[static_cast<size_t>(k) % remainder.size()].second];
    }
    // no species may starve; take from the rightmost maximum to keep the
    // sequence non-increasing
    for (int r = 0; r < species; ++r) {
        if (counts[r] == 0) {
            int donor = 0;
            for (int d = 1; d < species; ++d) {
                if (counts[d] >= counts[donor]) donor = d;
            }
            --counts[donor];
            counts[r] = 1;
        }
    }
    return counts;
}

std::vector<NicheModel> generate_niches(const EnvGrid& grid, int species, double width_min,
                                        double width_max, Rng& rng) {
    grid.validate();
    std::vector<NicheModel> niches(species);
    for (int s = 0; s < species; ++s) {
        const int cell = static_cast<int>(rng.uniform_int(grid.cell_count()));
        const auto feats = grid.cell_features(cell);
        niches[s].center.assign(feats.begin(), feats.end());
        niches[s].width = rng.uniform(width_min, width_max);
    }
    return niches;
}

std::vector<OccurrenceRecord> sample_presences(const std::vector<NicheModel>& niches,
                                               const EnvGrid& grid,
                                               const std::vector<long long>& counts,
                                               uint64_t seed) {
    grid.validate();
    if (counts.size() != niches.size()) {
        throw ValidationError("sample_presences: counts and niches must match");
    }
    const int cells = grid.cell_count();
    std::vector<OccurrenceRecord> records;
    std::vector<double> cumulative(cells);

    for (int s = 0; s < static_cast<int>(niches.size()); ++s) {
        if (counts[s] < 1) throw ValidationError("sample_presences: every count must be >= 1");
        double running = 0.0;
        double max_suit = 0.0;
        for (int c = 0; c < cells; ++c) {
            const double suit = niches[s].suitability(grid.cell_features(c));
            max_suit = std::max(max_suit, suit);
            running += suit;
            cumulative[c] = running;
        }
        if (max_suit < 1e-12) {
            throw ValidationError("species " + std::to_string(s) +
                                  " has ~zero suitability everywhere; cannot place records");
        }
        Rng rng(derive_seed(seed, static_cast<uint64_t>(s)));
        for (long long k = 0; k < counts[s]; ++k) {
            const double u = rng.uniform() * running;
            const int cell = static_cast<int>(
                std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
            const auto pt = jitter_point_in_cell(grid, std::min(cell, cells - 1), rng);
            records.push_back({pt[0], pt[1], s});
        }
    }
    return records;
}

EvalSet generate_eval_set(const std::vector<NicheModel>& niches, const EnvGrid& grid, int n_sites,
                          bool with_encoder, Rng& rng) {
    grid.validate();
    if (n_sites < 1) throw ValidationError("generate_eval_set: need >= 1 site");
    const int species = static_cast<int>(niches.size());

    EvalSet eval;
    eval.species_count = species;
    eval.features = Matrix(n_sites, feature_row_dim(grid, with_encoder));
    eval.labels.assign(static_cast<size_t>(n_sites) * species, 0);
    std::vector<int> site_cell(n_sites);
    for (int i = 0; i < n_sites; ++i) {
        const int cell = static_cast<int>(rng.uniform_int(grid.cell_count()));
        site_cell[i] = cell;
        const auto pt = jitter_point_in_cell(grid, cell, rng);
        eval.lons.push_back(pt[0]);
        eval.lats.push_back(pt[1]);
        assemble_feature_row(grid, with_encoder, pt[0], pt[1], eval.features.row(i));
    }

    std::vector<double> suit(n_sites);
    for (int s = 0; s < species; ++s) {
        for (int i = 0; i < n_sites; ++i) {
            suit[i] = niches[s].suitability(grid.cell_features(site_cell[i]));
        }
        Rng srng = rng.derive(0x6c6162ull + static_cast<uint64_t>(s)); // per-species label stream
        for (int attempt = 0; attempt < 1 + 10; ++attempt) {
            bool any_pos = false, any_neg = false;
            for (int i = 0; i < n_sites; ++i) {
                const uint8_t v = srng.uniform() < suit[i] ? 1 : 0;
                eval.labels[static_cast<size_t>(i) * species + s] = v;
                (v ? any_pos : any_neg) = true;
            }
            if (any_pos && any_neg) break;
        }
    }
    eval.refresh_usability();
    return eval;
}

std::vector<GeoPriorCase> generate_geo_prior_cases(const std::vector<NicheModel>& niches,
                                                   const EnvGrid& grid, int n_cases,
                                                   double corrupt_fraction, Rng& rng) {
    grid.validate();
    if (n_cases < 1) throw ValidationError("generate_geo_prior_cases: need >= 1 case");
    if (corrupt_fraction < 0.0 || corrupt_fraction > 1.0) {
        throw ValidationError("corrupt_fraction must be in [0, 1]");
    }
    const int species = static_cast<int>(niches.size());
    if (species < 2) throw ValidationError("geo-prior benchmark needs >= 2 species");

    // exact corrupted share: shuffle case indices, corrupt the first chunk
    const int n_corrupt = static_cast<int>(std::llround(corrupt_fraction * n_cases));
    std::vector<int> order(n_cases);
    std::iota(order.begin(), order.end(), 0);
    for (int i = n_cases - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_int(i + 1));
        std::swap(order[i], order[j]);
    }
    std::vector<char> corrupt(n_cases, 0);
    for (int k = 0; k < n_corrupt; ++k) corrupt[order[k]] = 1;

    std::vector<GeoPriorCase> cases(n_cases);
    std::vector<double> suit(species);
    for (int i = 0; i < n_cases; ++i) {
        const int cell = static_cast<int>(rng.uniform_int(grid.cell_count()));
        const auto pt = jitter_point_in_cell(grid, cell, rng);
        GeoPriorCase& c = cases[i];
        c.lon = pt[0];
        c.lat = pt[1];

        double total = 0.0;
        for (int s = 0; s < species; ++s) {
            suit[s] = niches[s].suitability(grid.cell_features(cell));
            total += suit[s];
        }
        const double u = rng.uniform() * total;
        double running = 0.0;
        c.true_class = species - 1;
        for (int s = 0; s < species; ++s) {
            running += suit[s];
            if (u < running) {
                c.true_class = s;
                break;
            }
        }

        c.vision_scores.resize(species);
        if (corrupt[i]) {
            int rival = static_cast<int>(rng.uniform_int(species - 1));
            if (rival >= c.true_class) ++rival;
            for (int s = 0; s < species; ++s) c.vision_scores[s] = rng.uniform(0.0, 0.8);
            c.vision_scores[rival] = 1.0;
            c.vision_scores[c.true_class] = 0.9; // true class ranked second
        } else {
            for (int s = 0; s < species; ++s) c.vision_scores[s] = rng.uniform(0.0, 0.5);
            c.vision_scores[c.true_class] = 1.0;
        }
    }
    return cases;
}

SynthWorld generate_world(const SynthConfig& config, bool with_encoder) {
    config.validate();
    SynthWorld world;
    Rng grid_rng = Rng(config.seed).derive(kGridStream);
    world.grid = generate_env_grid(config, grid_rng);

    Rng niche_rng = Rng(config.seed).derive(kNicheStream);
    world.niches = generate_niches(world.grid, config.species, config.niche_width_min,
                                   config.niche_width_max, niche_rng);

    const auto counts =
        draw_longtail_counts(config.species, config.total_observations, config.tail_exponent);
    world.records = sample_presences(world.niches, world.grid, counts,
                                     derive_seed(config.seed, kPresenceStream));

    Rng eval_rng = Rng(config.seed).derive(kEvalStream);
    world.eval =
        generate_eval_set(world.niches, world.grid, config.eval_sites, with_encoder, eval_rng);

    if (config.geo_prior_cases > 0) {
        Rng gp_rng = Rng(config.seed).derive(kGeoPriorStream);
        world.geo_prior = generate_geo_prior_cases(world.niches, world.grid,
                                                   config.geo_prior_cases,
                                                   config.geo_prior_corrupt_fraction, gp_rng);
    }
    return world;
}

std::string synth_manifest_json(const SynthConfig& config,
                                const std::vector<std::string>& files) {
    json m;
    m["generator"] = "synthetic-gaussian-niche";
    m["synthetic"] = true;
    m["config"] = {{"species", config.species},
                   {"grid_width", config.grid_width},
                   {"grid_height", config.grid_height},
                   {"feature_dim", config.feature_dim},
                   {"total_observations", config.total_observations},
                   {"tail_exponent", config.tail_exponent},
                   {"niche_width_min", config.niche_width_min},
                   {"niche_width_max", config.niche_width_max},
                   {"eval_sites", config.eval_sites},
                   {"bounds", {config.lon_min, config.lon_max, config.lat_min, config.lat_max}},
                   {"geo_prior_cases", config.geo_prior_cases},
                   {"geo_prior_corrupt_fraction", config.geo_prior_corrupt_fraction},
                   {"seed", config.seed}};
    m["files"] = files;
    return m.dump(2) + "\n";
}

} // namespace sdm
