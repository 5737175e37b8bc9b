#include "sdm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "sdm/errors.hpp"

namespace sdm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Matrix eval_forward_all(Parameters& params, const Matrix& features) {
    // eval-mode rows are independent, so chunking is only a memory choice
    const int chunk = 1024;
    Matrix scores(features.rows, params.config.output_dim);
    for (int start = 0; start < features.rows; start += chunk) {
        const int b = std::min(chunk, features.rows - start);
        Matrix batch(b, features.cols);
        std::copy(features.row(start), features.row(start) + static_cast<size_t>(b) * features.cols,
                  batch.row(0));
        const Matrix out = forward(params, batch, RunMode::eval);
        std::copy(out.data.begin(), out.data.end(), scores.row(start));
    }
    return scores;
}

double mean_over(const std::vector<double>& values, const std::vector<int>& idx, int* counted) {
    double sum = 0.0;
    int n = 0;
    for (int s : idx) {
        if (!std::isnan(values[s])) {
            sum += values[s];
            ++n;
        }
    }
    if (counted) *counted = n;
    return n > 0 ? sum / n : kNaN;
}

} // namespace

double roc_auc(std::span<const double> scores, std::span<const uint8_t> labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw ValidationError("roc_auc requires matching non-empty scores and labels");
    }
    const long long pos = std::count(labels.begin(), labels.end(), uint8_t(1));
    const long long neg = static_cast<long long>(labels.size()) - pos;
    if (pos == 0 || neg == 0) {
        throw ValidationError("AUC undefined: labels are constant");
    }

    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&scores](int a, int b) { return scores[a] < scores[b]; });

    // rank-sum with average ranks over tied groups; exact in double for
    // any realistic site count
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < idx.size()) {
        size_t j = i;
        while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (size_t k = i; k <= j; ++k) {
            if (labels[idx[k]]) rank_sum_pos += avg_rank;
        }
        i = j + 1;
    }
    const double p = static_cast<double>(pos), n = static_cast<double>(neg);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n);
}

double average_precision(std::span<const double> scores, std::span<const uint8_t> labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw ValidationError("average_precision requires matching non-empty scores and labels");
    }
    const long long pos = std::count(labels.begin(), labels.end(), uint8_t(1));
    if (pos == 0) {
        throw ValidationError("average precision undefined: no positive labels");
    }

    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&scores](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b; // ties by ascending site index
    });

    double sum = 0.0;
    long long hits = 0;
    for (size_t k = 0; k < idx.size(); ++k) {
        if (labels[idx[k]]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    return sum / static_cast<double>(pos);
}

EvaluationResult evaluate(Parameters& params, const EvalSet& eval, const SpeciesCatalog& catalog,
                          long long rare_threshold, const std::vector<long long>& bucket_edges) {
    if (eval.species_count != catalog.species_count) {
        throw ValidationError("eval set species count does not match catalog");
    }
    if (eval.species_count != params.config.output_dim) {
        throw ValidationError("eval set species count does not match model output_dim");
    }
    if (rare_threshold < 1) throw ValidationError("rare_threshold must be >= 1");
    if (eval.site_count() < 1) throw ValidationError("eval set has no sites");

    const Matrix scores = eval_forward_all(params, eval.features);

    EvaluationResult res;
    res.rare_threshold = rare_threshold;
    res.auc.per_species.assign(eval.species_count, kNaN);
    res.ap.per_species.assign(eval.species_count, kNaN);
    res.excluded_species = eval.excluded;

    std::vector<double> col(eval.site_count());
    std::vector<uint8_t> lab(eval.site_count());
    for (int s : eval.usable) {
        for (int i = 0; i < eval.site_count(); ++i) {
            col[i] = scores(i, s);
            lab[i] = eval.label(i, s);
        }
        res.auc.per_species[s] = roc_auc(col, lab);
        res.ap.per_species[s] = average_precision(col, lab);
    }

    std::vector<int> all(eval.species_count);
    std::iota(all.begin(), all.end(), 0);
    std::vector<int> rare;
    for (int s = 0; s < catalog.species_count; ++s) {
        if (catalog.counts[s] <= rare_threshold) rare.push_back(s);
    }
    const auto buckets = group_by_frequency(catalog, bucket_edges);

    for (MetricReport* report : {&res.auc, &res.ap}) {
        report->all_mean = mean_over(report->per_species, all, nullptr);
        report->rare_mean = mean_over(report->per_species, rare, &report->rare_count);
        for (const auto& bucket : buckets) {
            BucketMean bm;
            bm.label = bucket.label;
            bm.mean = mean_over(report->per_species, bucket.species, &bm.species_counted);
            report->buckets.push_back(std::move(bm));
        }
    }
    return res;
}

GeoPriorResult geo_prior_gain(Parameters& params, const std::vector<GeoPriorCase>& cases,
                              const EnvGrid& grid, bool with_encoder) {
    if (cases.empty()) throw ValidationError("geo_prior_gain requires at least one case");
    const int s = params.config.output_dim;
    for (const auto& c : cases) {
        if (c.true_class < 0 || c.true_class >= s) {
            throw ValidationError("geo-prior true_class outside [0, S)");
        }
        if (static_cast<int>(c.vision_scores.size()) != s) {
            throw ValidationError("geo-prior vision score count does not match species count");
        }
        for (double v : c.vision_scores) {
            if (!std::isfinite(v)) throw ValidationError("geo-prior vision score not finite");
        }
    }

    std::vector<int> in_bounds;
    for (size_t i = 0; i < cases.size(); ++i) {
        if (grid.contains(cases[i].lon, cases[i].lat)) {
            in_bounds.push_back(static_cast<int>(i));
        }
    }
    GeoPriorResult res;
    res.cases_skipped = static_cast<int>(cases.size() - in_bounds.size());
    res.cases_used = static_cast<int>(in_bounds.size());
    if (in_bounds.empty()) {
        throw ValidationError("no geo-prior case lies inside the grid bounds");
    }

    Matrix features(static_cast<int>(in_bounds.size()), feature_row_dim(grid, with_encoder));
    for (size_t k = 0; k < in_bounds.size(); ++k) {
        const auto& c = cases[in_bounds[k]];
        assemble_feature_row(grid, with_encoder, c.lon, c.lat, features.row(static_cast<int>(k)));
    }
    const Matrix suit = eval_forward_all(params, features);

    auto argmax = [](std::span<const double> v) {
        int best = 0;
        for (int j = 1; j < static_cast<int>(v.size()); ++j) {
            if (v[j] > v[best]) best = j; // ties keep the lower index
        }
        return best;
    };

    int base_correct = 0, comb_correct = 0;
    std::vector<double> combined(s);
    for (size_t k = 0; k < in_bounds.size(); ++k) {
        const auto& c = cases[in_bounds[k]];
        if (argmax(c.vision_scores) == c.true_class) ++base_correct;
        for (int j = 0; j < s; ++j) combined[j] = c.vision_scores[j] * suit(static_cast<int>(k), j);
        if (argmax(combined) == c.true_class) ++comb_correct;
    }
    res.baseline_top1 = static_cast<double>(base_correct) / res.cases_used;
    res.combined_top1 = static_cast<double>(comb_correct) / res.cases_used;
    res.delta_top1_pp = (res.combined_top1 - res.baseline_top1) * 100.0;
    return res;
}

std::vector<GeoPriorCase> load_geo_prior_cases(const std::string& path, int species_count) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open geo-prior file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("geo-prior file is empty: " + path);

    std::vector<GeoPriorCase> cases;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        std::vector<std::string> toks;
        while (std::getline(ls, tok, ',')) toks.push_back(tok);
        if (static_cast<int>(toks.size()) != 3 + species_count) {
            throw ValidationError("geo-prior row has wrong field count at line " +
                                  std::to_string(line_no) + " in " + path);
        }
        GeoPriorCase c;
        try {
            size_t pos = 0;
            c.lon = std::stod(toks[0], &pos);
            c.lat = std::stod(toks[1]);
            c.true_class = std::stoi(toks[2]);
            c.vision_scores.resize(species_count);
            for (int j = 0; j < species_count; ++j) c.vision_scores[j] = std::stod(toks[3 + j]);
        } catch (const std::exception&) {
            throw ValidationError("malformed geo-prior row at line " + std::to_string(line_no) +
                                  " in " + path);
        }
        if (c.true_class < 0 || c.true_class >= species_count) {
            throw ValidationError("geo-prior true_class out of range at line " +
                                  std::to_string(line_no) + " in " + path);
        }
        cases.push_back(std::move(c));
    }
    return cases;
}

void save_geo_prior_cases(const std::vector<GeoPriorCase>& cases, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open geo-prior file for writing: " + path);
    const int s = cases.empty() ? 0 : static_cast<int>(cases[0].vision_scores.size());
    out << "lon,lat,true_class";
    for (int j = 0; j < s; ++j) out << ",score_" << j;
    out << '\n';
    char buf[96];
    for (const auto& c : cases) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d", c.lon, c.lat, c.true_class);
        out << buf;
        for (double v : c.vision_scores) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw ValidationError("failed writing geo-prior file: " + path);
}

} // namespace sdm
