#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "sdm/data.hpp"
#include "sdm/errors.hpp"

using namespace sdm;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
    const fs::path path = fs::temp_directory_path() / name;
    std::ofstream out(path);
    out << content;
    return path;
}

std::string error_message(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

EnvGrid tiny_grid(int f = 2) {
    EnvGrid g;
    g.width = 2;
    g.height = 2;
    g.feature_dim = f;
    g.lon_min = 0.0;
    g.lon_max = 10.0;
    g.lat_min = 40.0;
    g.lat_max = 50.0;
    g.values.resize(static_cast<size_t>(4) * f);
    for (size_t i = 0; i < g.values.size(); ++i) g.values[i] = 0.25 * static_cast<double>(i);
    return g;
}

} // namespace

TEST_CASE("load_occurrences_csv parses rows in order") {
    const auto path = write_temp("sdm_occ1.csv", "lon,lat,species_id\n5.0,45.0,0\n6.0,46.0,1\n");
    const auto recs = load_occurrences_csv(path.string());
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].lon == 5.0);
    CHECK(recs[0].lat == 45.0);
    CHECK(recs[0].species_id == 0);
    CHECK(recs[1].species_id == 1);
    fs::remove(path);
}

TEST_CASE("load_occurrences_csv accepts a header-only file") {
    const auto path = write_temp("sdm_occ2.csv", "lon,lat,species_id\n");
    CHECK(load_occurrences_csv(path.string()).empty());
    fs::remove(path);
}

TEST_CASE("load_occurrences_csv reports the line of a bad species id") {
    const auto path = write_temp("sdm_occ3.csv", "lon,lat,species_id\n5.0,45.0,-1\n");
    const auto msg = error_message([&] { load_occurrences_csv(path.string()); });
    CHECK(msg.find("invalid species id at line 2") != std::string::npos);
    fs::remove(path);
}

TEST_CASE("load_occurrences_csv rejects malformed rows and bad coordinates") {
    const auto p1 = write_temp("sdm_occ4.csv", "lon,lat,species_id\n5.0,45.0,0\n1.0,abc,2\n");
    CHECK(error_message([&] { load_occurrences_csv(p1.string()); }).find("line 3") !=
          std::string::npos);
    const auto p2 = write_temp("sdm_occ5.csv", "lon,lat,species_id\n181.0,45.0,0\n");
    CHECK_THROWS_AS(load_occurrences_csv(p2.string()), ValidationError);
    const auto p3 = write_temp("sdm_occ6.csv", "lon,lat,species\n");
    CHECK_THROWS_AS(load_occurrences_csv(p3.string()), ValidationError);
    CHECK_THROWS_AS(load_occurrences_csv("/nonexistent/file.csv"), ValidationError);
    fs::remove(p1);
    fs::remove(p2);
    fs::remove(p3);
}

TEST_CASE("cap_per_species keeps min(count, cap) records per species") {
    std::vector<OccurrenceRecord> recs;
    for (int i = 0; i < 5; ++i) recs.push_back({double(i), 0.0, 0});
    for (int i = 0; i < 2; ++i) recs.push_back({double(i), 1.0, 1});
    Rng rng(7);
    const auto capped = cap_per_species(recs, 3, rng);
    const auto count = [&](int s) {
        return std::count_if(capped.begin(), capped.end(),
                             [s](const OccurrenceRecord& r) { return r.species_id == s; });
    };
    CHECK(count(0) == 3);
    CHECK(count(1) == 2);
}

TEST_CASE("cap_per_species is the identity when every species fits") {
    std::vector<OccurrenceRecord> recs = {{1, 1, 0}, {2, 2, 1}, {3, 3, 0}};
    Rng rng(9);
    const auto capped = cap_per_species(recs, 2, rng);
    REQUIRE(capped.size() == recs.size());
    for (size_t i = 0; i < recs.size(); ++i) {
        CHECK(capped[i].lon == recs[i].lon);
        CHECK(capped[i].species_id == recs[i].species_id);
    }
}

TEST_CASE("cap_per_species keeps 1000 records at cap 1000") {
    std::vector<OccurrenceRecord> recs;
    for (int i = 0; i < 1000; ++i) recs.push_back({0.0, 0.0, 0});
    Rng rng(3);
    CHECK(cap_per_species(recs, 1000, rng).size() == 1000);
}

TEST_CASE("cap_per_species is deterministic and idempotent") {
    std::vector<OccurrenceRecord> recs;
    Rng gen(1234);
    for (int i = 0; i < 200; ++i) {
        recs.push_back({gen.uniform(-10, 10), gen.uniform(-10, 10),
                        static_cast<int>(gen.uniform_int(5))});
    }
    Rng r1(42), r2(42), r3(42);
    const auto a = cap_per_species(recs, 17, r1);
    const auto b = cap_per_species(recs, 17, r2);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].lon == b[i].lon);
    const auto twice = cap_per_species(a, 17, r3);
    REQUIRE(twice.size() == a.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(twice[i].lon == a[i].lon);
}

TEST_CASE("build_catalog derives inverse-frequency weights") {
    std::vector<OccurrenceRecord> recs;
    for (int i = 0; i < 96; ++i) recs.push_back({0, 0, i % 3});
    for (int i = 0; i < 4; ++i) recs.push_back({0, 0, 3});
    const auto cat = build_catalog(recs, 4);
    CHECK(cat.total == 100);
    CHECK(cat.counts[3] == 4);
    CHECK(cat.weights[3] == 25.0);
}

TEST_CASE("build_catalog single species has weight 1 and flags singularity") {
    std::vector<OccurrenceRecord> recs(10, {0, 0, 0});
    const auto cat = build_catalog(recs, 1);
    CHECK(cat.weights[0] == 1.0);
    CHECK(cat.has_singular_weight());
    CHECK(cat.singular_species() == std::vector<int>{0});
}

TEST_CASE("build_catalog hand example: counts {2, 8} give weights {5, 1.25}") {
    std::vector<OccurrenceRecord> recs;
    for (int i = 0; i < 2; ++i) recs.push_back({0, 0, 0});
    for (int i = 0; i < 8; ++i) recs.push_back({0, 0, 1});
    const auto cat = build_catalog(recs, 2);
    CHECK(cat.weights[0] == 5.0);
    CHECK(cat.weights[1] == 1.25);
    CHECK_FALSE(cat.has_singular_weight());
}

TEST_CASE("build_catalog rejects missing species, listing their ids") {
    std::vector<OccurrenceRecord> recs = {{0, 0, 0}, {0, 0, 3}};
    const auto msg = error_message([&] { build_catalog(recs, 4); });
    CHECK(msg.find("zero records") != std::string::npos);
    CHECK(msg.find('1') != std::string::npos);
    CHECK(msg.find('2') != std::string::npos);
    CHECK_THROWS_AS(build_catalog({{0, 0, 5}}, 2), ValidationError);
}

TEST_CASE("catalog weight identity w_s * n_p(s) = n") {
    Rng gen(77);
    std::vector<OccurrenceRecord> recs;
    for (int i = 0; i < 5000; ++i) {
        recs.push_back({0, 0, static_cast<int>(gen.uniform_int(37))});
    }
    const auto cat = build_catalog(recs, 37);
    for (int s = 0; s < 37; ++s) {
        const double product = cat.weights[s] * static_cast<double>(cat.counts[s]);
        CHECK(std::abs(product - static_cast<double>(cat.total)) <=
              1e-12 * static_cast<double>(cat.total));
    }
}

TEST_CASE("assemble_dataset produces constant-width rows") {
    EnvGrid g = tiny_grid(45);
    std::vector<OccurrenceRecord> recs = {{1.0, 41.0, 0}, {9.0, 49.0, 1}, {2.0, 44.0, 0}};
    auto [plain, cat1] = assemble_dataset(recs, g, false);
    CHECK(plain.dim() == 45);
    CHECK(plain.size() == 3);
    CHECK(cat1.species_count == 2);
    auto [encoded, cat2] = assemble_dataset(recs, g, true);
    CHECK(encoded.dim() == 49);
    CHECK(encoded.positives == std::vector<int>{0, 1, 0});
}

TEST_CASE("assemble_dataset with zero records fails with the missing-species error") {
    EnvGrid g = tiny_grid();
    CHECK_THROWS_AS(assemble_dataset({}, g, false), ValidationError);
}

TEST_CASE("group_by_frequency splits on the rare threshold") {
    std::vector<OccurrenceRecord> recs;
    for (int i = 0; i < 30; ++i) recs.push_back({0, 0, 0});
    for (int i = 0; i < 200; ++i) recs.push_back({0, 0, 1});
    const auto cat = build_catalog(recs, 2);
    const auto buckets = group_by_frequency(cat, {50});
    REQUIRE(buckets.size() == 2);
    CHECK(buckets[0].label == "<=50");
    CHECK(buckets[0].species == std::vector<int>{0});
    CHECK(buckets[1].label == ">50");
    CHECK(buckets[1].species == std::vector<int>{1});
}

TEST_CASE("group_by_frequency leaves the open bucket empty when all fit") {
    std::vector<OccurrenceRecord> recs;
    for (int i = 0; i < 100; ++i) recs.push_back({0, 0, i % 2});
    const auto cat = build_catalog(recs, 2);
    const auto buckets = group_by_frequency(cat, {100});
    CHECK(buckets[0].species.size() == 2);
    CHECK(buckets[1].species.empty());
}

TEST_CASE("group_by_frequency places boundary counts in the first covering bucket") {
    std::vector<OccurrenceRecord> recs;
    for (int i = 0; i < 100; ++i) recs.push_back({0, 0, 0});
    recs.push_back({0, 0, 1});
    const auto cat = build_catalog(recs, 2);
    const auto buckets = group_by_frequency(cat, {50, 100, 1000});
    // count 100 lands in (50, 100]
    CHECK(buckets[1].label == "(50,100]");
    CHECK(buckets[1].species == std::vector<int>{0});
}

TEST_CASE("group_by_frequency buckets partition the species") {
    Rng gen(5);
    std::vector<OccurrenceRecord> recs;
    for (int i = 0; i < 3000; ++i) {
        recs.push_back({0, 0, static_cast<int>(gen.uniform_int(40))});
    }
    const auto cat = build_catalog(recs, 40);
    const auto buckets = group_by_frequency(cat, {10, 60, 90});
    std::vector<int> seen(40, 0);
    for (const auto& b : buckets) {
        for (int s : b.species) ++seen[s];
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    CHECK_THROWS_AS(group_by_frequency(cat, {60, 10}), ValidationError);
}

TEST_CASE("eval set CSV round-trips sites, labels and exclusions") {
    EnvGrid g = tiny_grid(3);
    EvalSet eval;
    eval.species_count = 2;
    eval.lons = {1.0, 6.0, 2.0};
    eval.lats = {41.0, 48.0, 44.0};
    eval.features = Matrix(3, 3);
    eval.labels = {1, 1, 0, 1, 1, 1}; // species 1 constant
    eval.refresh_usability();
    CHECK(eval.usable == std::vector<int>{0});
    CHECK(eval.excluded == std::vector<int>{1});

    const auto sites = fs::temp_directory_path() / "sdm_eval_sites.csv";
    const auto labels = fs::temp_directory_path() / "sdm_eval_labels.csv";
    save_eval_set_csv(eval, sites.string(), labels.string());
    const EvalSet loaded = load_eval_set_csv(sites.string(), labels.string(), g, true, 2);
    CHECK(loaded.site_count() == 3);
    CHECK(loaded.features.cols == 7);
    CHECK(loaded.labels == eval.labels);
    CHECK(loaded.excluded == std::vector<int>{1});
    fs::remove(sites);
    fs::remove(labels);
}
