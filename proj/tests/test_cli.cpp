// End-to-end checks that drive the built `sdm` binary.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#ifndef SDM_CLI_PATH
#define SDM_CLI_PATH "./sdm"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct RunOutput {
    int exit_code = -1;
    std::string stdout_text;
};

RunOutput run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path log = fs::temp_directory_path() / ("sdm_cli_out_" +
                                                      std::to_string(counter++) + ".log");
    const std::string cmd =
        std::string(SDM_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunOutput out;
    out.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    out.stdout_text = ss.str();
    fs::remove(log);
    return out;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

// small world shared by the pipeline cases
const std::string kWorldArgs =
    "--species 6 --grid-width 10 --grid-height 8 --features 4 --total-observations 600 "
    "--tail-exponent 1.0 --eval-sites 150 --geo-prior-cases 60";

} // namespace

TEST_CASE("synth-generate writes the world files and creates the output dir") {
    TempDir tmp("sdm_cli_synth");
    const std::string out = tmp.str() + "/fresh/world";
    const auto res = run_cli("--seed 7 --out-dir " + out + " synth-generate " + kWorldArgs);
    CHECK(res.exit_code == 0);
    for (const char* name : {"occurrences.csv", "grid.csv", "eval_sites.csv", "eval_labels.csv",
                             "geo_prior.csv", "manifest.json"}) {
        CHECK(fs::exists(fs::path(out) / name));
    }
    const json manifest = json::parse(read_file(fs::path(out) / "manifest.json"));
    CHECK(manifest["synthetic"] == true);
    CHECK(manifest["config"]["species"] == 6);
    CHECK(manifest["config"]["seed"] == 7);
}

TEST_CASE("synth-generate rejects a non-positive tail exponent, naming the field") {
    TempDir tmp("sdm_cli_synth_bad");
    const auto res = run_cli("--out-dir " + tmp.str() + " synth-generate --species 4 " +
                             "--total-observations 100 --tail-exponent -1.0");
    CHECK(res.exit_code == 1);
    CHECK(res.stdout_text.find("tail_exponent") != std::string::npos);
}

TEST_CASE("train evaluate geo-prior report pipeline") {
    TempDir tmp("sdm_cli_pipeline");
    const std::string world = tmp.str() + "/world";
    REQUIRE(run_cli("--seed 11 --out-dir " + world + " synth-generate " + kWorldArgs).exit_code ==
            0);

    const std::string common = " --occurrences " + world + "/occurrences.csv --grid " + world +
                               "/grid.csv --epochs 3 --lr 0.05 --batch-size 64 "
                               "--hidden-layers 2 --hidden-width 16";

    SUBCASE("training writes history with one row per epoch plus checkpoint") {
        const std::string out = tmp.str() + "/run_bce";
        const auto res =
            run_cli("--seed 3 --out-dir " + out + " train --loss bce" + common);
        CHECK(res.exit_code == 0);
        CHECK(fs::exists(fs::path(out) / "checkpoint.bin"));
        std::ifstream hist(fs::path(out) / "history.csv");
        std::string line;
        int rows = 0;
        std::getline(hist, line);
        CHECK(line == "epoch,loss");
        while (std::getline(hist, line)) {
            if (!line.empty()) ++rows;
        }
        CHECK(rows == 3);
    }

    SUBCASE("reruns with the same config and seed are byte-identical") {
        const std::string out1 = tmp.str() + "/rep1";
        const std::string out2 = tmp.str() + "/rep2";
        CHECK(run_cli("--seed 5 --out-dir " + out1 + " train --loss full --lambda 16" + common)
                  .exit_code == 0);
        CHECK(run_cli("--seed 5 --out-dir " + out2 + " train --loss full --lambda 16" + common)
                  .exit_code == 0);
        CHECK(read_file(fs::path(out1) / "checkpoint.bin") ==
              read_file(fs::path(out2) / "checkpoint.bin"));
        CHECK(read_file(fs::path(out1) / "history.csv") ==
              read_file(fs::path(out2) / "history.csv"));
        CHECK(!read_file(fs::path(out1) / "checkpoint.bin").empty());
    }

    SUBCASE("evaluate emits the report schema and geo-prior and report merge run") {
        const std::string run = tmp.str() + "/run_fw";
        REQUIRE(run_cli("--seed 9 --out-dir " + run +
                        " train --loss full_weighted --lambda2 0.5" + common)
                    .exit_code == 0);

        const std::string eval_out = tmp.str() + "/eval_fw";
        const auto eval_res = run_cli(
            "--seed 9 --out-dir " + eval_out + " evaluate --checkpoint " + run +
            "/checkpoint.bin --grid " + world + "/grid.csv --occurrences " + world +
            "/occurrences.csv --eval-sites " + world + "/eval_sites.csv --eval-labels " + world +
            "/eval_labels.csv --rare-threshold 60 --label fw");
        CHECK(eval_res.exit_code == 0);
        const json report = json::parse(read_file(fs::path(eval_out) / "report.json"));
        CHECK(report.contains("all_mean"));
        CHECK(report.contains("rare_mean"));
        CHECK(report.contains("buckets"));
        CHECK(report["label"] == "fw");
        CHECK(report["auc"].contains("all_mean"));
        CHECK(report["ap"].contains("all_mean"));
        CHECK(fs::exists(fs::path(eval_out) / "report.csv"));

        const std::string gp_out = tmp.str() + "/gp";
        const auto gp_res = run_cli("--out-dir " + gp_out + " geo-prior --checkpoint " + run +
                                    "/checkpoint.bin --grid " + world + "/grid.csv --cases " +
                                    world + "/geo_prior.csv");
        CHECK(gp_res.exit_code == 0);
        const json gp = json::parse(read_file(fs::path(gp_out) / "geo_prior.json"));
        CHECK(gp.contains("delta_top1_pp"));
        CHECK(gp["cases_used"] == 60);

        const std::string rep_out = tmp.str() + "/cmp";
        const auto rep_res =
            run_cli("--out-dir " + rep_out + " report " + eval_out + "/report.json");
        CHECK(rep_res.exit_code == 0);
        const std::string csv = read_file(fs::path(rep_out) / "comparison.csv");
        CHECK(csv.find("label,auc_all,auc_rare,ap_all,ap_rare") != std::string::npos);
        CHECK(csv.find("fw,") != std::string::npos);
    }

    SUBCASE("evaluate rejects a species-count mismatch as validation") {
        const std::string run = tmp.str() + "/run_mismatch";
        REQUIRE(run_cli("--seed 13 --out-dir " + run + " train --loss bce" + common).exit_code ==
                0);
        // a second world with a different species count
        const std::string world2 = tmp.str() + "/world2";
        REQUIRE(run_cli("--seed 14 --out-dir " + world2 +
                        " synth-generate --species 9 --grid-width 10 --grid-height 8 "
                        "--features 4 --total-observations 300 --eval-sites 40")
                    .exit_code == 0);
        const auto res = run_cli("--out-dir " + tmp.str() + "/eval_mismatch evaluate " +
                                 "--checkpoint " + run + "/checkpoint.bin --grid " + world2 +
                                 "/grid.csv --occurrences " + world2 + "/occurrences.csv " +
                                 "--eval-sites " + world2 + "/eval_sites.csv --eval-labels " +
                                 world2 + "/eval_labels.csv");
        CHECK(res.exit_code == 1);
    }
}

TEST_CASE("full_weighted training on a single-species world fails before epoch 1") {
    TempDir tmp("sdm_cli_singular");
    // hand-written world: one species owns every record
    const fs::path occ = tmp.path / "occurrences.csv";
    {
        std::ofstream out(occ);
        out << "lon,lat,species_id\n";
        for (int i = 0; i < 12; ++i) out << 0.5 << "," << 0.5 << ",0\n";
    }
    const fs::path grid = tmp.path / "grid.csv";
    {
        std::ofstream out(grid);
        out << "2,2,0,2,0,2,1\n0.1\n0.2\n0.3\n0.4\n";
    }
    const auto res = run_cli("--out-dir " + tmp.str() + "/run train --loss full_weighted " +
                             "--occurrences " + occ.string() + " --grid " + grid.string() +
                             " --epochs 5 --batch-size 4 --hidden-layers 1 --hidden-width 4");
    CHECK(res.exit_code == 1);
    CHECK(res.stdout_text.find("singular") != std::string::npos);
    CHECK(res.stdout_text.find("species 0") != std::string::npos);
    CHECK_FALSE(fs::exists(tmp.path / "run" / "checkpoint.bin"));
}

TEST_CASE("config file values apply and flags win over them") {
    TempDir tmp("sdm_cli_config");
    const fs::path cfg_path = tmp.path / "config.json";
    {
        json cfg;
        cfg["seed"] = 21;
        cfg["out_dir"] = (tmp.path / "from_config").string();
        cfg["synth"] = {{"species", 5},        {"grid_width", 8},  {"grid_height", 8},
                        {"feature_dim", 3},    {"total_observations", 250},
                        {"tail_exponent", 0.8}, {"eval_sites", 50}};
        std::ofstream out(cfg_path);
        out << cfg.dump(2);
    }
    const auto res = run_cli("--config " + cfg_path.string() + " synth-generate --species 7");
    CHECK(res.exit_code == 0);
    const json manifest = json::parse(read_file(tmp.path / "from_config" / "manifest.json"));
    CHECK(manifest["config"]["species"] == 7); // flag wins
    CHECK(manifest["config"]["grid_width"] == 8); // config file applies
    CHECK(manifest["config"]["seed"] == 21);
}

TEST_CASE("a stale lock makes concurrent use fail with a runtime exit") {
    TempDir tmp("sdm_cli_lock");
    fs::create_directories(tmp.path / "out");
    std::ofstream(tmp.path / "out" / ".sdm.lock") << "held\n";
    const auto res =
        run_cli("--out-dir " + (tmp.path / "out").string() + " synth-generate --species 4 " +
                "--total-observations 100");
    CHECK(res.exit_code == 2);
    CHECK(res.stdout_text.find("lock") != std::string::npos);
}
