// Command-line front end: generate synthetic worlds, train under any of the
// three losses, evaluate, and run the geo-prior task from one config file.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdm/data.hpp"
#include "sdm/errors.hpp"
#include "sdm/geo.hpp"
#include "sdm/losses.hpp"
#include "sdm/metrics.hpp"
#include "sdm/model.hpp"
#include "sdm/rng.hpp"
#include "sdm/synth.hpp"
#include "sdm/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sdm;

namespace {

// seed sub-stream tags for the CLI pipeline
enum SeedStream : uint64_t {
    kCapStream = 7,
    kInitStream = 11,
    kShuffleStream = 12,
    kPaStream = 13,
};

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct RunConfig {
    uint64_t seed = 42;
    std::string out_dir = "out";

    struct {
        std::string occurrences, grid, eval_sites, eval_labels, geo_prior, checkpoint;
    } paths;

    SynthConfig synth;

    struct {
        int hidden_layers = 2;
        int hidden_width = 64;
        double batchnorm_eps = 1e-5;
        double batchnorm_momentum = 0.1;
        bool encoder = true;
    } model;

    struct {
        int epochs = 150;
        double lr = 0.001;
        int batch_size = 256;
        long long cap = 0; // 0 = no per-species cap
        int species_count = 0;
        int checkpoint_interval = 0;
        std::string loss = "full_weighted";
        double lambda = 2048.0;
        double lambda1 = 1.0;
        double lambda2 = 0.5;
    } train;

    struct {
        long long rare_threshold = 50;
        std::vector<long long> bucket_edges = {10, 50, 100, 500};
        std::string label;
    } metrics;
};

template <typename T>
void maybe(const json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

void apply_config_file(const std::string& path, RunConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::exception& e) {
        throw ValidationError("config file is not valid JSON: " + std::string(e.what()));
    }
    maybe(j, "seed", cfg.seed);
    maybe(j, "out_dir", cfg.out_dir);
    if (j.contains("paths")) {
        const auto& p = j["paths"];
        maybe(p, "occurrences", cfg.paths.occurrences);
        maybe(p, "grid", cfg.paths.grid);
        maybe(p, "eval_sites", cfg.paths.eval_sites);
        maybe(p, "eval_labels", cfg.paths.eval_labels);
        maybe(p, "geo_prior", cfg.paths.geo_prior);
        maybe(p, "checkpoint", cfg.paths.checkpoint);
    }
    if (j.contains("synth")) {
        const auto& s = j["synth"];
        maybe(s, "species", cfg.synth.species);
        maybe(s, "grid_width", cfg.synth.grid_width);
        maybe(s, "grid_height", cfg.synth.grid_height);
        maybe(s, "feature_dim", cfg.synth.feature_dim);
        maybe(s, "total_observations", cfg.synth.total_observations);
        maybe(s, "tail_exponent", cfg.synth.tail_exponent);
        maybe(s, "niche_width_min", cfg.synth.niche_width_min);
        maybe(s, "niche_width_max", cfg.synth.niche_width_max);
        maybe(s, "eval_sites", cfg.synth.eval_sites);
        maybe(s, "lon_min", cfg.synth.lon_min);
        maybe(s, "lon_max", cfg.synth.lon_max);
        maybe(s, "lat_min", cfg.synth.lat_min);
        maybe(s, "lat_max", cfg.synth.lat_max);
        maybe(s, "geo_prior_cases", cfg.synth.geo_prior_cases);
        maybe(s, "geo_prior_corrupt_fraction", cfg.synth.geo_prior_corrupt_fraction);
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        maybe(m, "hidden_layers", cfg.model.hidden_layers);
        maybe(m, "hidden_width", cfg.model.hidden_width);
        maybe(m, "batchnorm_eps", cfg.model.batchnorm_eps);
        maybe(m, "batchnorm_momentum", cfg.model.batchnorm_momentum);
        maybe(m, "location_encoder", cfg.model.encoder);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        maybe(t, "epochs", cfg.train.epochs);
        maybe(t, "lr", cfg.train.lr);
        maybe(t, "batch_size", cfg.train.batch_size);
        maybe(t, "cap_per_species", cfg.train.cap);
        maybe(t, "species_count", cfg.train.species_count);
        maybe(t, "checkpoint_interval", cfg.train.checkpoint_interval);
        if (t.contains("loss")) {
            const auto& l = t["loss"];
            maybe(l, "kind", cfg.train.loss);
            maybe(l, "lambda", cfg.train.lambda);
            maybe(l, "lambda1", cfg.train.lambda1);
            maybe(l, "lambda2", cfg.train.lambda2);
        }
    }
    if (j.contains("metrics")) {
        const auto& m = j["metrics"];
        maybe(m, "rare_threshold", cfg.metrics.rare_threshold);
        maybe(m, "bucket_edges", cfg.metrics.bucket_edges);
        maybe(m, "label", cfg.metrics.label);
    }
}

// Guards an output directory against concurrent subcommands. The lock file
// is created exclusively and removed on scope exit.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".sdm.lock") {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw ValidationError("cannot create output dir " + dir.string());
        if (fs::exists(path_)) {
            throw std::runtime_error("output dir is locked by another run (remove " +
                                     path_.string() + " if stale)");
        }
        std::ofstream lock(path_);
        lock << "locked\n";
        if (!lock) throw std::runtime_error("cannot create lock file " + path_.string());
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
};

LossConfig make_loss_config(const RunConfig& cfg) {
    LossConfig loss;
    loss.kind = loss_kind_from_string(cfg.train.loss);
    loss.lambda = cfg.train.lambda;
    loss.lambda1 = cfg.train.lambda1;
    loss.lambda2 = cfg.train.lambda2;
    loss.validate();
    return loss;
}

// Loads occurrences and applies the per-species cap exactly like training
// does, so evaluation sees the same catalog counts.
std::vector<OccurrenceRecord> load_training_records(const RunConfig& cfg) {
    if (cfg.paths.occurrences.empty()) {
        throw ValidationError("paths.occurrences is required for this subcommand");
    }
    auto records = load_occurrences_csv(cfg.paths.occurrences);
    if (cfg.train.cap > 0) {
        Rng cap_rng(derive_seed(cfg.seed, kCapStream));
        records = cap_per_species(records, cfg.train.cap, cap_rng);
    }
    return records;
}

// The checkpoint's input_dim reveals whether rows were assembled with the
// 4-entry location encoding.
bool infer_encoder(const Parameters& params, const EnvGrid& grid) {
    if (params.config.input_dim == grid.feature_dim) return false;
    if (params.config.input_dim == grid.feature_dim + 4) return true;
    throw ValidationError("checkpoint input_dim " + std::to_string(params.config.input_dim) +
                          " matches neither F nor F+4 for this grid (F = " +
                          std::to_string(grid.feature_dim) + ")");
}

int cmd_synth_generate(const RunConfig& cfg) {
    cfg.synth.validate();
    SynthConfig synth = cfg.synth;
    synth.seed = cfg.seed;

    const fs::path out(cfg.out_dir);
    DirLock lock(out);

    SynthWorld world = generate_world(synth, /*with_encoder=*/false);
    save_occurrences_csv(world.records, (out / "occurrences.csv").string());
    save_grid_csv(world.grid, (out / "grid.csv").string());
    save_eval_set_csv(world.eval, (out / "eval_sites.csv").string(),
                      (out / "eval_labels.csv").string());
    std::vector<std::string> files = {"occurrences.csv", "grid.csv", "eval_sites.csv",
                                      "eval_labels.csv"};
    if (!world.geo_prior.empty()) {
        save_geo_prior_cases(world.geo_prior, (out / "geo_prior.csv").string());
        files.push_back("geo_prior.csv");
    }
    {
        std::ofstream mf(out / "manifest.json");
        mf << synth_manifest_json(synth, files);
        if (!mf) throw std::runtime_error("failed writing manifest.json");
    }

    for (int s : world.eval.excluded) {
        std::cerr << "warning: eval species " << s
                  << " has a constant label column and is excluded from metrics\n";
    }
    std::cout << "world: " << world.records.size() << " records, " << synth.species
              << " species, grid " << world.grid.width << "x" << world.grid.height << "x"
              << world.grid.feature_dim << ", " << world.eval.site_count() << " eval sites ("
              << world.eval.usable.size() << " scorable species)\n";
    std::cout << "wrote " << files.size() + 1 << " files to " << out.string() << "\n";
    return kExitOk;
}

int cmd_train(const RunConfig& cfg) {
    if (cfg.paths.grid.empty()) throw ValidationError("paths.grid is required for train");
    const fs::path out(cfg.out_dir);
    DirLock lock(out);

    const auto records = load_training_records(cfg);
    const EnvGrid grid = load_grid_csv(cfg.paths.grid);
    auto [dataset, catalog] =
        assemble_dataset(records, grid, cfg.model.encoder, cfg.train.species_count);

    MlpConfig model_config;
    model_config.hidden_layers = cfg.model.hidden_layers;
    model_config.hidden_width = cfg.model.hidden_width;
    model_config.batchnorm_eps = cfg.model.batchnorm_eps;
    model_config.batchnorm_momentum = cfg.model.batchnorm_momentum;

    TrainConfig train_config;
    train_config.epochs = cfg.train.epochs;
    train_config.lr = cfg.train.lr;
    train_config.batch_size = cfg.train.batch_size;
    train_config.loss = make_loss_config(cfg);
    train_config.init_seed = derive_seed(cfg.seed, kInitStream);
    train_config.shuffle_seed = derive_seed(cfg.seed, kShuffleStream);
    train_config.pa_seed = derive_seed(cfg.seed, kPaStream);
    train_config.checkpoint_interval = cfg.train.checkpoint_interval;
    train_config.checkpoint_dir = out.string();

    std::cout << "training: " << dataset.size() << " samples, " << catalog.species_count
              << " species, D=" << dataset.dim() << ", loss=" << cfg.train.loss << ", epochs="
              << train_config.epochs << ", lr=" << train_config.lr << "\n";

    TrainResult result =
        train(dataset, catalog, grid, cfg.model.encoder, model_config, train_config);

    save_checkpoint(result.params, (out / "checkpoint.bin").string());
    save_history_csv(result.history, (out / "history.csv").string());

    double total_seconds = 0.0;
    for (const auto& e : result.history.epochs) total_seconds += e.seconds;
    std::cout << "final epoch loss: " << result.history.epochs.back().mean_loss << " ("
              << result.history.epochs.size() << " epochs, " << total_seconds << " s)\n";
    std::cout << "wrote " << (out / "checkpoint.bin").string() << " and "
              << (out / "history.csv").string() << "\n";
    return kExitOk;
}

json report_block(const MetricReport& report) {
    json buckets = json::object();
    for (const auto& b : report.buckets) {
        buckets[b.label] = std::isnan(b.mean) ? json() : json(b.mean);
    }
    json block;
    block["all_mean"] = report.all_mean;
    block["rare_mean"] = std::isnan(report.rare_mean) ? json() : json(report.rare_mean);
    block["rare_count"] = report.rare_count;
    block["buckets"] = buckets;
    return block;
}

int cmd_evaluate(const RunConfig& cfg) {
    if (cfg.paths.checkpoint.empty()) {
        throw ValidationError("paths.checkpoint is required for evaluate");
    }
    if (cfg.paths.grid.empty() || cfg.paths.eval_sites.empty() || cfg.paths.eval_labels.empty()) {
        throw ValidationError("paths.grid, paths.eval_sites and paths.eval_labels are required");
    }
    const fs::path out(cfg.out_dir);
    DirLock lock(out);

    Parameters params = load_checkpoint(cfg.paths.checkpoint);
    const EnvGrid grid = load_grid_csv(cfg.paths.grid);
    const bool encoder = infer_encoder(params, grid);

    const auto records = load_training_records(cfg);
    SpeciesCatalog catalog = build_catalog(
        records, cfg.train.species_count > 0 ? cfg.train.species_count
                                             : params.config.output_dim);
    if (catalog.species_count != params.config.output_dim) {
        throw ValidationError("catalog species count " + std::to_string(catalog.species_count) +
                              " does not match checkpoint output_dim " +
                              std::to_string(params.config.output_dim));
    }

    const EvalSet eval = load_eval_set_csv(cfg.paths.eval_sites, cfg.paths.eval_labels, grid,
                                           encoder, catalog.species_count);
    const EvaluationResult res =
        evaluate(params, eval, catalog, cfg.metrics.rare_threshold, cfg.metrics.bucket_edges);

    const std::string label =
        cfg.metrics.label.empty() ? cfg.train.loss : cfg.metrics.label;
    json report;
    report["label"] = label;
    report["rare_threshold"] = res.rare_threshold;
    report["excluded_species"] = res.excluded_species;
    report["sites"] = eval.site_count();
    // top-level summary carries the AUC numbers
    report["all_mean"] = res.auc.all_mean;
    report["rare_mean"] = std::isnan(res.auc.rare_mean) ? json() : json(res.auc.rare_mean);
    {
        json buckets = json::object();
        for (const auto& b : res.auc.buckets) {
            buckets[b.label] = std::isnan(b.mean) ? json() : json(b.mean);
        }
        report["buckets"] = buckets;
    }
    report["auc"] = report_block(res.auc);
    report["ap"] = report_block(res.ap);
    {
        std::ofstream jf(out / "report.json");
        jf << report.dump(2) << "\n";
        if (!jf) throw std::runtime_error("failed writing report.json");
    }

    const auto buckets = group_by_frequency(catalog, cfg.metrics.bucket_edges);
    std::vector<std::string> bucket_of(catalog.species_count);
    for (const auto& b : buckets) {
        for (int s : b.species) bucket_of[s] = b.label;
    }
    {
        std::ofstream cf(out / "report.csv");
        cf << "species_id,count,bucket,auc,ap\n";
        for (int s = 0; s < catalog.species_count; ++s) {
            cf << s << ',' << catalog.counts[s] << ',' << bucket_of[s] << ',';
            if (!std::isnan(res.auc.per_species[s])) cf << res.auc.per_species[s];
            cf << ',';
            if (!std::isnan(res.ap.per_species[s])) cf << res.ap.per_species[s];
            cf << '\n';
        }
        if (!cf) throw std::runtime_error("failed writing report.csv");
    }

    std::cout << "label: " << label << "\n";
    std::cout << "AUC all-mean:  " << res.auc.all_mean << "\n";
    std::cout << "AUC rare-mean: " << res.auc.rare_mean << " (" << res.auc.rare_count
              << " species with count <= " << res.rare_threshold << ")\n";
    std::cout << "AP  all-mean:  " << res.ap.all_mean << "\n";
    if (!res.excluded_species.empty()) {
        std::cout << res.excluded_species.size()
                  << " species excluded (constant eval labels)\n";
    }
    std::cout << "wrote " << (out / "report.json").string() << " and "
              << (out / "report.csv").string() << "\n";
    return kExitOk;
}

int cmd_geo_prior(const RunConfig& cfg) {
    if (cfg.paths.checkpoint.empty() || cfg.paths.grid.empty() || cfg.paths.geo_prior.empty()) {
        throw ValidationError("paths.checkpoint, paths.grid and paths.geo_prior are required");
    }
    const fs::path out(cfg.out_dir);
    DirLock lock(out);

    Parameters params = load_checkpoint(cfg.paths.checkpoint);
    const EnvGrid grid = load_grid_csv(cfg.paths.grid);
    const bool encoder = infer_encoder(params, grid);
    const auto cases = load_geo_prior_cases(cfg.paths.geo_prior, params.config.output_dim);

    const GeoPriorResult res = geo_prior_gain(params, cases, grid, encoder);
    if (res.cases_skipped > 0) {
        std::cerr << "warning: " << res.cases_skipped
                  << " case(s) outside the grid bounds were skipped\n";
    }

    json j;
    j["baseline_top1"] = res.baseline_top1;
    j["combined_top1"] = res.combined_top1;
    j["delta_top1_pp"] = res.delta_top1_pp;
    j["cases_used"] = res.cases_used;
    j["cases_skipped"] = res.cases_skipped;
    {
        std::ofstream jf(out / "geo_prior.json");
        jf << j.dump(2) << "\n";
        if (!jf) throw std::runtime_error("failed writing geo_prior.json");
    }
    std::cout << "baseline top-1: " << res.baseline_top1 * 100.0 << "%\n";
    std::cout << "combined top-1: " << res.combined_top1 * 100.0 << "%\n";
    std::cout << "delta top-1:    " << (res.delta_top1_pp >= 0 ? "+" : "") << res.delta_top1_pp
              << " pp over " << res.cases_used << " cases\n";
    return kExitOk;
}

int cmd_report(const RunConfig& cfg, const std::vector<std::string>& report_paths) {
    if (report_paths.empty()) {
        throw ValidationError("report requires at least one evaluation report.json");
    }
    const fs::path out(cfg.out_dir);
    DirLock lock(out);

    std::ofstream cf(out / "comparison.csv");
    cf << "label,auc_all,auc_rare,ap_all,ap_rare\n";
    for (const auto& path : report_paths) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open report: " + path);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ValidationError("report " + path + " is not valid JSON: " + e.what());
        }
        auto num = [](const json& v) -> std::string {
            if (v.is_null()) return "";
            std::ostringstream os;
            os << v.get<double>();
            return os.str();
        };
        cf << j.value("label", path) << ',' << num(j.at("auc").at("all_mean")) << ','
           << num(j.at("auc").at("rare_mean")) << ',' << num(j.at("ap").at("all_mean")) << ','
           << num(j.at("ap").at("rare_mean")) << '\n';
    }
    if (!cf) throw std::runtime_error("failed writing comparison.csv");
    std::cout << "wrote " << (out / "comparison.csv").string() << " (" << report_paths.size()
              << " runs)\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"presence-only species distribution modeling engine"};
    app.require_subcommand(1);

    std::string config_path;
    RunConfig cfg;
    // flag targets; only applied over the config file when actually passed
    RunConfig flags;
    std::vector<std::string> report_paths;

    app.add_option("--config", config_path, "JSON configuration file");
    auto* o_seed = app.add_option("--seed", flags.seed, "global seed");
    auto* o_out = app.add_option("--out-dir", flags.out_dir, "output directory");

    auto* sc_synth = app.add_subcommand("synth-generate", "generate a synthetic world");
    auto* o_species = sc_synth->add_option("--species", flags.synth.species, "species count");
    auto* o_gw = sc_synth->add_option("--grid-width", flags.synth.grid_width, "grid width");
    auto* o_gh = sc_synth->add_option("--grid-height", flags.synth.grid_height, "grid height");
    auto* o_fd = sc_synth->add_option("--features", flags.synth.feature_dim, "feature channels");
    auto* o_tot = sc_synth->add_option("--total-observations", flags.synth.total_observations,
                                       "total presence records");
    auto* o_tail = sc_synth->add_option("--tail-exponent", flags.synth.tail_exponent,
                                        "power-law exponent of the count distribution");
    auto* o_nwmin = sc_synth->add_option("--niche-width-min", flags.synth.niche_width_min, "");
    auto* o_nwmax = sc_synth->add_option("--niche-width-max", flags.synth.niche_width_max, "");
    auto* o_sites = sc_synth->add_option("--eval-sites", flags.synth.eval_sites, "eval sites");
    auto* o_gpc = sc_synth->add_option("--geo-prior-cases", flags.synth.geo_prior_cases,
                                       "geo-prior benchmark cases (0 = none)");
    auto* o_gpf = sc_synth->add_option("--geo-prior-corrupt-fraction",
                                       flags.synth.geo_prior_corrupt_fraction,
                                       "share of cases with the true class demoted to rank 2");

    auto* sc_train = app.add_subcommand("train", "train a model on occurrence data");
    auto* o_occ = sc_train->add_option("--occurrences", flags.paths.occurrences, "occurrence CSV");
    auto* o_grid_t = sc_train->add_option("--grid", flags.paths.grid, "grid CSV");
    auto* o_epochs = sc_train->add_option("--epochs", flags.train.epochs, "training epochs");
    auto* o_lr = sc_train->add_option("--lr", flags.train.lr, "learning rate");
    auto* o_batch = sc_train->add_option("--batch-size", flags.train.batch_size, "batch size");
    auto* o_cap = sc_train->add_option("--cap", flags.train.cap,
                                       "max records per species (0 = unlimited)");
    auto* o_spc = sc_train->add_option("--species-count", flags.train.species_count,
                                       "species count (0 = infer from data)");
    auto* o_loss = sc_train->add_option("--loss", flags.train.loss,
                                        "loss kind: bce, full, full_weighted");
    auto* o_lambda = sc_train->add_option("--lambda", flags.train.lambda, "full-loss lambda");
    auto* o_l1 = sc_train->add_option("--lambda1", flags.train.lambda1, "weighted-loss lambda1");
    auto* o_l2 = sc_train->add_option("--lambda2", flags.train.lambda2, "weighted-loss lambda2");
    auto* o_hl = sc_train->add_option("--hidden-layers", flags.model.hidden_layers,
                                      "hidden residual blocks");
    auto* o_hw = sc_train->add_option("--hidden-width", flags.model.hidden_width, "hidden width");
    auto* o_enc = sc_train->add_flag("--encoder,!--no-encoder", flags.model.encoder,
                                     "prepend the 4-entry location encoding");
    auto* o_ckint = sc_train->add_option("--checkpoint-interval", flags.train.checkpoint_interval,
                                         "write an intermediate checkpoint every N epochs");

    auto* sc_eval = app.add_subcommand("evaluate", "evaluate a checkpoint on presence-absence data");
    auto* o_ckpt_e = sc_eval->add_option("--checkpoint", flags.paths.checkpoint, "checkpoint file");
    auto* o_grid_e = sc_eval->add_option("--grid", flags.paths.grid, "grid CSV");
    auto* o_occ_e = sc_eval->add_option("--occurrences", flags.paths.occurrences,
                                        "training occurrences (for catalog counts)");
    auto* o_sites_e = sc_eval->add_option("--eval-sites", flags.paths.eval_sites, "sites CSV");
    auto* o_labels_e = sc_eval->add_option("--eval-labels", flags.paths.eval_labels, "labels CSV");
    auto* o_cap_e = sc_eval->add_option("--cap", flags.train.cap, "cap used at training time");
    auto* o_rare = sc_eval->add_option("--rare-threshold", flags.metrics.rare_threshold,
                                       "rare species have training count <= this");
    auto* o_edges = sc_eval->add_option("--bucket-edges", flags.metrics.bucket_edges,
                                        "frequency bucket edges");
    auto* o_label = sc_eval->add_option("--label", flags.metrics.label, "run label in reports");

    auto* sc_gp = app.add_subcommand("geo-prior", "score vision cases with the model as a prior");
    auto* o_ckpt_g = sc_gp->add_option("--checkpoint", flags.paths.checkpoint, "checkpoint file");
    auto* o_grid_g = sc_gp->add_option("--grid", flags.paths.grid, "grid CSV");
    auto* o_cases = sc_gp->add_option("--cases", flags.paths.geo_prior, "geo-prior cases CSV");

    auto* sc_report = app.add_subcommand("report", "merge evaluation reports into one CSV");
    sc_report->add_option("reports", report_paths, "report.json files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (!config_path.empty()) apply_config_file(config_path, cfg);

        // flags win over the config file; the env var covers out_dir only
        if (o_seed->count()) cfg.seed = flags.seed;
        if (const char* env = std::getenv("SDM_OUT_DIR"); env && *env) cfg.out_dir = env;
        if (o_out->count()) cfg.out_dir = flags.out_dir;

        auto apply = [](const CLI::Option* opt, auto& into, const auto& from) {
            if (opt->count()) into = from;
        };
        apply(o_species, cfg.synth.species, flags.synth.species);
        apply(o_gw, cfg.synth.grid_width, flags.synth.grid_width);
        apply(o_gh, cfg.synth.grid_height, flags.synth.grid_height);
        apply(o_fd, cfg.synth.feature_dim, flags.synth.feature_dim);
        apply(o_tot, cfg.synth.total_observations, flags.synth.total_observations);
        apply(o_tail, cfg.synth.tail_exponent, flags.synth.tail_exponent);
        apply(o_nwmin, cfg.synth.niche_width_min, flags.synth.niche_width_min);
        apply(o_nwmax, cfg.synth.niche_width_max, flags.synth.niche_width_max);
        apply(o_sites, cfg.synth.eval_sites, flags.synth.eval_sites);
        apply(o_gpc, cfg.synth.geo_prior_cases, flags.synth.geo_prior_cases);
        apply(o_gpf, cfg.synth.geo_prior_corrupt_fraction, flags.synth.geo_prior_corrupt_fraction);
        apply(o_occ, cfg.paths.occurrences, flags.paths.occurrences);
        apply(o_grid_t, cfg.paths.grid, flags.paths.grid);
        apply(o_epochs, cfg.train.epochs, flags.train.epochs);
        apply(o_lr, cfg.train.lr, flags.train.lr);
        apply(o_batch, cfg.train.batch_size, flags.train.batch_size);
        apply(o_cap, cfg.train.cap, flags.train.cap);
        apply(o_spc, cfg.train.species_count, flags.train.species_count);
        apply(o_loss, cfg.train.loss, flags.train.loss);
        apply(o_lambda, cfg.train.lambda, flags.train.lambda);
        apply(o_l1, cfg.train.lambda1, flags.train.lambda1);
        apply(o_l2, cfg.train.lambda2, flags.train.lambda2);
        apply(o_hl, cfg.model.hidden_layers, flags.model.hidden_layers);
        apply(o_hw, cfg.model.hidden_width, flags.model.hidden_width);
        apply(o_enc, cfg.model.encoder, flags.model.encoder);
        apply(o_ckint, cfg.train.checkpoint_interval, flags.train.checkpoint_interval);
        apply(o_ckpt_e, cfg.paths.checkpoint, flags.paths.checkpoint);
        apply(o_grid_e, cfg.paths.grid, flags.paths.grid);
        apply(o_occ_e, cfg.paths.occurrences, flags.paths.occurrences);
        apply(o_sites_e, cfg.paths.eval_sites, flags.paths.eval_sites);
        apply(o_labels_e, cfg.paths.eval_labels, flags.paths.eval_labels);
        apply(o_cap_e, cfg.train.cap, flags.train.cap);
        apply(o_rare, cfg.metrics.rare_threshold, flags.metrics.rare_threshold);
        apply(o_edges, cfg.metrics.bucket_edges, flags.metrics.bucket_edges);
        apply(o_label, cfg.metrics.label, flags.metrics.label);
        apply(o_ckpt_g, cfg.paths.checkpoint, flags.paths.checkpoint);
        apply(o_grid_g, cfg.paths.grid, flags.paths.grid);
        apply(o_cases, cfg.paths.geo_prior, flags.paths.geo_prior);

        if (sc_synth->parsed()) return cmd_synth_generate(cfg);
        if (sc_train->parsed()) return cmd_train(cfg);
        if (sc_eval->parsed()) return cmd_evaluate(cfg);
        if (sc_gp->parsed()) return cmd_geo_prior(cfg);
        if (sc_report->parsed()) return cmd_report(cfg, report_paths);
        throw ValidationError("no subcommand given");
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
