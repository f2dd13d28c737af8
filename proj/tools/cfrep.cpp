// Command-line front end: synth, train, viz and reproduce.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfrep/checkpoint.hpp"
#include "cfrep/config.hpp"
#include "cfrep/errors.hpp"
#include "cfrep/presets.hpp"
#include "cfrep/synth.hpp"
#include "cfrep/trainer.hpp"
#include "cfrep/viz.hpp"

namespace fs = std::filesystem;
using namespace cfrep;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitAcceptance = 5;

std::string slurp(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot read " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const fs::path& path) {
    try {
        return nlohmann::json::parse(slurp(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

Logger make_logger(bool quiet) {
    if (quiet) return {};
    return [](const std::string& line) { std::cerr << line << '\n'; };
}

Dataset load_or_generate(const std::optional<fs::path>& data_dir, const DataConfig& data) {
    if (data_dir) {
        if (!fs::is_directory(*data_dir)) throw DataError("dataset directory " + data_dir->string() + " does not exist");
        return read_dataset(*data_dir);
    }
    return generate_dataset(data.kind, data.n, data.seed, data.labeled_fraction);
}

struct SynthArgs {
    std::string kind;
    std::size_t n = 8000;
    std::uint64_t seed = 42;
    double labeled_fraction = 1.0;
    std::string out;
};

int cmd_synth(const SynthArgs& a) {
    if (a.n == 0) throw ConfigError("--n must be at least 1");
    if (!(a.labeled_fraction >= 0.0 && a.labeled_fraction <= 1.0)) {
        throw ConfigError("--labeled-fraction must lie in [0, 1]");
    }
    const Dataset ds = generate_dataset(parse_dataset_kind(a.kind), a.n, a.seed, a.labeled_fraction);
    write_dataset(ds, a.out);
    std::cout << "wrote " << ds.count << " " << to_string(ds.kind) << " to " << a.out << '\n';
    if (ds.clipped_samples > 0) {
        std::cout << "warning: " << ds.clipped_samples << " ellipses touch the image border\n";
    }
    return 0;
}

struct TrainArgs {
    std::string config;
    std::string data;
    std::string run;
    std::vector<std::string> overrides;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
    RunConfig cfg = a.config.empty() ? RunConfig{} : load_config(a.config);
    for (const auto& o : a.overrides) apply_override(cfg, o);
    std::optional<fs::path> data_dir;
    if (!a.data.empty()) data_dir = fs::absolute(a.data);
    const Dataset ds = load_or_generate(data_dir, cfg.data);
    // The echo must regenerate this exact dataset.
    cfg.data.kind = ds.kind;
    cfg.data.n = ds.count;
    cfg.data.seed = ds.seed;
    cfg.data.labeled_fraction = ds.labeled_fraction;
    cfg.validate();

    const fs::path run_dir = a.run;
    fs::create_directories(run_dir);
    nlohmann::json meta = {{"data_dir", data_dir ? nlohmann::json(data_dir->string()) : nlohmann::json(nullptr)}};
    std::ofstream(run_dir / "run.json") << meta.dump(2) << '\n';
    const auto run = run_experiment(ds, cfg.train, run_dir, make_logger(a.quiet), echo_config(cfg));
    std::cout << format_summary(run.summary);
    return 0;
}

struct VizArgs {
    std::string run;
    std::string out;
    std::optional<std::size_t> frames;
    std::optional<std::string> range;
    std::optional<double> lo, hi;
};

int cmd_viz(const VizArgs& a) {
    const fs::path run_dir = a.run;
    if (!fs::is_directory(run_dir)) throw DataError("run directory " + run_dir.string() + " does not exist");
    RunConfig cfg = parse_config(slurp(run_dir / "config.echo"), (run_dir / "config.echo").string());
    if (a.frames) cfg.viz.frames = *a.frames;
    if (a.range) cfg.viz.range = parse_range_policy(*a.range);
    if (a.lo) cfg.viz.lo = *a.lo;
    if (a.hi) cfg.viz.hi = *a.hi;
    cfg.validate();

    std::optional<fs::path> data_dir;
    if (fs::exists(run_dir / "run.json")) {
        const auto meta = read_json(run_dir / "run.json");
        if (meta.contains("data_dir") && meta["data_dir"].is_string()) data_dir = meta["data_dir"].get<std::string>();
    }
    const Dataset ds = load_or_generate(data_dir, cfg.data);
    const auto target = cfg.train.target.empty() ? ds.target_index() : ds.attribute_index(cfg.train.target);

    std::vector<FoldVisualization> viz;
    for (std::size_t f = 0;; ++f) {
        const fs::path fold_dir = run_dir / ("fold_" + std::to_string(f));
        if (!fs::is_directory(fold_dir)) break;
        const auto ckpt = load_checkpoint(fold_dir / "model.ckpt");
        const auto metrics = read_json(fold_dir / "metrics.json");
        const auto split = read_json(fold_dir / "split.json");
        Predictor predictor;
        try {
            const auto& p = metrics.at("predictor");
            predictor.kind = parse_predictor_kind(p.at("kind").get<std::string>());
            predictor.slope = p.at("slope").get<double>();
            predictor.intercept = p.at("intercept").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw DataError((fold_dir / "metrics.json").string() + ": " + e.what());
        }
        const auto test = split.at("test").get<std::vector<std::size_t>>();
        for (auto i : test) {
            if (i >= ds.count) throw DataError("split.json refers to sample " + std::to_string(i) + " beyond the dataset");
        }
        viz.push_back(visualize_fold(ckpt.model, predictor, ds, test, target, cfg.viz));
    }
    if (viz.empty()) throw DataError("run directory " + run_dir.string() + " holds no fold_k checkpoints");
    export_visualization(viz, ds.image_size, a.out);
    std::cout << "wrote " << viz.size() << " fold(s) x " << viz.front().frames.count() << " frame(s) to " << a.out
              << '\n';
    return 0;
}

struct ReproduceArgs {
    std::string preset;
    std::string out = "reproduce";
    std::optional<std::string> scale;
    bool quiet = false;
};

int cmd_reproduce(const ReproduceArgs& a) {
    std::optional<Scale> scale;
    if (a.scale) {
        if (*a.scale == "paper") {
            scale = kPaperScale;
        } else if (*a.scale == "smoke") {
            scale = kSmokeScale;
        } else {
            throw ConfigError("--scale must be paper or smoke");
        }
    }
    preset_description(a.preset);  // unknown preset -> ConfigError before any work
    const auto report = run_preset(a.preset, fs::path(a.out) / a.preset, scale, make_logger(a.quiet));
    for (const auto& t : report.tables) std::cout << t << '\n';
    for (const auto& c : report.checks) std::cout << c.line() << '\n';
    std::cout << (report.passed() ? "preset " + a.preset + " passed" : "preset " + a.preset + " FAILED") << '\n';
    return report.passed() ? 0 : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Confounder-free latent representations: data, training, visualization"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic circle or ellipse dataset");
    s->add_option("kind", synth.kind, "circles | ellipses")->required();
    s->add_option("--n", synth.n, "Number of images");
    s->add_option("--seed", synth.seed, "Generator seed");
    s->add_option("--labeled-fraction", synth.labeled_fraction, "Fraction of samples marked labeled");
    s->add_option("--out", synth.out, "Output dataset directory")->required();

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train all folds and write a run directory");
    t->add_option("--config", train.config, "Config file ([data], [train], [viz] sections)");
    t->add_option("--data", train.data, "Dataset directory (default: generate from [data])");
    t->add_option("--run", train.run, "Run directory")->required();
    t->add_option("--set", train.overrides, "Override section.key=value (repeatable)");
    t->add_flag("--quiet", train.quiet, "Suppress per-epoch progress");

    VizArgs viz;
    auto* v = app.add_subcommand("viz", "Render frames and heatmaps for a finished run");
    v->add_option("--run", viz.run, "Run directory")->required();
    v->add_option("--out", viz.out, "Output directory")->required();
    v->add_option("--frames", viz.frames, "Frames per fold (default from the run config)");
    v->add_option("--range", viz.range, "mean1sd | mean3sd | explicit");
    v->add_option("--lo", viz.lo, "Lower target for --range explicit");
    v->add_option("--hi", viz.hi, "Upper target for --range explicit");

    ReproduceArgs rep;
    auto* r = app.add_subcommand("reproduce", "Run a preset and compare against its embedded tolerances");
    r->add_option("preset", rep.preset, "circle-table1 | ellipse-tableA2 | ellipse-gradual | circle-ssl | ci-smoke")
        ->required();
    r->add_option("--out", rep.out, "Output root directory");
    r->add_option("--scale", rep.scale, "paper | smoke (default: the preset's own scale)");
    r->add_flag("--quiet", rep.quiet, "Suppress per-epoch progress");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*s) return cmd_synth(synth);
        if (*t) return cmd_train(train);
        if (*v) return cmd_viz(viz);
        if (*r) return cmd_reproduce(rep);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DomainError& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const ShapeError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericFault& e) {
        std::cerr << "numeric fault: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
