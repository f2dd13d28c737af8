#include "cfrep/presets.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "cfrep/errors.hpp"
#include "cfrep/losses.hpp"
#include "cfrep/metrics.hpp"

namespace cfrep {

namespace {

std::size_t attribute_slot(const Summary& s, const std::string& name) {
    const auto it = std::find(s.attribute_names.begin(), s.attribute_names.end(), name);
    if (it == s.attribute_names.end()) throw ConfigError("summary has no attribute '" + name + "'");
    return static_cast<std::size_t>(it - s.attribute_names.begin());
}

std::size_t name_slot(const std::vector<std::string>& names, const std::string& name) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ConfigError("dataset has no attribute '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
}

/// sqrt(1 - sum r(t, c)^2) over the declared correlations of the corrected set.
double stage_bound(const StageResult& s) {
    std::vector<double> r;
    for (const auto& c : s.config.train.confounders) r.push_back(s.target_correlation[name_slot(s.attribute_names, c)]);
    return corr_upper_bound(r);
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
}

RunConfig base_config(DatasetKind kind, double eta, std::vector<std::string> confounders) {
    RunConfig cfg;
    cfg.data.kind = kind;
    cfg.train.eta = eta;
    cfg.train.confounders = std::move(confounders);
    if (kind == DatasetKind::circles) {
        cfg.train.target = "brightness";
        cfg.train.latent_dim = 2;
        cfg.viz.range = RangePolicy::mean_3sd;
    } else {
        cfg.train.target = "brightness";
        cfg.train.latent_dim = 8;
        cfg.viz.range = RangePolicy::explicit_range;
        cfg.viz.lo = 0.2;
        cfg.viz.hi = 1.0;
    }
    return cfg;
}

/// Checks that every fold of both runs produced frames in the first place.
bool has_frames(const StageResult& s) {
    return !s.viz.empty() && std::all_of(s.viz.begin(), s.viz.end(), [](const auto& v) { return v.frames.count() >= 2; });
}

}  // namespace

void apply_scale(RunConfig& cfg, const Scale& scale) {
    cfg.data.n = scale.n;
    cfg.train.epochs = scale.epochs;
    cfg.train.folds = scale.folds;
    cfg.train.eta_warmup = scale.epochs / 5;
}

StageResult run_stage(const std::string& label, const RunConfig& cfg, const std::optional<std::filesystem::path>& dir,
                      bool with_viz, const Logger& log) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset ds = generate_dataset(cfg.data.kind, cfg.data.n, cfg.data.seed, cfg.data.labeled_fraction);
    StageResult out;
    out.label = label;
    out.config = cfg;
    const auto target = cfg.train.target.empty() ? ds.target_index() : ds.attribute_index(cfg.train.target);
    for (std::size_t a = 0; a < ds.attribute_count(); ++a) {
        out.attribute_names.push_back(ds.attributes[a].name);
        out.target_correlation.push_back(ds.target_correlation(target, a));
        out.realized_correlation.push_back(ds.realized_correlation(target, a));
    }
    Logger tagged;
    if (log) tagged = [&](const std::string& line) { log("[" + label + "] " + line); };
    out.run = run_experiment(ds, cfg.train, dir, tagged, echo_config(cfg));
    if (with_viz) {
        for (std::size_t f = 0; f < out.run.folds.size(); ++f) {
            const auto& fold = out.run.folds[f];
            out.viz.push_back(
                visualize_fold(fold.trained.model, fold.predictor, ds, fold.split.test, target, cfg.viz));
        }
        if (dir) export_visualization(out.viz, ds.image_size, *dir / "viz");
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

std::string Check::line() const {
    std::ostringstream os;
    os << (pass ? "PASS" : "FAIL") << "  [" << criterion << "] " << metric << " = " << fmt(value);
    if (relation == "<=") os << " <= " << fmt(hi);
    if (relation == ">=") os << " >= " << fmt(lo);
    if (relation == "in") os << " in [" << fmt(lo) << ", " << fmt(hi) << "]";
    return os.str();
}

Check at_most(std::string criterion, std::string metric, double value, double bound) {
    return {std::move(criterion), std::move(metric), value, "<=", 0.0, bound, value <= bound};
}

Check at_least(std::string criterion, std::string metric, double value, double bound) {
    return {std::move(criterion), std::move(metric), value, ">=", bound, 0.0, value >= bound};
}

Check within(std::string criterion, std::string metric, double value, double lo, double hi) {
    return {std::move(criterion), std::move(metric), value, "in", lo, hi, value >= lo && value <= hi};
}

Check holds(std::string criterion, std::string metric, bool ok) {
    return {std::move(criterion), std::move(metric), ok ? 1.0 : 0.0, "in", 1.0, 1.0, ok};
}

double widen(double bound, double reference, double factor) { return reference + factor * (bound - reference); }

std::vector<Check> check_circle_uncorrected(const StageResult& s, double factor, const std::string& criterion) {
    const auto& sum = s.run.summary;
    const auto radius = attribute_slot(sum, "radius");
    const double r_t = sum.r_target.mean;
    const double r_c = sum.r[radius].mean;
    const double data_sign = s.realized_correlation[name_slot(s.attribute_names, "radius")];
    const bool consistent = std::signbit(r_c) == (std::signbit(r_t) != std::signbit(data_sign));
    return {
        at_least(criterion, "|r(zp,brightness)|", std::abs(r_t), widen(0.97, 0.992, factor)),
        holds(criterion, "sign r(zp,radius) = sign r(zp,brightness) * sign r(brightness,radius)", consistent),
        at_most(criterion, "||r(zp,radius)| - 0.668|", std::abs(std::abs(r_c) - 0.668), widen(0.07, 0.0, factor)),
        at_most(criterion, "r-MSE", sum.err.mean, widen(0.05, 0.020, factor)),
        at_most(criterion, "L1", sum.l1.mean, widen(0.015, 0.008, factor)),
    };
}

std::vector<Check> check_circle_corrected(const StageResult& s, double factor, const std::string& criterion) {
    const auto& sum = s.run.summary;
    const auto radius = attribute_slot(sum, "radius");
    const double bound = stage_bound(s);
    return {
        at_most(criterion, "|r(zp*,radius)|", std::abs(sum.r[radius].mean), widen(0.05, 0.013, factor)),
        within(criterion, "|r(zp*,brightness)|", std::abs(sum.r_target.mean), widen(0.70, 0.743, factor),
               widen(bound + 0.02, 0.743, factor)),
        at_most(criterion, "dcor2(zp*,radius)", sum.dcor2[radius].mean, widen(0.01, 0.001, factor)),
        at_most(criterion, "MI(zp*,radius)", sum.mi[radius].mean, widen(0.08, 0.024, factor)),
        at_most(criterion, "L1", sum.l1.mean, widen(0.015, 0.008, factor)),
    };
}

std::vector<Check> check_ellipse_corrected(const StageResult& s, const std::string& criterion) {
    const auto& sum = s.run.summary;
    std::vector<Check> out;
    for (const char* name : {"angle", "position", "area"}) {
        const auto a = attribute_slot(sum, name);
        out.push_back(at_most(criterion, std::string("|r(zp*,") + name + ")|", std::abs(sum.r[a].mean), 0.07));
    }
    out.push_back(within(criterion, "|r(zp*,brightness)|", std::abs(sum.r_target.mean), 0.65, stage_bound(s) + 0.02));
    for (const char* name : {"angle", "position", "area"}) {
        const auto a = attribute_slot(sum, name);
        out.push_back(at_most(criterion, std::string("dcor2(zp*,") + name + ")", sum.dcor2[a].mean, 0.02));
    }
    for (const char* name : {"angle", "position", "area"}) {
        const auto a = attribute_slot(sum, name);
        out.push_back(at_most(criterion, std::string("MI(zp*,") + name + ")", sum.mi[a].mean, 0.08));
    }
    out.push_back(at_most(criterion, "L1", sum.l1.mean, 0.015));
    return out;
}

std::vector<Check> check_gradual(const std::vector<StageResult>& stages, const std::string& criterion) {
    std::vector<Check> out;
    for (const auto& s : stages) {
        const auto& corrected = s.config.train.confounders;
        if (corrected.empty() || s.config.train.eta == 0.0) continue;
        const auto& sum = s.run.summary;
        for (std::size_t a = 0; a < sum.attribute_names.size(); ++a) {
            const auto& name = sum.attribute_names[a];
            const bool is_corrected = std::find(corrected.begin(), corrected.end(), name) != corrected.end();
            const std::string metric = s.label + ": |r(zp*," + name + ")|";
            const double v = std::abs(sum.r[a].mean);
            out.push_back(is_corrected ? at_most(criterion, metric, v, 0.07) : at_least(criterion, metric, v, 0.3));
        }
    }
    return out;
}

std::vector<Check> check_visualization(const StageResult& uncorrected, const StageResult& corrected,
                                       const std::string& criterion) {
    std::vector<Check> out;
    if (!has_frames(uncorrected) || !has_frames(corrected)) {
        out.push_back(holds(criterion, "frames sampled for every fold", false));
        return out;
    }
    double worst = 0.0;
    for (const auto* s : {&uncorrected, &corrected}) {
        for (std::size_t f = 0; f < s->viz.size(); ++f) {
            const auto& fr = s->viz[f].frames;
            for (std::size_t i = 0; i < fr.count(); ++i) {
                worst = std::max(worst, std::abs(fr.targets[i] - fr.predicted[i]) /
                                            std::max(std::abs(fr.targets[i]), kFrameEpsAbs));
            }
        }
    }
    for (std::size_t f = 0; f < corrected.viz.size(); ++f) {
        out.push_back(at_most(criterion, corrected.label + " fold " + std::to_string(f) + ": |radius slope| px/frame",
                              std::abs(radius_slope(corrected.viz[f].frames)), 0.3));
    }
    for (std::size_t f = 0; f < uncorrected.viz.size(); ++f) {
        out.push_back(at_least(criterion,
                               uncorrected.label + " fold " + std::to_string(f) + ": |radius slope| px/frame",
                               std::abs(radius_slope(uncorrected.viz[f].frames)), 1.0));
    }
    out.push_back(at_most(criterion, "max relative frame target error", worst, kFrameTolerance));
    return out;
}

bool unlabeled_step_keeps_projection(const RunConfig& cfg) {
    const Dataset ds = generate_dataset(cfg.data.kind, 64, cfg.data.seed, cfg.data.labeled_fraction);
    const Columns cols = resolve_columns(ds, cfg.train);
    ModelState model(cfg.train.architecture(ds.image_size), cols.corrected.size(), cfg.train.seed);
    model.zero_grad();
    Optimizers opt = make_optimizers(cfg.train);
    std::vector<std::size_t> unlabeled, labeled;
    for (std::size_t i = 0; i < ds.count; ++i) (ds.mask[i] ? labeled : unlabeled).push_back(i);
    const std::size_t half = cfg.train.batch_size / 2;
    if (unlabeled.size() < half || labeled.size() < half) throw DataError("probe dataset lacks labeled/unlabeled samples");
    const Batch ub = make_batch(ds, std::span<const std::size_t>(unlabeled).first(half), cols);
    const Batch lb = make_batch(ds, std::span<const std::size_t>(labeled).first(half), cols);
    bool same = true;
    for (int step = 0; step < 3; ++step) {
        const auto p = model.params().projection.values();
        const std::vector<float> before(p.begin(), p.end());
        const auto steps_before = opt.projection.step;
        const auto moments_before = opt.projection.first_moment;
        train_step_unlabeled(model, opt, ub, cfg.train);
        const auto after = model.params().projection.values();
        same = same && std::memcmp(before.data(), after.data(), before.size() * sizeof(float)) == 0 &&
               opt.projection.step == steps_before && opt.projection.first_moment == moments_before;
        train_step(model, opt, lb, cfg.train);  // p does move here
    }
    return same;
}

std::vector<Check> check_ssl(const StageResult& s, const std::string& criterion) {
    const auto& sum = s.run.summary;
    const auto radius = attribute_slot(sum, "radius");
    std::size_t skipped = 0;
    for (const auto& f : s.run.folds) skipped += f.report.skipped_steps;
    return {
        holds(criterion, "run completed (" + std::to_string(s.run.folds.size()) + " folds)",
              s.run.folds.size() == s.config.train.folds),
        holds(criterion, "unlabeled steps leave p and its Adam state bit-identical",
              unlabeled_step_keeps_projection(s.config)),
        at_most(criterion, "|r(zp*,radius)|", std::abs(sum.r[radius].mean), widen(0.05, 0.013, 1.5)),
        at_most(criterion, "dcor2(zp*,radius)", sum.dcor2[radius].mean, widen(0.01, 0.001, 1.5)),
        at_most(criterion, "MI(zp*,radius)", sum.mi[radius].mean, widen(0.08, 0.024, 1.5)),
        at_most(criterion, "skipped unlabeled steps", static_cast<double>(skipped), 0.0),
    };
}

bool PresetReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

std::vector<std::string> preset_names() {
    return {"circle-table1", "ellipse-tableA2", "ellipse-gradual", "circle-ssl", "ci-smoke"};
}

std::string preset_description(const std::string& name) {
    if (name == "circle-table1") return "circles, eta=0 vs eta=2 correcting radius (N=8000, 300 epochs, 5 folds)";
    if (name == "ellipse-tableA2") return "ellipses, angle+position+area corrected, n=8 (N=8000, 300 epochs, 5 folds)";
    if (name == "ellipse-gradual") return "ellipses, corrected sets {}, {angle}, {angle,position}, all three";
    if (name == "circle-ssl") return "circles, 30% labeled, semi-supervised, eta=2 correcting radius";
    if (name == "ci-smoke") return "circles, eta=0 (N=2000, 60 epochs, 5 folds), tolerances +50%, < 10 min";
    throw ConfigError("unknown preset '" + name + "'");
}

Scale preset_default_scale(const std::string& name) {
    preset_description(name);  // validates the name
    return name == "ci-smoke" ? kSmokeScale : kPaperScale;
}

std::vector<std::pair<std::string, RunConfig>> preset_stages(const std::string& name, const Scale& scale) {
    std::vector<std::pair<std::string, RunConfig>> out;
    if (name == "circle-table1") {
        out.emplace_back("eta0", base_config(DatasetKind::circles, 0.0, {"radius"}));
        out.emplace_back("eta2", base_config(DatasetKind::circles, 2.0, {"radius"}));
    } else if (name == "ellipse-tableA2") {
        out.emplace_back("all", base_config(DatasetKind::ellipses, 2.0, {"angle", "position", "area"}));
    } else if (name == "ellipse-gradual") {
        out.emplace_back("none", base_config(DatasetKind::ellipses, 2.0, {}));
        out.emplace_back("angle", base_config(DatasetKind::ellipses, 2.0, {"angle"}));
        out.emplace_back("angle+position", base_config(DatasetKind::ellipses, 2.0, {"angle", "position"}));
        out.emplace_back("all", base_config(DatasetKind::ellipses, 2.0, {"angle", "position", "area"}));
    } else if (name == "circle-ssl") {
        auto cfg = base_config(DatasetKind::circles, 2.0, {"radius"});
        cfg.data.labeled_fraction = 0.3;
        cfg.train.ssl = true;
        out.emplace_back("ssl", cfg);
    } else if (name == "ci-smoke") {
        out.emplace_back("eta0", base_config(DatasetKind::circles, 0.0, {"radius"}));
    } else {
        throw ConfigError("unknown preset '" + name + "' (known: circle-table1, ellipse-tableA2, ellipse-gradual, "
                          "circle-ssl, ci-smoke)");
    }
    for (auto& [label, cfg] : out) apply_scale(cfg, scale);
    return out;
}

PresetReport run_preset(const std::string& name, const std::filesystem::path& out_dir,
                        const std::optional<Scale>& scale, const Logger& log) {
    const Scale sc = scale.value_or(preset_default_scale(name));
    const auto stages = preset_stages(name, sc);
    const bool paper_scale = sc.n == kPaperScale.n && sc.epochs == kPaperScale.epochs && sc.folds == kPaperScale.folds;
    const bool wants_viz = name == "circle-table1" || name == "ellipse-tableA2" || name == "ellipse-gradual";

    std::vector<StageResult> results;
    for (const auto& [label, cfg] : stages) {
        results.push_back(run_stage(label, cfg, out_dir / label, wants_viz, log));
    }
    PresetReport report;
    report.preset = name;
    for (const auto& r : results) report.tables.push_back("== " + r.label + " ==\n" + format_summary(r.run.summary));
    auto add = [&](std::vector<Check> checks) {
        report.checks.insert(report.checks.end(), checks.begin(), checks.end());
    };
    if (name == "circle-table1") {
        add(check_circle_uncorrected(results[0], 1.0, "1"));
        if (paper_scale) add({at_most("1", "eta0 runtime (s)", results[0].seconds, 3600.0)});
        add(check_circle_corrected(results[1], 1.0, "2"));
        add(check_visualization(results[0], results[1], "5"));
    } else if (name == "ellipse-tableA2") {
        add(check_ellipse_corrected(results[0], "3"));
    } else if (name == "ellipse-gradual") {
        add(check_gradual(results, "4"));
    } else if (name == "circle-ssl") {
        add(check_ssl(results[0], "7"));
    } else if (name == "ci-smoke") {
        add(check_circle_uncorrected(results[0], 1.5, "1"));
        add({at_most("1", "runtime (s)", results[0].seconds, 600.0)});
    }
    return report;
}

void export_visualization(const std::vector<FoldVisualization>& viz, std::size_t image_size,
                          const std::filesystem::path& dir) {
    std::vector<std::vector<float>> maps;
    for (std::size_t f = 0; f < viz.size(); ++f) {
        const auto fold_dir = dir / ("fold_" + std::to_string(f));
        std::filesystem::create_directories(fold_dir);
        const auto& frames = viz[f].frames;
        for (std::size_t i = 0; i < frames.count(); ++i) {
            std::ostringstream name;
            name << "frame_" << std::setw(2) << std::setfill('0') << i << ".png";
            export_png(fold_dir / name.str(), frames.frame(i), image_size, image_size, PngMode::gray);
        }
        write_frames_json(fold_dir / "frames.json", frames);
        if (!viz[f].heatmap.empty()) {
            export_png(fold_dir / "heatmap.png", viz[f].heatmap, image_size, image_size, PngMode::diverging);
            maps.push_back(viz[f].heatmap);
        }
    }
    if (maps.size() >= 2) {
        export_png(dir / "heatmap_mean_masked.png", aggregate_heatmaps(maps), image_size, image_size,
                   PngMode::diverging);
    }
}

}  // namespace cfrep
