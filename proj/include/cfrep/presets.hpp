#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cfrep/config.hpp"
#include "cfrep/trainer.hpp"
#include "cfrep/viz.hpp"

namespace cfrep {

/// Dataset size, epochs and folds of an experiment.
struct Scale {
    std::size_t n = 8000;
    std::size_t epochs = 300;
    std::size_t folds = 5;
};

/// The published protocol and the reduced smoke protocol (N=2000, 60 epochs).
inline constexpr Scale kPaperScale{8000, 300, 5};
inline constexpr Scale kSmokeScale{2000, 60, 5};

/// Applies a scale to a configuration; the eta ramp covers the first fifth
/// of the epochs.
void apply_scale(RunConfig& cfg, const Scale& scale);

/// One trained configuration with what the checks need.
struct StageResult {
    std::string label;
    RunConfig config;
    RunArtifacts run;
    std::vector<FoldVisualization> viz;
    std::vector<std::string> attribute_names;
    std::vector<double> target_correlation;
    std::vector<double> realized_correlation;
    double seconds = 0.0;
};

/// Generates the dataset, runs every fold (writing into dir when given) and,
/// if requested, samples frames for every fold.
StageResult run_stage(const std::string& label, const RunConfig& cfg, const std::optional<std::filesystem::path>& dir,
                      bool with_viz, const Logger& log = {});

/// One pass/fail line. `relation` is "<=", ">=" or "in" ([lo, hi]).
struct Check {
    std::string criterion;
    std::string metric;
    double value = 0.0;
    std::string relation;
    double lo = 0.0;
    double hi = 0.0;
    bool pass = false;

    std::string line() const;
};

Check at_most(std::string criterion, std::string metric, double value, double bound);
Check at_least(std::string criterion, std::string metric, double value, double bound);
Check within(std::string criterion, std::string metric, double value, double lo, double hi);
Check holds(std::string criterion, std::string metric, bool ok);

/// Widens a threshold's slack around the published value by `factor`
/// (1.5 for the "+50%" tolerances): ref + factor * (bound - ref).
double widen(double bound, double reference, double factor);

std::vector<Check> check_circle_uncorrected(const StageResult& s, double factor, const std::string& criterion);
std::vector<Check> check_circle_corrected(const StageResult& s, double factor, const std::string& criterion);
std::vector<Check> check_ellipse_corrected(const StageResult& s, const std::string& criterion);
std::vector<Check> check_gradual(const std::vector<StageResult>& stages, const std::string& criterion);
std::vector<Check> check_visualization(const StageResult& uncorrected, const StageResult& corrected,
                                       const std::string& criterion);
/// Confounder criteria of the corrected circle at +50%, plus a probe that
/// unlabeled steps leave the projection and its optimizer state untouched.
std::vector<Check> check_ssl(const StageResult& s, const std::string& criterion);

/// Runs an unlabeled step on a fresh model and reports whether p and the
/// projection optimizer state stayed bit-identical.
bool unlabeled_step_keeps_projection(const RunConfig& cfg);

struct PresetReport {
    std::string preset;
    std::vector<std::string> tables;
    std::vector<Check> checks;

    bool passed() const;
};

std::vector<std::string> preset_names();
/// Human-readable purpose and default scale of a preset.
std::string preset_description(const std::string& name);

/// Base configurations (stage label, config) of a preset at a scale.
std::vector<std::pair<std::string, RunConfig>> preset_stages(const std::string& name, const Scale& scale);
Scale preset_default_scale(const std::string& name);

/// Runs a preset end to end into out_dir and evaluates its embedded
/// tolerances. Throws ConfigError for an unknown preset.
PresetReport run_preset(const std::string& name, const std::filesystem::path& out_dir,
                        const std::optional<Scale>& scale = std::nullopt, const Logger& log = {});

/// Writes frames, heatmaps, frames.json and the aggregated heatmap of a
/// stage below dir.
void export_visualization(const std::vector<FoldVisualization>& viz, std::size_t image_size,
                          const std::filesystem::path& dir);

}  // namespace cfrep
