#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cfrep/config.hpp"
#include "cfrep/model.hpp"
#include "cfrep/synth.hpp"
#include "cfrep/trainer.hpp"

namespace cfrep {

/// Relative tolerance on predicted frame targets, with an absolute fallback
/// for targets at zero.
inline constexpr double kFrameTolerance = 1e-3;
inline constexpr double kFrameEpsAbs = 1e-6;
inline constexpr std::size_t kBisectionIterations = 200;
/// Largest |k| the logistic bracket may expand to.
inline constexpr double kMaxStep = 1e3;
/// Probability window for frames of a logistic predictor (non-explicit ranges).
inline constexpr double kLogisticFrameLo = 0.05;
inline constexpr double kLogisticFrameHi = 0.95;

/// Element-wise mean of the encoder output over the given samples.
std::vector<float> mean_latent(const ModelState& model, const Dataset& ds, std::span<const std::size_t> idx);

/// zp* of a single latent point.
double project_point(const ModelState& model, std::span<const float> latent);

/// Step k along the unit projection such that predictor(zp0 + k) hits the
/// target. Affine predictors are inverted in closed form, logistic ones by
/// bisection. Throws DomainError for a flat predictor or a target outside
/// the reachable interval, NumericFault if the tolerance check fails.
double solve_k(double target, double zp0, const Predictor& predictor);

/// Arithmetic sequence of h targets from lo to hi (h = 1 gives {lo}).
std::vector<double> target_sequence(double lo, double hi, std::size_t h);

/// [lo, hi] for the given policy from the target column's mean and sd.
std::pair<double, double> target_range(const VizConfig& cfg, double mean, double sd);

struct Frames {
    std::vector<double> targets;
    std::vector<double> steps;
    std::vector<double> predicted;
    /// [h, 1, S, S]
    Tensor images;

    std::size_t count() const { return targets.size(); }
    std::span<const float> frame(std::size_t i) const;
};

/// Decodes d̄ + k_i p̂* for every target. An empty target list renders the
/// single frame at k = 0.
Frames sample_frames(const ModelState& model, const Predictor& predictor, std::span<const float> mean,
                     std::span<const double> targets);

/// Last frame minus first frame.
std::vector<float> heatmap(const Frames& frames);

/// Per-pixel mean over folds, zeroed where the one-sample t-test across
/// folds is not significant at alpha.
std::vector<float> aggregate_heatmaps(const std::vector<std::vector<float>>& per_fold, double alpha = 0.05);

/// sqrt(count/pi) of the pixels brighter than half the frame maximum.
double recovered_radius(std::span<const float> frame);

/// Least-squares slope of recovered radius against frame index (px/frame).
double radius_slope(const Frames& frames);

enum class PngMode { gray, diverging };

/// gray: [0,1] clamped to 8-bit grayscale. diverging: symmetric range
/// ±max|v| mapped blue -> white -> red as 8-bit RGB.
void export_png(const std::filesystem::path& path, std::span<const float> values, std::size_t width,
                std::size_t height, PngMode mode);

/// Encoded PNG bytes (the file written by export_png).
std::vector<unsigned char> encode_png(std::span<const float> values, std::size_t width, std::size_t height,
                                      PngMode mode);

void write_frames_json(const std::filesystem::path& path, const Frames& frames);

struct FoldVisualization {
    Frames frames;
    std::vector<float> heatmap;
};

/// Frames for one trained fold, sampled over the test targets' range.
FoldVisualization visualize_fold(const ModelState& model, const Predictor& predictor, const Dataset& ds,
                                 std::span<const std::size_t> test, std::size_t target_column, const VizConfig& cfg);

}  // namespace cfrep
