#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfrep/adam.hpp"
#include "cfrep/model.hpp"
#include "cfrep/synth.hpp"

namespace cfrep {

enum class PredictorKind { linear, logistic };

std::string to_string(PredictorKind kind);
PredictorKind parse_predictor_kind(const std::string& name);

enum class LrSchedule { constant, cosine };

std::string to_string(LrSchedule schedule);
LrSchedule parse_lr_schedule(const std::string& name);

/// Floor of the cosine schedule as a fraction of the base learning rate.
inline constexpr double kCosineFloor = 0.01;

struct TrainConfig {
    double eta = 2.0;
    double lambda = 5.0;
    std::size_t latent_dim = 2;
    std::size_t batch_size = 16;
    std::size_t epochs = 300;
    double learning_rate = 1e-3;
    std::uint64_t seed = 1;
    /// Empty selects the dataset's declared target.
    std::string target;
    /// Attributes entered into the correlation loss (order is kept).
    std::vector<std::string> confounders;
    bool ssl = false;
    bool ncc = false;
    std::size_t folds = 5;
    PredictorKind predictor = PredictorKind::linear;
    std::vector<std::size_t> channels{8, 16, 32, 64};
    /// Leading epochs over which eta ramps linearly up from 0. Starting the
    /// full confounder penalty on a freshly initialized encoder strips every
    /// confounder-correlated direction from zp and leaves r(zp, t) stuck at
    /// its zero saddle.
    std::size_t eta_warmup = 60;
    LrSchedule lr_schedule = LrSchedule::cosine;

    /// eta in effect during the given 1-based epoch.
    double eta_at(std::size_t epoch) const;
    /// Learning rate in effect during the given 1-based epoch.
    double learning_rate_at(std::size_t epoch) const;

    Architecture architecture(std::size_t image_size) const;
    /// Throws ConfigError naming the offending setting.
    void validate() const;
};

struct FoldSplit {
    std::vector<std::size_t> train;
    /// Non-empty only for the first fold (70/10 split of its training part).
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

/// Seeded k-fold partition of 0..n-1. Test folds are disjoint and cover
/// every index. When `groups` is given, indices sharing a group id never
/// straddle a train/test boundary.
std::vector<FoldSplit> split_folds(std::size_t n, std::size_t folds, std::uint64_t seed,
                                   std::span<const std::uint64_t> groups = {});

struct Predictor {
    PredictorKind kind = PredictorKind::linear;
    double slope = 0.0;
    double intercept = 0.0;

    /// Linear: a*zp + b. Logistic: sigmoid(a*zp + b).
    double predict(double zp) const;
};

inline constexpr double kLogisticRidge = 1e-6;

/// Linear: closed-form least squares. Logistic: Newton-Raphson with an L2
/// ridge of kLogisticRidge, at most 100 iterations, gradient norm < 1e-8.
Predictor fit_predictor(std::span<const double> zp, std::span<const double> t, PredictorKind kind);

/// Images and label columns of one mini-batch.
struct Batch {
    Tensor images;
    std::vector<float> target;
    std::vector<std::vector<float>> confounders;
};

struct Columns {
    std::size_t target = 0;
    /// Columns entering the correlation loss.
    std::vector<std::size_t> corrected;
    /// Columns only reported by the evaluation.
    std::vector<std::size_t> reported;
};

Columns resolve_columns(const Dataset& ds, const TrainConfig& cfg);

Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices, const Columns& cols);

struct Optimizers {
    AdamState autoencoder;
    AdamState projection;
};

Optimizers make_optimizers(const TrainConfig& cfg);

struct StepLosses {
    double total = 0.0;
    double rec = 0.0;
    double ncc = 0.0;
    double corr = 0.0;
    std::size_t skipped_terms = 0;
};

/// One supervised update of encoder, decoder and projection by L_joint.
StepLosses train_step(ModelState& model, Optimizers& opt, const Batch& labeled, const TrainConfig& cfg);

/// Reconstruction-only update of encoder and decoder; returns the loss.
/// The projection parameters and their optimizer state are not touched.
double train_step_unlabeled(ModelState& model, Optimizers& opt, const Batch& unlabeled, const TrainConfig& cfg);

struct SslLosses {
    /// Reconstruction loss of the unlabeled half; empty when it was skipped.
    std::optional<double> unlabeled_rec;
    StepLosses labeled;
};

/// Two-step semi-supervised update: L_rec on the unlabeled half-batch
/// (encoder/decoder only), then L_joint on the labeled half-batch.
/// A null or empty unlabeled batch skips the first step.
SslLosses train_step_ssl(ModelState& model, Optimizers& opt, const Batch* unlabeled, const Batch& labeled,
                         const TrainConfig& cfg);

struct EpochLog {
    std::size_t epoch = 0;
    double rec = 0.0;
    double ncc = 0.0;
    double corr = 0.0;
    double total = 0.0;
    double unlabeled_rec = 0.0;
    std::size_t skipped_terms = 0;
    std::size_t skipped_steps = 0;
    /// |r(zp, t)| and max_i |r(zp, c_i)| on the validation split, if any.
    std::optional<double> val_target_r;
    std::optional<double> val_confounder_r;
};

struct TrainedFold {
    ModelState model;
    std::vector<EpochLog> history;
    /// Labeled training samples and their final zp*, used to fit the predictor.
    std::vector<std::size_t> labeled_train;
    std::vector<double> labeled_train_zp;
    std::size_t skipped_terms = 0;
    std::size_t skipped_steps = 0;
};

using Logger = std::function<void(const std::string&)>;

/// Trains one fold from scratch and returns the final-epoch model with a
/// unit-length projection oriented so that r(zp*, t) >= 0 on the labeled
/// training samples. Throws NumericFault naming epoch and batch on NaN.
TrainedFold train_fold(const Dataset& ds, const TrainConfig& cfg, const FoldSplit& split, std::size_t fold,
                       const Logger& log = {});

struct AttributeMetrics {
    std::string name;
    bool corrected = false;
    double r = 0.0;
    double dcor2 = 0.0;
    double mi = 0.0;
};

struct MetricsReport {
    /// "rmse" or "auc".
    std::string err_name;
    double err = 0.0;
    double r_target = 0.0;
    std::vector<AttributeMetrics> attributes;
    double l1 = 0.0;
    double ncc = 0.0;
    std::size_t skipped_terms = 0;
    std::size_t skipped_steps = 0;
    std::size_t test_count = 0;
};

/// zp* (unit projection) of the given samples.
std::vector<double> latent_projection(const ModelState& model, const Dataset& ds, std::span<const std::size_t> idx);

MetricsReport evaluate(const ModelState& model, const Predictor& predictor, const Dataset& ds,
                       std::span<const std::size_t> test, const Columns& cols, PredictorKind kind);

struct FoldArtifacts {
    FoldSplit split;
    TrainedFold trained;
    Predictor predictor;
    MetricsReport report;
};

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};

struct Summary {
    std::string err_name;
    MeanSd err, r_target, l1, ncc;
    std::vector<std::string> attribute_names;
    std::vector<bool> corrected;
    std::vector<MeanSd> r, dcor2, mi;
};

struct RunArtifacts {
    std::vector<FoldArtifacts> folds;
    Summary summary;
};

MeanSd mean_sd(std::span<const double> v);
Summary summarize(const std::vector<FoldArtifacts>& folds);
/// One Table-1-style line per metric, "mean±sd".
std::string format_summary(const Summary& s);

/// Runs every fold. When run_dir is set, writes config.echo (the given
/// text), fold_k/{model.ckpt,metrics.json,split.json,loss_history.csv} and
/// summary.json. A failing fold aborts the run with its index.
RunArtifacts run_experiment(const Dataset& ds, const TrainConfig& cfg,
                            const std::optional<std::filesystem::path>& run_dir = std::nullopt,
                            const Logger& log = {}, const std::string& config_echo = {});

}  // namespace cfrep
