#include "cfrep/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cfrep/checkpoint.hpp"
#include "cfrep/errors.hpp"
#include "cfrep/losses.hpp"
#include "cfrep/metrics.hpp"
#include "cfrep/ops.hpp"
#include "cfrep/rng.hpp"
#include "fp_env.hpp"

namespace cfrep {

namespace {

constexpr std::uint64_t kSplitStream = 11;
constexpr std::uint64_t kValidationStream = 12;
constexpr std::uint64_t kModelStream = 100;
constexpr std::uint64_t kEpochStream = 200;
constexpr std::size_t kEvalChunk = 64;

std::vector<float> gather_column(const Dataset& ds, std::span<const std::size_t> idx, std::size_t col) {
    std::vector<float> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = ds.label(idx[i], col);
    return out;
}

std::vector<double> gather_column_d(const Dataset& ds, std::span<const std::size_t> idx, std::size_t col) {
    std::vector<double> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = ds.label(idx[i], col);
    return out;
}

Tensor gather_images(const Dataset& ds, std::span<const std::size_t> idx) {
    const std::size_t s = ds.image_size, p = ds.pixels_per_image();
    Tensor images(Shape{idx.size(), 1, s, s});
    auto out = images.values();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto img = ds.image(idx[i]);
        std::copy(img.begin(), img.end(), out.begin() + static_cast<std::ptrdiff_t>(i * p));
    }
    return images;
}

void check_finite_loss(double v, const char* what) {
    if (!std::isfinite(v)) throw NumericFault(std::string("non-finite ") + what + " loss");
}

std::vector<Tensor> projection_params(ModelState& model) { return {model.params().projection}; }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Predictor fit_logistic(std::span<const double> zp, std::span<const double> t) {
    const std::size_t n = zp.size();
    std::size_t positives = 0;
    for (double v : t) {
        if (v != 0.0 && v != 1.0) throw DomainError("logistic predictor needs 0/1 targets");
        positives += v == 1.0 ? 1 : 0;
    }
    if (positives == 0 || positives == n) throw DomainError("logistic predictor needs both classes");
    // Fit on standardized zp for conditioning; the ridge acts on the
    // standardized coefficients.
    const double m = std::accumulate(zp.begin(), zp.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double z : zp) ss += (z - m) * (z - m);
    const double s = std::sqrt(ss / static_cast<double>(n));
    if (s == 0.0) throw DomainError("predictor input zp has zero variance");

    auto objective = [&](double a, double b) {
        double f = 0.5 * kLogisticRidge * (a * a + b * b);
        for (std::size_t i = 0; i < n; ++i) {
            const double eta = a * (zp[i] - m) / s + b;
            // log(1 + e^eta) - t*eta, evaluated stably.
            f += (eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta))) - t[i] * eta;
        }
        return f;
    };
    double a = 0.0, b = 0.0;
    for (int it = 0; it < 100; ++it) {
        double ga = kLogisticRidge * a, gb = kLogisticRidge * b;
        double haa = kLogisticRidge, hab = 0.0, hbb = kLogisticRidge;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = (zp[i] - m) / s;
            const double p = sigmoid(a * x + b);
            const double w = p * (1.0 - p);
            ga += (p - t[i]) * x;
            gb += p - t[i];
            haa += w * x * x;
            hab += w * x;
            hbb += w;
        }
        if (std::sqrt(ga * ga + gb * gb) < 1e-8) {
            return Predictor{PredictorKind::logistic, a / s, b - a * m / s};
        }
        const double det = haa * hbb - hab * hab;
        double da = -(hbb * ga - hab * gb) / det;
        double db = -(-hab * ga + haa * gb) / det;
        const double f0 = objective(a, b);
        double step = 1.0;
        while (step > 1e-12 && objective(a + step * da, b + step * db) > f0) step *= 0.5;
        a += step * da;
        b += step * db;
    }
    throw NumericFault("logistic predictor did not converge within 100 Newton iterations");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot write " + path.string());
    os << text;
}

nlohmann::json report_json(const MetricsReport& r, const Predictor& p) {
    nlohmann::json attrs = nlohmann::json::array();
    for (const auto& a : r.attributes) {
        attrs.push_back({{"name", a.name}, {"corrected", a.corrected}, {"r", a.r}, {"dcor2", a.dcor2}, {"mi", a.mi}});
    }
    return {{"err_name", r.err_name},
            {"err", r.err},
            {"r_target", r.r_target},
            {"attributes", attrs},
            {"l1", r.l1},
            {"ncc", r.ncc},
            {"skipped_terms", r.skipped_terms},
            {"skipped_steps", r.skipped_steps},
            {"test_count", r.test_count},
            {"predictor", {{"kind", to_string(p.kind)}, {"slope", p.slope}, {"intercept", p.intercept}}}};
}

std::string history_csv(const std::vector<EpochLog>& history) {
    std::ostringstream os;
    os << std::setprecision(9);
    os << "epoch,total,rec,ncc,corr,unlabeled_rec,skipped_terms,skipped_steps,val_target_r,val_confounder_r\n";
    for (const auto& h : history) {
        os << h.epoch << ',' << h.total << ',' << h.rec << ',' << h.ncc << ',' << h.corr << ',' << h.unlabeled_rec
           << ',' << h.skipped_terms << ',' << h.skipped_steps << ',';
        if (h.val_target_r) os << *h.val_target_r;
        os << ',';
        if (h.val_confounder_r) os << *h.val_confounder_r;
        os << '\n';
    }
    return os.str();
}

nlohmann::json mean_sd_json(const MeanSd& v) { return {{"mean", v.mean}, {"sd", v.sd}}; }

std::string pm(const MeanSd& v, bool sign) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << (sign ? std::showpos : std::noshowpos) << v.mean << std::noshowpos
       << "±" << v.sd;
    return os.str();
}

}  // namespace

std::string to_string(PredictorKind kind) {
    return kind == PredictorKind::linear ? "linear" : "logistic";
}

PredictorKind parse_predictor_kind(const std::string& name) {
    if (name == "linear") return PredictorKind::linear;
    if (name == "logistic") return PredictorKind::logistic;
    throw ConfigError("unknown predictor '" + name + "' (expected linear or logistic)");
}

std::string to_string(LrSchedule schedule) {
    return schedule == LrSchedule::constant ? "constant" : "cosine";
}

LrSchedule parse_lr_schedule(const std::string& name) {
    if (name == "constant") return LrSchedule::constant;
    if (name == "cosine") return LrSchedule::cosine;
    throw ConfigError("unknown lr schedule '" + name + "' (expected constant or cosine)");
}

double TrainConfig::eta_at(std::size_t epoch) const {
    if (epoch > eta_warmup) return eta;
    return eta * static_cast<double>(epoch - 1) / static_cast<double>(eta_warmup);
}

double TrainConfig::learning_rate_at(std::size_t epoch) const {
    if (lr_schedule == LrSchedule::constant || epochs <= 1) return learning_rate;
    const double progress = static_cast<double>(epoch - 1) / static_cast<double>(epochs - 1);
    return learning_rate * (kCosineFloor + (1.0 - kCosineFloor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

Architecture TrainConfig::architecture(std::size_t image_size) const {
    Architecture a;
    a.image_size = image_size;
    a.channels = channels;
    a.latent_dim = latent_dim;
    return a;
}

void TrainConfig::validate() const {
    if (!(eta >= 0.0)) throw ConfigError("train.eta must be >= 0");
    if (!(lambda >= 0.0)) throw ConfigError("train.lambda must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
    if (batch_size <= 8) throw ConfigError("train.batch_size must be larger than 8 (batch-level correlations)");
    if (ssl && batch_size % 2 != 0) throw ConfigError("train.batch_size must be even when ssl is on");
    if (epochs == 0) throw ConfigError("train.epochs must be at least 1");
    if (folds < 2) throw ConfigError("train.folds must be at least 2");
    if (eta_warmup >= epochs && eta > 0.0) {
        throw ConfigError("train.eta_warmup must be below train.epochs, or the correction never starts");
    }
    if (channels.empty()) throw ConfigError("train.channels must list at least one block");
    if (latent_dim < confounders.size() + 1) {
        throw ConfigError("train.latent_dim " + std::to_string(latent_dim) + " must be >= number of confounders + 1 (" +
                          std::to_string(confounders.size() + 1) + ")");
    }
    for (std::size_t i = 0; i < confounders.size(); ++i) {
        if (confounders[i] == target) throw ConfigError("train.confounders must not contain the target");
        for (std::size_t j = 0; j < i; ++j) {
            if (confounders[i] == confounders[j]) throw ConfigError("train.confounders lists '" + confounders[i] + "' twice");
        }
    }
}

std::vector<FoldSplit> split_folds(std::size_t n, std::size_t folds, std::uint64_t seed,
                                   std::span<const std::uint64_t> groups) {
    if (folds < 2) throw DomainError("split_folds needs at least 2 folds");
    if (!groups.empty() && groups.size() != n) throw ShapeError("split_folds: one group id per sample required");
    // Units are samples, or groups of samples that must stay together.
    std::vector<std::vector<std::size_t>> units;
    if (groups.empty()) {
        for (std::size_t i = 0; i < n; ++i) units.push_back({i});
    } else {
        std::map<std::uint64_t, std::size_t> slot;
        for (std::size_t i = 0; i < n; ++i) {
            auto [it, fresh] = slot.emplace(groups[i], units.size());
            if (fresh) units.emplace_back();
            units[it->second].push_back(i);
        }
    }
    const std::size_t u = units.size();
    if (folds > u) {
        throw DomainError("cannot split " + std::to_string(u) + " samples/groups into " + std::to_string(folds) + " folds");
    }
    std::vector<std::size_t> order(u);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, kSplitStream));
    rng.shuffle(order);

    std::vector<FoldSplit> out(folds);
    for (std::size_t f = 0; f < folds; ++f) {
        const std::size_t lo = f * u / folds, hi = (f + 1) * u / folds;
        std::vector<std::size_t> train_units;
        for (std::size_t q = 0; q < u; ++q) {
            auto& dst = (q >= lo && q < hi) ? out[f].test : out[f].train;
            for (auto i : units[order[q]]) dst.push_back(i);
            if (!(q >= lo && q < hi)) train_units.push_back(order[q]);
        }
        if (f == 0) {
            // 80% training part -> 70% train + 10% validation.
            Rng vrng(derive_seed(seed, kValidationStream));
            vrng.shuffle(train_units);
            const std::size_t want = (out[f].train.size() + 4) / 8;
            std::vector<std::size_t> validation, train;
            for (auto unit : train_units) {
                auto& dst = validation.size() < want ? validation : train;
                for (auto i : units[unit]) dst.push_back(i);
            }
            out[f].validation = std::move(validation);
            out[f].train = std::move(train);
        }
        std::sort(out[f].train.begin(), out[f].train.end());
        std::sort(out[f].validation.begin(), out[f].validation.end());
        std::sort(out[f].test.begin(), out[f].test.end());
    }
    return out;
}

double Predictor::predict(double zp) const {
    const double eta = slope * zp + intercept;
    return kind == PredictorKind::linear ? eta : sigmoid(eta);
}

Predictor fit_predictor(std::span<const double> zp, std::span<const double> t, PredictorKind kind) {
    if (zp.size() != t.size()) throw ShapeError("fit_predictor: zp and t lengths differ");
    if (zp.size() < 2) throw DomainError("fit_predictor needs at least 2 samples");
    if (kind == PredictorKind::logistic) return fit_logistic(zp, t);
    const double n = static_cast<double>(zp.size());
    const double mz = std::accumulate(zp.begin(), zp.end(), 0.0) / n;
    const double mt = std::accumulate(t.begin(), t.end(), 0.0) / n;
    double szz = 0.0, szt = 0.0;
    for (std::size_t i = 0; i < zp.size(); ++i) {
        szz += (zp[i] - mz) * (zp[i] - mz);
        szt += (zp[i] - mz) * (t[i] - mt);
    }
    if (szz == 0.0) throw DomainError("predictor input zp has zero variance");
    const double slope = szt / szz;
    return Predictor{PredictorKind::linear, slope, mt - slope * mz};
}

Columns resolve_columns(const Dataset& ds, const TrainConfig& cfg) {
    Columns c;
    c.target = cfg.target.empty() ? ds.target_index() : ds.attribute_index(cfg.target);
    for (const auto& name : cfg.confounders) {
        const auto idx = ds.attribute_index(name);
        if (idx == c.target) throw ConfigError("confounder '" + name + "' is the target");
        c.corrected.push_back(idx);
    }
    for (std::size_t i = 0; i < ds.attribute_count(); ++i) {
        if (i != c.target && std::find(c.corrected.begin(), c.corrected.end(), i) == c.corrected.end()) {
            c.reported.push_back(i);
        }
    }
    return c;
}

Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices, const Columns& cols) {
    Batch b;
    b.images = gather_images(ds, indices);
    b.target = gather_column(ds, indices, cols.target);
    for (auto c : cols.corrected) b.confounders.push_back(gather_column(ds, indices, c));
    return b;
}

Optimizers make_optimizers(const TrainConfig& cfg) {
    Optimizers o;
    o.autoencoder.options.learning_rate = cfg.learning_rate;
    o.projection.options.learning_rate = cfg.learning_rate;
    return o;
}

StepLosses train_step(ModelState& model, Optimizers& opt, const Batch& labeled, const TrainConfig& cfg) {
    const auto& arch = model.architecture();
    auto& params = model.params();
    Graph g;
    auto d = encode(g, arch, params, labeled.images);
    auto xr = decode(g, arch, params, d);
    auto zp = project_raw(g, params, d);
    std::vector<std::span<const float>> confounders(labeled.confounders.begin(), labeled.confounders.end());
    auto loss = loss_joint<float>(g, labeled.images, xr, zp, labeled.target, confounders, cfg.eta, cfg.lambda, cfg.ncc);
    StepLosses out{loss.total.item(), loss.rec, loss.ncc, loss.corr, loss.skipped_terms};
    check_finite_loss(out.total, "joint");
    g.backward(loss.total);
    auto ae = params.autoencoder();
    adam_step(ae, opt.autoencoder);
    auto pe = projection_params(model);
    adam_step(pe, opt.projection);
    return out;
}

double train_step_unlabeled(ModelState& model, Optimizers& opt, const Batch& unlabeled, const TrainConfig& cfg) {
    const auto& arch = model.architecture();
    auto& params = model.params();
    Graph g;
    auto xr = decode(g, arch, params, encode(g, arch, params, unlabeled.images));
    auto loss = loss_rec(g, unlabeled.images, xr);
    if (cfg.ncc) loss = ops::add(g, loss, loss_ncc(g, unlabeled.images, xr));
    const double value = loss.item();
    check_finite_loss(value, "unlabeled reconstruction");
    g.backward(loss);
    // Only encoder and decoder move; the projection estimator is not part
    // of this objective and keeps its parameters and Adam state bit-for-bit.
    auto ae = params.autoencoder();
    adam_step(ae, opt.autoencoder);
    return value;
}

SslLosses train_step_ssl(ModelState& model, Optimizers& opt, const Batch* unlabeled, const Batch& labeled,
                         const TrainConfig& cfg) {
    SslLosses out;
    if (unlabeled != nullptr && unlabeled->images.defined() && unlabeled->images.numel() > 0) {
        out.unlabeled_rec = train_step_unlabeled(model, opt, *unlabeled, cfg);
    }
    out.labeled = train_step(model, opt, labeled, cfg);
    return out;
}

std::vector<double> latent_projection(const ModelState& model, const Dataset& ds, std::span<const std::size_t> idx) {
    std::vector<double> out;
    out.reserve(idx.size());
    for (std::size_t lo = 0; lo < idx.size(); lo += kEvalChunk) {
        const auto chunk = idx.subspan(lo, std::min(kEvalChunk, idx.size() - lo));
        const auto zp = model.project(model.encode(gather_images(ds, chunk)));
        out.insert(out.end(), zp.begin(), zp.end());
    }
    return out;
}

TrainedFold train_fold(const Dataset& ds, const TrainConfig& cfg, const FoldSplit& split, std::size_t fold,
                       const Logger& log) {
    const detail::FlushDenormals flush;
    cfg.validate();
    const Columns cols = resolve_columns(ds, cfg);
    TrainedFold out{ModelState(cfg.architecture(ds.image_size), cols.corrected.size(),
                               derive_seed(cfg.seed, kModelStream + fold)),
                    {}, {}, {}, 0, 0};
    ModelState& model = out.model;
    model.zero_grad();
    Optimizers opt = make_optimizers(cfg);

    std::vector<std::size_t> labeled, unlabeled;
    for (auto i : split.train) (ds.mask[i] ? labeled : unlabeled).push_back(i);
    const std::size_t per_step = cfg.ssl ? cfg.batch_size / 2 : cfg.batch_size;
    if (labeled.size() < 2 * per_step) {
        throw DataError("fold " + std::to_string(fold) + " has " + std::to_string(labeled.size()) +
                        " labeled training samples; at least " + std::to_string(2 * per_step) + " are needed");
    }
    out.labeled_train = labeled;

    std::vector<double> val_target;
    std::vector<std::vector<double>> val_conf;
    if (!split.validation.empty()) {
        val_target = gather_column_d(ds, split.validation, cols.target);
        for (auto c : cols.corrected) val_conf.push_back(gather_column_d(ds, split.validation, c));
    }

    const std::uint64_t fold_seed = derive_seed(cfg.seed, kEpochStream + fold);
    TrainConfig step_cfg = cfg;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        step_cfg.eta = cfg.eta_at(epoch);
        opt.autoencoder.options.learning_rate = cfg.learning_rate_at(epoch);
        opt.projection.options.learning_rate = cfg.learning_rate_at(epoch);
        Rng rng(derive_seed(fold_seed, epoch));
        auto lab = labeled;
        rng.shuffle(lab);
        auto unl = unlabeled;
        if (cfg.ssl) rng.shuffle(unl);
        const std::size_t steps = lab.size() / per_step;  // last partial batch dropped
        EpochLog e;
        e.epoch = epoch;
        std::size_t unl_pos = 0, unl_steps = 0;
        for (std::size_t s = 0; s < steps; ++s) {
            const std::span<const std::size_t> idx(lab.data() + s * per_step, per_step);
            const Batch batch = make_batch(ds, idx, cols);
            StepLosses l;
            try {
                if (cfg.ssl) {
                    std::optional<Batch> ub;
                    if (!unl.empty()) {
                        std::vector<std::size_t> uidx(per_step);
                        for (auto& u : uidx) u = unl[unl_pos++ % unl.size()];
                        ub = make_batch(ds, uidx, cols);
                    }
                    auto r = train_step_ssl(model, opt, ub ? &*ub : nullptr, batch, step_cfg);
                    if (r.unlabeled_rec) {
                        e.unlabeled_rec += *r.unlabeled_rec;
                        ++unl_steps;
                    } else {
                        ++e.skipped_steps;
                    }
                    l = r.labeled;
                } else {
                    l = train_step(model, opt, batch, step_cfg);
                }
            } catch (const NumericFault& err) {
                throw NumericFault("fold " + std::to_string(fold) + " epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(s) + ": " + err.what());
            }
            e.total += l.total;
            e.rec += l.rec;
            e.ncc += l.ncc;
            e.corr += l.corr;
            e.skipped_terms += l.skipped_terms;
        }
        const double k = static_cast<double>(steps);
        e.total /= k;
        e.rec /= k;
        e.ncc /= k;
        e.corr /= k;
        if (unl_steps > 0) e.unlabeled_rec /= static_cast<double>(unl_steps);
        if (!split.validation.empty()) {
            Graph g;
            g.set_recording(false);
            std::vector<double> zp;
            for (std::size_t lo = 0; lo < split.validation.size(); lo += kEvalChunk) {
                const auto chunk = std::span<const std::size_t>(split.validation)
                                       .subspan(lo, std::min(kEvalChunk, split.validation.size() - lo));
                auto raw = project_raw(g, model.params(), model.encode(gather_images(ds, chunk)));
                zp.insert(zp.end(), raw.values().begin(), raw.values().end());
            }
            e.val_target_r = std::abs(guarded_pearson(zp, val_target));
            double worst = 0.0;
            for (const auto& c : val_conf) worst = std::max(worst, std::abs(guarded_pearson(zp, c)));
            if (!val_conf.empty()) e.val_confounder_r = worst;
        }
        out.skipped_terms += e.skipped_terms;
        out.skipped_steps += e.skipped_steps;
        if (log) {
            std::ostringstream os;
            os << std::setprecision(4) << "fold " << fold << " epoch " << epoch << "/" << cfg.epochs
               << " loss=" << e.total << " rec=" << e.rec << " corr=" << e.corr;
            if (e.val_target_r) os << " val|r_t|=" << *e.val_target_r;
            if (e.val_confounder_r) os << " val|r_c|max=" << *e.val_confounder_r;
            log(os.str());
        }
        out.history.push_back(e);
    }

    model.normalize_projection();
    out.labeled_train_zp = latent_projection(model, ds, labeled);
    const auto t = gather_column_d(ds, labeled, cols.target);
    if (guarded_pearson(out.labeled_train_zp, t) < 0.0) {
        for (auto& v : model.params().projection.values()) v = -v;
        for (auto& z : out.labeled_train_zp) z = -z;
    }
    return out;
}

MetricsReport evaluate(const ModelState& model, const Predictor& predictor, const Dataset& ds,
                       std::span<const std::size_t> test, const Columns& cols, PredictorKind kind) {
    const detail::FlushDenormals flush;
    MetricsReport r;
    r.test_count = test.size();
    const auto zp = latent_projection(model, ds, test);
    const auto t = gather_column_d(ds, test, cols.target);
    std::vector<double> pred(zp.size());
    for (std::size_t i = 0; i < zp.size(); ++i) pred[i] = predictor.predict(zp[i]);
    if (kind == PredictorKind::linear) {
        r.err_name = "rmse";
        r.err = rmse(pred, t);
    } else {
        r.err_name = "auc";
        r.err = auc(pred, t);
    }
    r.r_target = pearson(zp, t);
    auto add = [&](std::size_t col, bool corrected) {
        const auto c = gather_column_d(ds, test, col);
        r.attributes.push_back({ds.attributes[col].name, corrected, pearson(zp, c), dcor2(zp, c), mutual_info(zp, c)});
    };
    for (auto c : cols.corrected) add(c, true);
    for (auto c : cols.reported) add(c, false);

    double l1 = 0.0, ncc = 0.0;
    for (std::size_t lo = 0; lo < test.size(); lo += kEvalChunk) {
        const auto chunk = test.subspan(lo, std::min(kEvalChunk, test.size() - lo));
        const Tensor x = gather_images(ds, chunk);
        const Tensor xr = model.decode(model.encode(x));
        const double w = static_cast<double>(chunk.size());
        l1 += l1_metric(x, xr) * w;
        ncc += ncc_metric(x, xr) * w;
    }
    r.l1 = l1 / static_cast<double>(test.size());
    r.ncc = ncc / static_cast<double>(test.size());
    return r;
}

MeanSd mean_sd(std::span<const double> v) {
    MeanSd out;
    if (v.empty()) return out;
    out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - out.mean) * (x - out.mean);
        out.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return out;
}

Summary summarize(const std::vector<FoldArtifacts>& folds) {
    Summary s;
    if (folds.empty()) return s;
    auto collect = [&](auto get) {
        std::vector<double> v;
        for (const auto& f : folds) v.push_back(get(f.report));
        return mean_sd(v);
    };
    s.err_name = folds.front().report.err_name;
    s.err = collect([](const MetricsReport& r) { return r.err; });
    s.r_target = collect([](const MetricsReport& r) { return r.r_target; });
    s.l1 = collect([](const MetricsReport& r) { return r.l1; });
    s.ncc = collect([](const MetricsReport& r) { return r.ncc; });
    const auto& attrs = folds.front().report.attributes;
    for (std::size_t a = 0; a < attrs.size(); ++a) {
        s.attribute_names.push_back(attrs[a].name);
        s.corrected.push_back(attrs[a].corrected);
        s.r.push_back(collect([a](const MetricsReport& r) { return r.attributes[a].r; }));
        s.dcor2.push_back(collect([a](const MetricsReport& r) { return r.attributes[a].dcor2; }));
        s.mi.push_back(collect([a](const MetricsReport& r) { return r.attributes[a].mi; }));
    }
    return s;
}

std::string format_summary(const Summary& s) {
    std::ostringstream os;
    auto row = [&](const std::string& name, const std::string& value) {
        os << std::left << std::setw(24) << name << value << '\n';
    };
    row(s.err_name == "auc" ? "AUC" : "r-MSE", pm(s.err, false));
    row("r(zp,target)", pm(s.r_target, true));
    for (std::size_t a = 0; a < s.attribute_names.size(); ++a) {
        const std::string tag = s.attribute_names[a] + (s.corrected[a] ? "*" : "");
        row("r(zp," + tag + ")", pm(s.r[a], true));
    }
    for (std::size_t a = 0; a < s.attribute_names.size(); ++a) {
        row("dcor2(zp," + s.attribute_names[a] + ")", pm(s.dcor2[a], false));
    }
    for (std::size_t a = 0; a < s.attribute_names.size(); ++a) {
        row("MI(zp," + s.attribute_names[a] + ")", pm(s.mi[a], false));
    }
    row("L1", pm(s.l1, false));
    row("NCC", pm(s.ncc, false));
    return os.str();
}

RunArtifacts run_experiment(const Dataset& ds, const TrainConfig& cfg, const std::optional<std::filesystem::path>& run_dir,
                            const Logger& log, const std::string& config_echo) {
    cfg.validate();
    const Columns cols = resolve_columns(ds, cfg);
    RunArtifacts run;
    const auto splits = split_folds(ds.count, cfg.folds, cfg.seed);
    if (run_dir) {
        std::filesystem::create_directories(*run_dir);
        write_text(*run_dir / "config.echo", config_echo);
    }
    for (std::size_t f = 0; f < splits.size(); ++f) {
        try {
            FoldArtifacts fa{splits[f], train_fold(ds, cfg, splits[f], f, log), {}, {}};
            const auto t = gather_column_d(ds, fa.trained.labeled_train, cols.target);
            fa.predictor = fit_predictor(fa.trained.labeled_train_zp, t, cfg.predictor);
            fa.report = evaluate(fa.trained.model, fa.predictor, ds, fa.split.test, cols, cfg.predictor);
            fa.report.skipped_terms = fa.trained.skipped_terms;
            fa.report.skipped_steps = fa.trained.skipped_steps;
            if (run_dir) {
                const auto dir = *run_dir / ("fold_" + std::to_string(f));
                std::filesystem::create_directories(dir);
                save_checkpoint(dir / "model.ckpt", fa.trained.model, config_echo);
                write_text(dir / "metrics.json", report_json(fa.report, fa.predictor).dump(2) + "\n");
                const nlohmann::json split = {
                    {"train", fa.split.train}, {"validation", fa.split.validation}, {"test", fa.split.test}};
                write_text(dir / "split.json", split.dump() + "\n");
                write_text(dir / "loss_history.csv", history_csv(fa.trained.history));
            }
            run.folds.push_back(std::move(fa));
        } catch (const Error& e) {
            // Keep the error class (exit codes depend on it), add the fold.
            const std::string msg = "fold " + std::to_string(f) + ": " + e.what();
            if (dynamic_cast<const NumericFault*>(&e)) throw NumericFault(msg);
            if (dynamic_cast<const DataError*>(&e)) throw DataError(msg);
            if (dynamic_cast<const ConfigError*>(&e)) throw ConfigError(msg);
            if (dynamic_cast<const DomainError*>(&e)) throw DomainError(msg);
            throw Error(msg);
        }
    }
    run.summary = summarize(run.folds);
    if (run_dir) {
        nlohmann::json attrs = nlohmann::json::array();
        const auto& s = run.summary;
        for (std::size_t a = 0; a < s.attribute_names.size(); ++a) {
            attrs.push_back({{"name", s.attribute_names[a]},
                             {"corrected", static_cast<bool>(s.corrected[a])},
                             {"r", mean_sd_json(s.r[a])},
                             {"dcor2", mean_sd_json(s.dcor2[a])},
                             {"mi", mean_sd_json(s.mi[a])}});
        }
        const nlohmann::json summary = {{"folds", run.folds.size()},
                                        {"err_name", s.err_name},
                                        {"err", mean_sd_json(s.err)},
                                        {"r_target", mean_sd_json(s.r_target)},
                                        {"attributes", attrs},
                                        {"l1", mean_sd_json(s.l1)},
                                        {"ncc", mean_sd_json(s.ncc)}};
        write_text(*run_dir / "summary.json", summary.dump(2) + "\n");
    }
    return run;
}

}  // namespace cfrep
