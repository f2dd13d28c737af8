#include "cfrep/viz.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>
#include <zlib.h>

#include "cfrep/errors.hpp"
#include "cfrep/metrics.hpp"
#include "fp_env.hpp"

namespace cfrep {

namespace {

bool within_tolerance(double target, double got) {
    return std::abs(target - got) / std::max(std::abs(target), kFrameEpsAbs) <= kFrameTolerance;
}

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>(v >> s));
}

void put_chunk(std::vector<unsigned char>& out, const char* type, const std::vector<unsigned char>& data) {
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const auto crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
    put_be32(out, static_cast<std::uint32_t>(crc));
}

unsigned char to_byte(double v) { return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

std::vector<float> mean_latent(const ModelState& model, const Dataset& ds, std::span<const std::size_t> idx) {
    if (idx.empty()) throw DomainError("mean_latent needs at least one sample");
    const detail::FlushDenormals flush;
    const std::size_t n = model.architecture().latent_dim;
    std::vector<double> sum(n, 0.0);
    constexpr std::size_t chunk = 64;
    for (std::size_t lo = 0; lo < idx.size(); lo += chunk) {
        const auto part = idx.subspan(lo, std::min(chunk, idx.size() - lo));
        Tensor images(Shape{part.size(), 1, ds.image_size, ds.image_size});
        auto out = images.values();
        for (std::size_t i = 0; i < part.size(); ++i) {
            const auto img = ds.image(part[i]);
            std::copy(img.begin(), img.end(), out.begin() + static_cast<std::ptrdiff_t>(i * img.size()));
        }
        const Tensor encoded = model.encode(images);
        const auto latent = encoded.values();
        for (std::size_t i = 0; i < part.size(); ++i) {
            for (std::size_t j = 0; j < n; ++j) sum[j] += latent[i * n + j];
        }
    }
    std::vector<float> mean(n);
    for (std::size_t j = 0; j < n; ++j) mean[j] = static_cast<float>(sum[j] / static_cast<double>(idx.size()));
    return mean;
}

double project_point(const ModelState& model, std::span<const float> latent) {
    const auto p = model.unit_projection();
    if (latent.size() != p.size()) throw ShapeError("project_point: latent length differs from latent_dim");
    double z = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) z += static_cast<double>(latent[j]) * p[j];
    return z;
}

double solve_k(double target, double zp0, const Predictor& predictor) {
    if (predictor.slope == 0.0 || !std::isfinite(predictor.slope)) {
        throw DomainError("predictor is flat along the projection; frames cannot be solved");
    }
    double k = 0.0;
    if (predictor.kind == PredictorKind::linear) {
        k = (target - predictor.intercept) / predictor.slope - zp0;
    } else {
        // Monotone in k; orient so that f increases.
        auto f = [&](double step) { return predictor.predict(zp0 + step); };
        const bool rising = predictor.slope > 0.0;
        double lo = -1.0, hi = 1.0;
        auto below = [&](double step) { return rising ? f(step) < target : f(step) > target; };
        while (!below(lo) && std::abs(lo) < kMaxStep) lo = std::max(lo * 2.0, -kMaxStep);
        while (below(hi) && hi < kMaxStep) hi = std::min(hi * 2.0, kMaxStep);
        if (!below(lo) || below(hi)) {
            const double a = f(-kMaxStep), b = f(kMaxStep);
            std::ostringstream os;
            os << "target " << target << " is outside the reachable interval [" << std::min(a, b) << ", "
               << std::max(a, b) << "]";
            throw DomainError(os.str());
        }
        k = 0.5 * (lo + hi);
        for (std::size_t it = 0; it < kBisectionIterations && !within_tolerance(target, f(k)); ++it) {
            (below(k) ? lo : hi) = k;
            k = 0.5 * (lo + hi);
        }
    }
    const double got = predictor.predict(zp0 + k);
    if (!within_tolerance(target, got)) {
        std::ostringstream os;
        os << "frame target " << target << " solved to " << got << ", outside the 0.1% tolerance";
        throw NumericFault(os.str());
    }
    return k;
}

std::vector<double> target_sequence(double lo, double hi, std::size_t h) {
    if (h == 0) throw DomainError("frame count must be at least 1");
    if (h == 1) return {lo};
    if (!(lo != hi)) throw DomainError("target range is empty");
    std::vector<double> out(h);
    for (std::size_t i = 0; i < h; ++i) out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(h - 1);
    return out;
}

std::pair<double, double> target_range(const VizConfig& cfg, double mean, double sd) {
    switch (cfg.range) {
        case RangePolicy::mean_1sd: return {mean - sd, mean + sd};
        case RangePolicy::mean_3sd: return {mean - 3.0 * sd, mean + 3.0 * sd};
        case RangePolicy::explicit_range: return {cfg.lo, cfg.hi};
    }
    throw ConfigError("unknown range policy");
}

std::span<const float> Frames::frame(std::size_t i) const {
    const std::size_t p = images.numel() / count();
    return images.values().subspan(i * p, p);
}

Frames sample_frames(const ModelState& model, const Predictor& predictor, std::span<const float> mean,
                     std::span<const double> targets) {
    const std::size_t n = model.architecture().latent_dim;
    if (mean.size() != n) throw ShapeError("sample_frames: mean latent length differs from latent_dim");
    const double zp0 = project_point(model, mean);
    Frames out;
    if (targets.empty()) {
        out.targets = {predictor.predict(zp0)};
        out.steps = {0.0};
    } else {
        out.targets.assign(targets.begin(), targets.end());
        for (double t : targets) out.steps.push_back(solve_k(t, zp0, predictor));
    }
    const auto p = model.unit_projection();
    Tensor latent(Shape{out.count(), n});
    auto lv = latent.values();
    for (std::size_t i = 0; i < out.count(); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            lv[i * n + j] = static_cast<float>(mean[j] + out.steps[i] * p[j]);
        }
        out.predicted.push_back(predictor.predict(project_point(model, lv.subspan(i * n, n))));
    }
    out.images = model.decode(latent);
    return out;
}

std::vector<float> heatmap(const Frames& frames) {
    if (frames.count() < 2) throw DomainError("a heatmap needs at least two frames");
    const auto first = frames.frame(0);
    const auto last = frames.frame(frames.count() - 1);
    std::vector<float> out(first.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = last[i] - first[i];
    return out;
}

std::vector<float> aggregate_heatmaps(const std::vector<std::vector<float>>& per_fold, double alpha) {
    if (per_fold.size() < 2) throw DomainError("aggregating heatmaps needs at least two folds");
    const std::size_t p = per_fold.front().size();
    std::vector<double> values;
    values.reserve(per_fold.size() * p);
    for (const auto& h : per_fold) {
        if (h.size() != p) throw ShapeError("fold heatmaps differ in size");
        values.insert(values.end(), h.begin(), h.end());
    }
    const auto mask = ttest_mask(values, per_fold.size(), alpha);
    std::vector<float> out(p, 0.0f);
    for (std::size_t i = 0; i < p; ++i) {
        if (!mask[i]) continue;
        double s = 0.0;
        for (const auto& h : per_fold) s += h[i];
        out[i] = static_cast<float>(s / static_cast<double>(per_fold.size()));
    }
    return out;
}

double recovered_radius(std::span<const float> frame) {
    if (frame.empty()) throw DomainError("recovered_radius: empty frame");
    const float peak = *std::max_element(frame.begin(), frame.end());
    if (!(peak > 0.0f)) return 0.0;
    const auto count = std::count_if(frame.begin(), frame.end(), [&](float v) { return v > 0.5f * peak; });
    return std::sqrt(static_cast<double>(count) / std::numbers::pi);
}

double radius_slope(const Frames& frames) {
    const std::size_t h = frames.count();
    if (h < 2) throw DomainError("radius_slope needs at least two frames");
    std::vector<double> idx(h), radius(h);
    for (std::size_t i = 0; i < h; ++i) {
        idx[i] = static_cast<double>(i);
        radius[i] = recovered_radius(frames.frame(i));
    }
    const double mx = (static_cast<double>(h) - 1.0) / 2.0;
    double my = 0.0;
    for (double r : radius) my += r;
    my /= static_cast<double>(h);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < h; ++i) {
        sxy += (idx[i] - mx) * (radius[i] - my);
        sxx += (idx[i] - mx) * (idx[i] - mx);
    }
    return sxy / sxx;
}

std::vector<unsigned char> encode_png(std::span<const float> values, std::size_t width, std::size_t height,
                                      PngMode mode) {
    if (width == 0 || height == 0 || values.size() != width * height) {
        throw ShapeError("encode_png: value count does not match width x height");
    }
    float peak = 0.0f;
    for (float v : values) {
        if (!std::isfinite(v)) throw DomainError("encode_png: non-finite value");
        peak = std::max(peak, std::abs(v));
    }
    const std::size_t channels = mode == PngMode::gray ? 1 : 3;
    std::vector<unsigned char> raw;
    raw.reserve(height * (1 + width * channels));
    for (std::size_t y = 0; y < height; ++y) {
        raw.push_back(0);  // filter: none
        for (std::size_t x = 0; x < width; ++x) {
            const double v = values[y * width + x];
            if (mode == PngMode::gray) {
                raw.push_back(to_byte(v));
                continue;
            }
            const double s = peak > 0.0f ? std::abs(v) / peak : 0.0;
            const unsigned char fade = to_byte(1.0 - s);
            if (v < 0.0) {
                raw.insert(raw.end(), {fade, fade, 255});
            } else {
                raw.insert(raw.end(), {255, fade, fade});
            }
        }
    }
    uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> packed(packed_size);
    if (compress2(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
        throw DataError("PNG compression failed");
    }
    packed.resize(packed_size);

    std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    std::vector<unsigned char> header;
    put_be32(header, static_cast<std::uint32_t>(width));
    put_be32(header, static_cast<std::uint32_t>(height));
    header.insert(header.end(), {8, static_cast<unsigned char>(mode == PngMode::gray ? 0 : 2), 0, 0, 0});
    put_chunk(out, "IHDR", header);
    put_chunk(out, "IDAT", packed);
    put_chunk(out, "IEND", {});
    return out;
}

void export_png(const std::filesystem::path& path, std::span<const float> values, std::size_t width,
                std::size_t height, PngMode mode) {
    const auto bytes = encode_png(values, width, height, mode);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write " + path.string());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError("write failed: " + path.string());
}

void write_frames_json(const std::filesystem::path& path, const Frames& frames) {
    nlohmann::json list = nlohmann::json::array();
    for (std::size_t i = 0; i < frames.count(); ++i) {
        list.push_back({{"frame", i},
                        {"target", frames.targets[i]},
                        {"predicted", frames.predicted[i]},
                        {"k", frames.steps[i]}});
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot write " + path.string());
    os << nlohmann::json{{"frames", list}}.dump(2) << '\n';
}

FoldVisualization visualize_fold(const ModelState& model, const Predictor& predictor, const Dataset& ds,
                                 std::span<const std::size_t> test, std::size_t target_column, const VizConfig& cfg) {
    if (cfg.frames == 0) throw ConfigError("viz.frames must be at least 1");
    const auto mean = mean_latent(model, ds, test);
    std::vector<double> targets;
    if (cfg.frames > 1) {
        std::vector<double> t(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) t[i] = ds.label(test[i], target_column);
        const auto ms = mean_sd(t);
        auto [lo, hi] = target_range(cfg, ms.mean, ms.sd);
        if (predictor.kind == PredictorKind::logistic && cfg.range != RangePolicy::explicit_range) {
            // mean±sd of 0/1 labels reaches the logistic asymptotes.
            lo = std::clamp(lo, kLogisticFrameLo, kLogisticFrameHi);
            hi = std::clamp(hi, kLogisticFrameLo, kLogisticFrameHi);
        }
        targets = target_sequence(lo, hi, cfg.frames);
    }
    FoldVisualization out;
    out.frames = sample_frames(model, predictor, mean, targets);
    if (out.frames.count() >= 2) out.heatmap = heatmap(out.frames);
    return out;
}

}  // namespace cfrep
