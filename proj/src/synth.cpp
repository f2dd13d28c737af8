#include "cfrep/synth.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <json.hpp>

#include "blob_io.hpp"
#include "cfrep/errors.hpp"
#include "cfrep/rng.hpp"

namespace cfrep {

namespace {

constexpr const char* kFormatTag = "cfrep-dataset";
constexpr int kFormatVersion = 1;
constexpr const char* kGeneratorVersion = "cfrep-synth 1.0";

// Stream ids for derive_seed.
constexpr std::uint64_t kAttributeStream = 1;
constexpr std::uint64_t kMaskStream = 2;
constexpr std::uint64_t kCalibrationSeed = 0xC0FFEE;

constexpr std::size_t kCalibrationDraws = 100000;
constexpr int kCalibrationIterations = 200;
constexpr double kCalibrationTolerance = 2e-4;
constexpr std::size_t kMaxRedraws = 100000;
constexpr std::size_t kMomentMatchMin = 100;
constexpr std::size_t kMomentMatchRounds = 100;

using Mat = Eigen::MatrixXd;

Mat to_matrix(const CorrelationSpec& c) {
    Mat m(c.size, c.size);
    for (std::size_t i = 0; i < c.size; ++i)
        for (std::size_t j = 0; j < c.size; ++j) m(i, j) = c(i, j);
    return m;
}

bool cholesky(const Mat& m, Mat& lower) {
    Eigen::LLT<Mat> llt(m);
    if (llt.info() != Eigen::Success) return false;
    lower = llt.matrixL();
    return true;
}

// Parameters of the untruncated Gaussian that the sampler draws from.
struct Latent {
    std::vector<double> mean, sd;
    Mat chol;
    double acceptance = 1.0;
};

bool in_range(const std::vector<AttributeSpec>& specs, const double* x) {
    for (std::size_t k = 0; k < specs.size(); ++k) {
        if (x[k] < specs[k].lo || x[k] > specs[k].hi) return false;
    }
    return true;
}

void transform(const Latent& lat, const double* z, double* x) {
    const std::size_t k = lat.mean.size();
    for (std::size_t i = 0; i < k; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j <= i; ++j) acc += lat.chol(i, j) * z[j];
        x[i] = lat.mean[i] + lat.sd[i] * acc;
    }
}

struct Moments {
    std::vector<double> mean, sd;
    Mat corr;
    double acceptance = 0.0;
};

Moments truncated_moments(const std::vector<AttributeSpec>& specs, const Latent& lat, const std::vector<double>& z) {
    const std::size_t k = specs.size();
    const std::size_t draws = z.size() / k;
    std::vector<double> x(k);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(k);
    Mat cross = Mat::Zero(k, k);
    std::size_t kept = 0;
    for (std::size_t r = 0; r < draws; ++r) {
        transform(lat, &z[r * k], x.data());
        if (!in_range(specs, x.data())) continue;
        ++kept;
        // Shift by the target mean for a better-conditioned second moment.
        for (std::size_t i = 0; i < k; ++i) {
            const double xi = x[i] - specs[i].mean;
            sum(i) += xi;
            for (std::size_t j = 0; j <= i; ++j) cross(i, j) += xi * (x[j] - specs[j].mean);
        }
    }
    Moments m;
    m.acceptance = static_cast<double>(kept) / static_cast<double>(draws);
    if (kept < 2) return m;
    const double n = static_cast<double>(kept);
    Mat cov(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j <= i; ++j) cov(i, j) = cov(j, i) = cross(i, j) / n - sum(i) * sum(j) / (n * n);
    m.mean.resize(k);
    m.sd.resize(k);
    m.corr = Mat(k, k);
    for (std::size_t i = 0; i < k; ++i) {
        m.mean[i] = specs[i].mean + sum(i) / n;
        m.sd[i] = std::sqrt(cov(i, i));
    }
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) m.corr(i, j) = cov(i, j) / (m.sd[i] * m.sd[j]);
    return m;
}

// Fixed-point search for the Gaussian whose range-truncated version has the
// requested moments. Uses one frozen set of standard-normal draws (common
// random numbers), so the iteration is deterministic and noise-free.
Latent calibrate(const std::vector<AttributeSpec>& specs, const CorrelationSpec& corr) {
    const std::size_t k = specs.size();
    const Mat target = to_matrix(corr);
    Latent lat;
    if (!cholesky(target, lat.chol)) {
        throw DomainError("correlation matrix is not positive-definite (Cholesky failed)");
    }
    Mat latent_corr = target;
    for (const auto& s : specs) {
        lat.mean.push_back(s.mean);
        lat.sd.push_back(s.sd);
    }

    std::vector<double> z(kCalibrationDraws * k);
    Rng rng(kCalibrationSeed);
    for (auto& v : z) v = rng.normal();

    Latent best = lat;
    double best_err = std::numeric_limits<double>::infinity();
    for (int it = 0; it < kCalibrationIterations; ++it) {
        const Moments m = truncated_moments(specs, lat, z);
        lat.acceptance = m.acceptance;
        if (m.acceptance < 0.5) {
            throw DomainError("attribute ranges reject " + std::to_string(100.0 * (1.0 - m.acceptance)) +
                              "% of draws; range and moment specification are inconsistent");
        }
        double err = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            err = std::max(err, std::abs(m.mean[i] - specs[i].mean) / specs[i].sd);
            err = std::max(err, std::abs(m.sd[i] / specs[i].sd - 1.0));
            for (std::size_t j = 0; j < i; ++j) err = std::max(err, std::abs(m.corr(i, j) - target(i, j)));
        }
        if (err < best_err) {
            best_err = err;
            best = lat;
        }
        if (err < kCalibrationTolerance) break;

        for (std::size_t i = 0; i < k; ++i) {
            lat.mean[i] += specs[i].mean - m.mean[i];
            lat.sd[i] *= specs[i].sd / m.sd[i];
        }
        // Correct the latent correlations; halve the step while the result
        // is not a valid correlation matrix.
        Mat step = target - m.corr;
        step.diagonal().setZero();
        Mat candidate, lower;
        for (int halving = 0; halving < 30; ++halving) {
            candidate = latent_corr + step;
            if (candidate.cwiseAbs().maxCoeff() <= 1.0 && cholesky(candidate, lower)) break;
            step *= 0.5;
        }
        latent_corr = candidate;
        lat.chol = lower;
    }
    return best;
}

void draw_in_range(const std::vector<AttributeSpec>& specs, const Latent& lat, std::uint64_t seed, double* row) {
    Rng rng(seed);
    std::vector<double> z(specs.size());
    for (std::size_t attempt = 0; attempt < kMaxRedraws; ++attempt) {
        for (auto& v : z) v = rng.normal();
        transform(lat, z.data(), row);
        if (in_range(specs, row)) return;
    }
    throw DomainError("draws never fell inside the attribute ranges");
}

}  // namespace

void AttributeSpec::validate() const {
    if (!(lo < hi)) throw DomainError("attribute " + name + ": range lower bound must be below upper bound");
    if (!(sd > 0.0)) throw DomainError("attribute " + name + ": standard deviation must be positive");
}

CorrelationSpec CorrelationSpec::identity(std::size_t k) {
    CorrelationSpec c{k, std::vector<double>(k * k, 0.0)};
    for (std::size_t i = 0; i < k; ++i) c(i, i) = 1.0;
    return c;
}

void CorrelationSpec::validate() const {
    if (values.size() != size * size) throw ShapeError("correlation matrix has the wrong number of entries");
    for (std::size_t i = 0; i < size; ++i) {
        if ((*this)(i, i) != 1.0) throw DomainError("correlation matrix needs a unit diagonal");
        for (std::size_t j = 0; j < size; ++j) {
            const double v = (*this)(i, j);
            if (!(v >= -1.0 && v <= 1.0)) throw DomainError("correlation entries must lie in [-1, 1]");
            if (v != (*this)(j, i)) throw DomainError("correlation matrix must be symmetric");
        }
    }
}

std::vector<double> sample_correlated(const std::vector<AttributeSpec>& specs, const CorrelationSpec& corr,
                                      std::size_t n, std::uint64_t seed) {
    if (specs.empty()) throw DomainError("sample_correlated needs at least one attribute");
    if (corr.size != specs.size()) throw ShapeError("correlation matrix size does not match the attribute count");
    for (const auto& s : specs) s.validate();
    corr.validate();
    const Latent lat = calibrate(specs, corr);

    const std::size_t k = specs.size();
    std::vector<double> out(n * k);
    for (std::size_t i = 0; i < n; ++i) draw_in_range(specs, lat, derive_seed(seed, i), &out[i * k]);
    if (n < kMomentMatchMin) return out;

    // Sampling noise alone would leave correlations ~1/sqrt(n) off target.
    // Map the draws affinely onto the exact target moments; rows that the
    // map pushes out of range are redrawn and the map is recomputed.
    const Mat target = to_matrix(corr);
    Mat sigma(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) sigma(i, j) = target(i, j) * specs[i].sd * specs[j].sd;
    Mat chol_target;
    cholesky(sigma, chol_target);
    std::vector<double> matched(n * k);
    for (std::size_t round = 1; round <= kMomentMatchRounds; ++round) {
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(out.data(), n, k);
        const Eigen::RowVectorXd mean = x.colwise().mean();
        const Mat centered = x.rowwise() - mean;
        const Mat cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
        Mat chol_sample;
        if (!cholesky(cov, chol_sample)) throw DomainError("sampled attributes are collinear");
        // y = mu + (x - m) L_s^-T L_t^T has covariance L_t L_t^T exactly.
        const Mat whitened = chol_sample.triangularView<Eigen::Lower>().solve(centered.transpose()).transpose();
        const Mat y = whitened * chol_target.transpose();
        std::size_t bad = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double* row = &matched[i * k];
            for (std::size_t j = 0; j < k; ++j) row[j] = specs[j].mean + y(i, j);
            if (!in_range(specs, row)) {
                ++bad;
                draw_in_range(specs, lat, derive_seed(derive_seed(seed, i), round), &out[i * k]);
            }
        }
        if (bad == 0) return matched;
    }
    throw DomainError("could not match the target moments inside the attribute ranges");
}

std::vector<float> render_circle(double brightness, double radius, std::size_t size) {
    if (!(radius >= 3.0 && radius <= 30.0)) {
        throw DomainError("circle radius " + std::to_string(radius) + " outside [3, 30]");
    }
    if (!(brightness >= 0.0 && brightness <= 1.0)) throw DomainError("circle brightness outside [0, 1]");
    const float value = static_cast<float>((128.0 + std::round(127.0 * brightness)) / 255.0);
    const double c = (static_cast<double>(size) - 1.0) / 2.0;
    std::vector<float> img(size * size, 0.0f);
    for (std::size_t r = 0; r < size; ++r) {
        for (std::size_t col = 0; col < size; ++col) {
            const double dy = static_cast<double>(r) - c, dx = static_cast<double>(col) - c;
            if (std::sqrt(dx * dx + dy * dy) <= radius) img[r * size + col] = value;
        }
    }
    return img;
}

EllipseRender render_ellipse(double brightness, double angle_deg, double position, double area, std::size_t size) {
    if (!(brightness >= 0.0 && brightness <= 1.0)) throw DomainError("ellipse brightness outside [0, 1]");
    if (!(area > 0.0)) throw DomainError("ellipse area must be positive");
    if (!std::isfinite(angle_deg) || !std::isfinite(position)) throw DomainError("ellipse pose must be finite");
    const float value = static_cast<float>(std::round(255.0 * brightness) / 255.0);
    const double b = std::sqrt(area / (2.0 * std::numbers::pi));
    const double a = 2.0 * b;
    const double theta = angle_deg * std::numbers::pi / 180.0;
    // Rows grow downwards, so a clockwise turn of the x axis points to (cos, sin).
    const double ux = std::cos(theta), uy = std::sin(theta);
    const double cy = position, cx = static_cast<double>(size / 2);

    EllipseRender out;
    out.pixels.assign(size * size, 0.0f);
    for (std::size_t r = 0; r < size; ++r) {
        for (std::size_t col = 0; col < size; ++col) {
            const double dx = static_cast<double>(col) - cx, dy = static_cast<double>(r) - cy;
            const double along = dx * ux + dy * uy;
            const double across = -dx * uy + dy * ux;
            if ((along * along) / (a * a) + (across * across) / (b * b) <= 1.0) out.pixels[r * size + col] = value;
        }
    }
    const double half_w = std::sqrt(a * a * ux * ux + b * b * uy * uy);
    const double half_h = std::sqrt(a * a * uy * uy + b * b * ux * ux);
    const double edge = static_cast<double>(size) - 0.5;
    out.clipped = cx - half_w < -0.5 || cx + half_w > edge || cy - half_h < -0.5 || cy + half_h > edge;
    return out;
}

std::string to_string(DatasetKind kind) {
    return kind == DatasetKind::circles ? "circles" : "ellipses";
}

DatasetKind parse_dataset_kind(const std::string& name) {
    if (name == "circles" || name == "circle") return DatasetKind::circles;
    if (name == "ellipses" || name == "ellipse") return DatasetKind::ellipses;
    throw ConfigError("unknown dataset kind '" + name + "' (expected circles or ellipses)");
}

std::size_t Dataset::attribute_index(const std::string& name) const {
    for (std::size_t i = 0; i < attributes.size(); ++i) {
        if (attributes[i].name == name) return i;
    }
    throw ConfigError("dataset has no attribute named '" + name + "'");
}

std::size_t Dataset::target_index() const {
    for (std::size_t i = 0; i < attributes.size(); ++i) {
        if (attributes[i].role == Role::target) return i;
    }
    throw DataError("dataset declares no target attribute");
}

std::span<const float> Dataset::image(std::size_t i) const {
    const std::size_t p = pixels_per_image();
    return std::span<const float>(images).subspan(i * p, p);
}

std::vector<double> Dataset::column(std::size_t attribute) const {
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = label(i, attribute);
    return out;
}

std::size_t Dataset::labeled_count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::vector<AttributeSpec> circle_attributes() {
    return {{"brightness", 0.470, 0.135, 0.0, 1.0, Role::target}, {"radius", 16.0, 6.320, 3.0, 30.0, Role::confounder}};
}

CorrelationSpec circle_correlation() {
    auto c = CorrelationSpec::identity(2);
    c(0, 1) = c(1, 0) = -0.668;
    return c;
}

std::vector<AttributeSpec> ellipse_attributes() {
    return {{"brightness", 0.58, 0.14, 0.16, 1.00, Role::target},
            {"angle", 90.0, 20.33, 10.0, 169.0, Role::confounder},
            {"position", 31.0, 4.5, 16.0, 46.0, Role::confounder},
            {"area", 399.0, 97.9, 41.0, 778.0, Role::confounder}};
}

CorrelationSpec ellipse_correlation() {
    auto c = CorrelationSpec::identity(4);
    c(0, 1) = c(1, 0) = 0.4;   // brighter -> rotated further clockwise
    c(0, 2) = c(2, 0) = 0.4;   // brighter -> lower in the frame
    c(0, 3) = c(3, 0) = -0.4;  // brighter -> smaller
    return c;
}

CorrelationSpec empirical_correlation(std::span<const double> rows, std::size_t k) {
    const std::size_t n = rows.size() / k;
    std::vector<double> mean(k, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) mean[j] += rows[i * k + j];
    for (auto& m : mean) m /= static_cast<double>(n);
    std::vector<double> cov(k * k, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b)
                cov[a * k + b] += (rows[i * k + a] - mean[a]) * (rows[i * k + b] - mean[b]);
    CorrelationSpec c = CorrelationSpec::identity(k);
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b)
            if (a != b) c(a, b) = cov[a * k + b] / std::sqrt(cov[a * k + a] * cov[b * k + b]);
    return c;
}

Dataset generate_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed, double labeled_fraction) {
    if (n == 0) throw DomainError("dataset size must be at least 1");
    if (!(labeled_fraction >= 0.0 && labeled_fraction <= 1.0)) throw DomainError("labeled fraction outside [0, 1]");
    Dataset ds;
    ds.kind = kind;
    ds.count = n;
    ds.seed = seed;
    ds.labeled_fraction = labeled_fraction;
    ds.generator_version = kGeneratorVersion;
    ds.attributes = kind == DatasetKind::circles ? circle_attributes() : ellipse_attributes();
    ds.target_correlation = kind == DatasetKind::circles ? circle_correlation() : ellipse_correlation();
    const std::size_t k = ds.attributes.size();

    const auto attrs = sample_correlated(ds.attributes, ds.target_correlation, n, derive_seed(seed, kAttributeStream));
    ds.labels.resize(n * k);
    for (std::size_t i = 0; i < n * k; ++i) ds.labels[i] = static_cast<float>(attrs[i]);

    const std::size_t p = ds.pixels_per_image();
    ds.images.resize(n * p);
    for (std::size_t i = 0; i < n; ++i) {
        // Render from the stored (float) labels so images and labels agree.
        const float* a = &ds.labels[i * k];
        std::vector<float> img;
        if (kind == DatasetKind::circles) {
            img = render_circle(a[0], a[1], ds.image_size);
        } else {
            auto e = render_ellipse(a[0], a[1], a[2], a[3], ds.image_size);
            ds.clipped_samples += e.clipped ? 1 : 0;
            img = std::move(e.pixels);
        }
        std::copy(img.begin(), img.end(), ds.images.begin() + static_cast<std::ptrdiff_t>(i * p));
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(seed, kMaskStream));
    rng.shuffle(order);
    // The small slack keeps e.g. 0.3 * 10 from flooring to 2.
    const auto labeled = static_cast<std::size_t>(std::floor(labeled_fraction * static_cast<double>(n) + 1e-9));
    ds.mask.assign(n, 0);
    for (std::size_t i = 0; i < labeled; ++i) ds.mask[order[i]] = 1;

    std::vector<double> stored(ds.labels.begin(), ds.labels.end());
    ds.realized_correlation = n >= 2 ? empirical_correlation(stored, k) : CorrelationSpec::identity(k);
    ds.realized_mean.assign(k, 0.0);
    ds.realized_sd.assign(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += stored[i * k + j];
        m /= static_cast<double>(n);
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) v += (stored[i * k + j] - m) * (stored[i * k + j] - m);
        ds.realized_mean[j] = m;
        ds.realized_sd[j] = n >= 2 ? std::sqrt(v / static_cast<double>(n - 1)) : 0.0;
    }
    return ds;
}

namespace {

using nlohmann::json;

json matrix_json(const CorrelationSpec& c) {
    json rows = json::array();
    for (std::size_t i = 0; i < c.size; ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < c.size; ++j) row.push_back(c(i, j));
        rows.push_back(row);
    }
    return rows;
}

CorrelationSpec matrix_from_json(const json& rows, std::size_t k) {
    if (!rows.is_array() || rows.size() != k) throw DataError("manifest correlation matrix has the wrong size");
    CorrelationSpec c{k, std::vector<double>(k * k)};
    for (std::size_t i = 0; i < k; ++i) {
        if (!rows[i].is_array() || rows[i].size() != k) throw DataError("manifest correlation row has the wrong size");
        for (std::size_t j = 0; j < k; ++j) c(i, j) = rows[i][j].get<double>();
    }
    return c;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create dataset directory " + dir.string() + ": " + ec.message());

    json attrs = json::array();
    for (const auto& a : ds.attributes) {
        attrs.push_back({{"name", a.name},
                         {"role", a.role == Role::target ? "target" : "confounder"},
                         {"mean", a.mean},
                         {"sd", a.sd},
                         {"lo", a.lo},
                         {"hi", a.hi}});
    }
    json m = {{"format", kFormatTag},
              {"version", kFormatVersion},
              {"generator", ds.generator_version},
              {"kind", to_string(ds.kind)},
              {"count", ds.count},
              {"image_size", ds.image_size},
              {"attributes", attrs},
              {"target_correlation", matrix_json(ds.target_correlation)},
              {"realized_correlation", matrix_json(ds.realized_correlation)},
              {"realized_mean", ds.realized_mean},
              {"realized_sd", ds.realized_sd},
              {"seed", ds.seed},
              {"labeled_fraction", ds.labeled_fraction},
              {"labeled_count", ds.labeled_count()},
              {"clipped_samples", ds.clipped_samples},
              {"clipping_warning", ds.clipped_samples > 0}};
    {
        auto os = detail::open_out(dir / "manifest.json");
        os << m.dump(2) << '\n';
    }
    detail::write_f32_file(dir / "images.f32le", ds.images);
    detail::write_f32_file(dir / "labels.f32le", ds.labels);
    auto os = detail::open_out(dir / "mask.u8");
    os.write(reinterpret_cast<const char*>(ds.mask.data()), static_cast<std::streamsize>(ds.mask.size()));
    if (!os) throw DataError("write failed: mask.u8");
}

Dataset read_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " does not exist");
    json m;
    try {
        auto is = detail::open_in(dir / "manifest.json");
        m = json::parse(is);
    } catch (const json::exception& e) {
        throw DataError("manifest.json is not valid JSON: " + std::string(e.what()));
    }
    try {
        if (m.value("format", std::string()) != kFormatTag) throw DataError("manifest.json is not a cfrep dataset");
        const int version = m.at("version").get<int>();
        if (version != kFormatVersion) {
            throw DataError("unsupported dataset version " + std::to_string(version) + " (this build reads version " +
                            std::to_string(kFormatVersion) + ")");
        }
        Dataset ds;
        ds.generator_version = m.at("generator").get<std::string>();
        ds.kind = parse_dataset_kind(m.at("kind").get<std::string>());
        ds.count = m.at("count").get<std::size_t>();
        ds.image_size = m.at("image_size").get<std::size_t>();
        for (const auto& a : m.at("attributes")) {
            const auto role = a.at("role").get<std::string>();
            if (role != "target" && role != "confounder") throw DataError("unknown attribute role '" + role + "'");
            ds.attributes.push_back({a.at("name").get<std::string>(), a.at("mean").get<double>(),
                                     a.at("sd").get<double>(), a.at("lo").get<double>(), a.at("hi").get<double>(),
                                     role == "target" ? Role::target : Role::confounder});
        }
        const std::size_t k = ds.attributes.size();
        ds.target_correlation = matrix_from_json(m.at("target_correlation"), k);
        ds.realized_correlation = matrix_from_json(m.at("realized_correlation"), k);
        ds.realized_mean = m.at("realized_mean").get<std::vector<double>>();
        ds.realized_sd = m.at("realized_sd").get<std::vector<double>>();
        ds.seed = m.at("seed").get<std::uint64_t>();
        ds.labeled_fraction = m.at("labeled_fraction").get<double>();
        ds.clipped_samples = m.at("clipped_samples").get<std::size_t>();

        ds.images = detail::read_f32_file(dir / "images.f32le", ds.count * ds.pixels_per_image());
        ds.labels = detail::read_f32_file(dir / "labels.f32le", ds.count * k);
        std::error_code ec;
        const auto mask_bytes = std::filesystem::file_size(dir / "mask.u8", ec);
        if (ec || mask_bytes != ds.count) throw DataError("mask.u8: length disagrees with manifest");
        ds.mask.resize(ds.count);
        auto is = detail::open_in(dir / "mask.u8");
        is.read(reinterpret_cast<char*>(ds.mask.data()), static_cast<std::streamsize>(ds.count));
        for (auto v : ds.mask) {
            if (v > 1) throw DataError("mask.u8 holds a value other than 0/1");
        }
        if (ds.labeled_count() != m.at("labeled_count").get<std::size_t>()) {
            throw DataError("mask.u8 disagrees with the manifest labeled_count");
        }
        return ds;
    } catch (const json::exception& e) {
        throw DataError("manifest.json is missing or has a malformed field: " + std::string(e.what()));
    }
}

}  // namespace cfrep
