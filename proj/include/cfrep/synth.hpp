#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cfrep {

enum class Role { target, confounder };

struct AttributeSpec {
    std::string name;
    double mean = 0.0;
    double sd = 1.0;
    double lo = 0.0;
    double hi = 1.0;
    Role role = Role::confounder;

    void validate() const;
};

/// Row-major K x K correlation matrix over the attributes.
struct CorrelationSpec {
    std::size_t size = 0;
    std::vector<double> values;

    static CorrelationSpec identity(std::size_t k);
    double operator()(std::size_t i, std::size_t j) const { return values[i * size + j]; }
    double& operator()(std::size_t i, std::size_t j) { return values[i * size + j]; }
    /// Unit diagonal, symmetric, entries in [-1, 1]. Positive-definiteness
    /// is checked by the Cholesky factorization in sample_correlated.
    void validate() const;
};

/// Draws n rows (row-major n x K) whose columns follow the given means,
/// standard deviations and pairwise correlations, with every value inside
/// its range. Out-of-range draws are redrawn per sample; the underlying
/// Gaussian is calibrated beforehand so that the truncated distribution
/// still has the requested moments. Row i depends only on (seed, i).
///
/// Throws DomainError when the matrix is not positive-definite or when
/// more than half of all draws would be rejected.
std::vector<double> sample_correlated(const std::vector<AttributeSpec>& specs, const CorrelationSpec& corr,
                                      std::size_t n, std::uint64_t seed);

inline constexpr std::size_t kImageSize = 64;

/// Solid disc centred at the image centre; pixels within `radius` of the
/// centre get (128 + round(127 * brightness)) / 255, the rest 0.
std::vector<float> render_circle(double brightness, double radius, std::size_t size = kImageSize);

struct EllipseRender {
    std::vector<float> pixels;
    /// Part of the ellipse lies outside the frame.
    bool clipped = false;
};

/// Solid ellipse with semi-axes a = 2b and pi*a*b = area, the major axis
/// rotated `angle_deg` clockwise from horizontal, centred at
/// (row = position, col = size / 2). Interior intensity round(255 * b) / 255.
EllipseRender render_ellipse(double brightness, double angle_deg, double position, double area,
                             std::size_t size = kImageSize);

enum class DatasetKind { circles, ellipses };

std::string to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& name);

struct Dataset {
    DatasetKind kind = DatasetKind::circles;
    std::size_t count = 0;
    std::size_t image_size = kImageSize;
    /// count x image_size x image_size, row-major, values in [0, 1].
    std::vector<float> images;
    /// count x attributes.size(), columns in attribute order.
    std::vector<float> labels;
    /// 1 = labeled.
    std::vector<std::uint8_t> mask;
    std::vector<AttributeSpec> attributes;
    CorrelationSpec target_correlation;
    /// Empirical correlation of the stored labels.
    CorrelationSpec realized_correlation;
    std::vector<double> realized_mean;
    std::vector<double> realized_sd;
    std::uint64_t seed = 0;
    double labeled_fraction = 1.0;
    std::string generator_version;
    std::size_t clipped_samples = 0;

    std::size_t attribute_count() const { return attributes.size(); }
    std::size_t pixels_per_image() const { return image_size * image_size; }
    std::size_t attribute_index(const std::string& name) const;
    std::size_t target_index() const;
    std::span<const float> image(std::size_t i) const;
    float label(std::size_t i, std::size_t attribute) const { return labels[i * attributes.size() + attribute]; }
    std::vector<double> column(std::size_t attribute) const;
    std::size_t labeled_count() const;
};

/// Attribute and correlation definitions of the two benchmarks.
std::vector<AttributeSpec> circle_attributes();
CorrelationSpec circle_correlation();
std::vector<AttributeSpec> ellipse_attributes();
CorrelationSpec ellipse_correlation();

/// Pure in (kind, n, seed, labeled_fraction). floor(labeled_fraction * n)
/// samples, chosen by a seeded permutation, are marked labeled.
Dataset generate_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed, double labeled_fraction = 1.0);

/// Directory layout: manifest.json, images.f32le, labels.f32le, mask.u8.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

/// Correlation matrix of the columns of a row-major n x k matrix.
CorrelationSpec empirical_correlation(std::span<const double> rows, std::size_t k);

}  // namespace cfrep
