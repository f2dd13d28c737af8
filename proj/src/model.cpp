#include "cfrep/model.hpp"

#include <cmath>

#include "cfrep/ops.hpp"
#include "cfrep/rng.hpp"

namespace cfrep {

namespace {

constexpr std::size_t kEncoderKernel = 3;
constexpr std::size_t kDecoderKernel = 4;

template <typename T>
BasicTensor<T> he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    // Gain for leaky ReLU with slope 0.2.
    const double bound = std::sqrt(6.0 / ((1.0 + 0.04) * static_cast<double>(fan_in)));
    BasicTensor<T> t(std::move(shape), true);
    for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template <typename T>
void collect(const Parameters<T>& p, std::vector<BasicTensor<T>>& out) {
    for (const auto& l : p.encoder_conv) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
    out.push_back(p.encoder_fc.weight);
    out.push_back(p.encoder_fc.bias);
    out.push_back(p.decoder_fc.weight);
    out.push_back(p.decoder_fc.bias);
    for (const auto& l : p.decoder_deconv) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
}

template <typename To, typename From>
Layer<To> cast_layer(const Layer<From>& l) {
    return Layer<To>{cast_tensor<To>(l.weight, true), cast_tensor<To>(l.bias, true)};
}

void expect_shape(const Tensor& t, const Shape& shape, const std::string& name) {
    if (!t.defined() || t.shape() != shape) {
        throw ShapeError("parameter " + name + " must have shape " + shape_str(shape) + ", got " +
                         (t.defined() ? shape_str(t.shape()) : std::string("<undefined>")));
    }
}

}  // namespace

std::size_t Architecture::bottleneck_side() const {
    return image_size >> channels.size();
}

void Architecture::validate() const {
    if (channels.empty()) throw ConfigError("architecture needs at least one convolution block");
    if (latent_dim == 0) throw ConfigError("latent dimension must be positive");
    if (image_size == 0 || (image_size % (std::size_t{1} << channels.size())) != 0) {
        throw ConfigError("image size " + std::to_string(image_size) + " is not divisible by 2^" +
                          std::to_string(channels.size()));
    }
    for (auto c : channels) {
        if (c == 0) throw ConfigError("channel counts must be positive");
    }
}

template <typename T>
std::vector<BasicTensor<T>> Parameters<T>::autoencoder() const {
    std::vector<BasicTensor<T>> out;
    collect(*this, out);
    return out;
}

template <typename T>
std::vector<BasicTensor<T>> Parameters<T>::all() const {
    auto out = autoencoder();
    out.push_back(projection);
    return out;
}

template <typename T>
std::vector<std::pair<std::string, BasicTensor<T>>> Parameters<T>::named() const {
    std::vector<std::pair<std::string, BasicTensor<T>>> out;
    for (std::size_t i = 0; i < encoder_conv.size(); ++i) {
        out.emplace_back("enc.conv" + std::to_string(i) + ".weight", encoder_conv[i].weight);
        out.emplace_back("enc.conv" + std::to_string(i) + ".bias", encoder_conv[i].bias);
    }
    out.emplace_back("enc.fc.weight", encoder_fc.weight);
    out.emplace_back("enc.fc.bias", encoder_fc.bias);
    out.emplace_back("dec.fc.weight", decoder_fc.weight);
    out.emplace_back("dec.fc.bias", decoder_fc.bias);
    for (std::size_t i = 0; i < decoder_deconv.size(); ++i) {
        out.emplace_back("dec.deconv" + std::to_string(i) + ".weight", decoder_deconv[i].weight);
        out.emplace_back("dec.deconv" + std::to_string(i) + ".bias", decoder_deconv[i].bias);
    }
    out.emplace_back("pe.p", projection);
    return out;
}

template struct Parameters<float>;
template struct Parameters<double>;

template <typename T>
BasicTensor<T> encode(BasicGraph<T>& g, const Architecture& arch, const Parameters<T>& params,
                      const BasicTensor<T>& images) {
    if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != arch.image_size ||
        images.dim(3) != arch.image_size) {
        throw ShapeError("encode expects [B,1," + std::to_string(arch.image_size) + "," +
                         std::to_string(arch.image_size) + "] images, got " + shape_str(images.shape()));
    }
    BasicTensor<T> h = images;
    for (const auto& layer : params.encoder_conv) {
        h = ops::leaky_relu(g, ops::conv2d(g, h, layer.weight, layer.bias, 2, 1), T(0.2));
    }
    const std::size_t batch = images.dim(0);
    h = ops::reshape(g, h, Shape{batch, arch.bottleneck_size()});
    return ops::dense(g, h, params.encoder_fc.weight, params.encoder_fc.bias);
}

template <typename T>
BasicTensor<T> decode(BasicGraph<T>& g, const Architecture& arch, const Parameters<T>& params,
                      const BasicTensor<T>& latent) {
    if (latent.rank() != 2 || latent.dim(1) != arch.latent_dim) {
        throw ShapeError("decode expects [B," + std::to_string(arch.latent_dim) + "] latents, got " +
                         shape_str(latent.shape()));
    }
    const std::size_t batch = latent.dim(0);
    const std::size_t side = arch.bottleneck_side();
    auto h = ops::leaky_relu(g, ops::dense(g, latent, params.decoder_fc.weight, params.decoder_fc.bias), T(0.2));
    h = ops::reshape(g, h, Shape{batch, arch.channels.back(), side, side});
    for (std::size_t i = 0; i < params.decoder_deconv.size(); ++i) {
        const auto& layer = params.decoder_deconv[i];
        h = ops::conv_transpose2d(g, h, layer.weight, layer.bias, 2, 1);
        h = (i + 1 < params.decoder_deconv.size()) ? ops::leaky_relu(g, h, T(0.2)) : ops::sigmoid(g, h);
    }
    return h;
}

template <typename T>
BasicTensor<T> project_raw(BasicGraph<T>& g, const Parameters<T>& params, const BasicTensor<T>& latent) {
    auto zp = ops::dense(g, latent, params.projection, BasicTensor<T>());
    return ops::reshape(g, zp, Shape{latent.dim(0)});
}

template BasicTensor<float> encode(Graph&, const Architecture&, const Parameters<float>&, const Tensor&);
template BasicTensor<double> encode(Graph64&, const Architecture&, const Parameters<double>&, const Tensor64&);
template BasicTensor<float> decode(Graph&, const Architecture&, const Parameters<float>&, const Tensor&);
template BasicTensor<double> decode(Graph64&, const Architecture&, const Parameters<double>&, const Tensor64&);
template BasicTensor<float> project_raw(Graph&, const Parameters<float>&, const Tensor&);
template BasicTensor<double> project_raw(Graph64&, const Parameters<double>&, const Tensor64&);

std::vector<double> project(std::span<const float> latent, std::size_t latent_dim, std::span<const float> p) {
    if (p.size() != latent_dim || latent.size() % latent_dim != 0) {
        throw ShapeError("project: latent rows of width " + std::to_string(latent_dim) + " vs p of length " +
                         std::to_string(p.size()));
    }
    double norm = 0.0;
    for (float v : p) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) throw DomainError("project: projection vector has zero norm");
    const std::size_t rows = latent.size() / latent_dim;
    std::vector<double> zp(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < latent_dim; ++j) acc += static_cast<double>(latent[i * latent_dim + j]) * p[j];
        zp[i] = acc / norm;
    }
    return zp;
}

ModelState::ModelState(Architecture arch, std::size_t confounders, std::uint64_t seed) : arch_(std::move(arch)) {
    arch_.validate();
    if (arch_.latent_dim < confounders + 1) {
        throw ConfigError("latent dimension " + std::to_string(arch_.latent_dim) + " cannot host a direction " +
                          "orthogonal to " + std::to_string(confounders) + " confounders (need n >= m + 1)");
    }
    Rng rng(derive_seed(seed, 0x1417));
    std::size_t in_ch = 1;
    for (auto out_ch : arch_.channels) {
        const std::size_t fan_in = in_ch * kEncoderKernel * kEncoderKernel;
        params_.encoder_conv.push_back(
            {he_uniform<float>(Shape{out_ch, in_ch, kEncoderKernel, kEncoderKernel}, fan_in, rng),
             Tensor(Shape{out_ch}, true)});
        in_ch = out_ch;
    }
    const std::size_t flat = arch_.bottleneck_size();
    const std::size_t n = arch_.latent_dim;
    params_.encoder_fc = {he_uniform<float>(Shape{flat, n}, flat, rng), Tensor(Shape{n}, true)};
    params_.decoder_fc = {he_uniform<float>(Shape{n, flat}, n, rng), Tensor(Shape{flat}, true)};
    // Transposed convs: kernel [C_in, C_out, 4, 4]; each output pixel sees C_in * 4 taps.
    for (std::size_t i = arch_.channels.size(); i-- > 0;) {
        const std::size_t c_in = arch_.channels[i];
        const std::size_t c_out = i == 0 ? 1 : arch_.channels[i - 1];
        params_.decoder_deconv.push_back(
            {he_uniform<float>(Shape{c_in, c_out, kDecoderKernel, kDecoderKernel}, c_in * 4, rng),
             Tensor(Shape{c_out}, true)});
    }
    params_.projection = Tensor(Shape{n, 1}, true);
    for (auto& v : params_.projection.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
}

ModelState::ModelState(Architecture arch, Parameters<float> params)
    : arch_(std::move(arch)), params_(std::move(params)) {
    arch_.validate();
    if (params_.encoder_conv.size() != arch_.channels.size() ||
        params_.decoder_deconv.size() != arch_.channels.size()) {
        throw ShapeError("parameter set does not match the architecture depth");
    }
    std::size_t in_ch = 1;
    for (std::size_t i = 0; i < arch_.channels.size(); ++i) {
        const auto c = arch_.channels[i];
        expect_shape(params_.encoder_conv[i].weight, {c, in_ch, kEncoderKernel, kEncoderKernel},
                     "enc.conv" + std::to_string(i) + ".weight");
        expect_shape(params_.encoder_conv[i].bias, {c}, "enc.conv" + std::to_string(i) + ".bias");
        in_ch = c;
    }
    const std::size_t flat = arch_.bottleneck_size(), n = arch_.latent_dim;
    expect_shape(params_.encoder_fc.weight, {flat, n}, "enc.fc.weight");
    expect_shape(params_.encoder_fc.bias, {n}, "enc.fc.bias");
    expect_shape(params_.decoder_fc.weight, {n, flat}, "dec.fc.weight");
    expect_shape(params_.decoder_fc.bias, {flat}, "dec.fc.bias");
    for (std::size_t k = 0; k < arch_.channels.size(); ++k) {
        const std::size_t i = arch_.channels.size() - 1 - k;
        const std::size_t c_in = arch_.channels[i], c_out = i == 0 ? 1 : arch_.channels[i - 1];
        expect_shape(params_.decoder_deconv[k].weight, {c_in, c_out, kDecoderKernel, kDecoderKernel},
                     "dec.deconv" + std::to_string(k) + ".weight");
        expect_shape(params_.decoder_deconv[k].bias, {c_out}, "dec.deconv" + std::to_string(k) + ".bias");
    }
    expect_shape(params_.projection, {n, 1}, "pe.p");
    for (auto& t : params_.all()) t.set_requires_grad(true);
}

void ModelState::zero_grad() {
    for (auto& t : params_.all()) t.zero_grad();
}

Parameters<double> ModelState::to_double() const {
    Parameters<double> out;
    for (const auto& l : params_.encoder_conv) out.encoder_conv.push_back(cast_layer<double>(l));
    out.encoder_fc = cast_layer<double>(params_.encoder_fc);
    out.decoder_fc = cast_layer<double>(params_.decoder_fc);
    for (const auto& l : params_.decoder_deconv) out.decoder_deconv.push_back(cast_layer<double>(l));
    out.projection = cast_tensor<double>(params_.projection, true);
    return out;
}

std::vector<float> ModelState::unit_projection() const {
    auto p = params_.projection.values();
    double norm = 0.0;
    for (float v : p) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) throw DomainError("projection vector collapsed to zero norm");
    std::vector<float> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = static_cast<float>(p[i] / norm);
    return out;
}

void ModelState::normalize_projection() {
    auto unit = unit_projection();
    auto p = params_.projection.values();
    std::copy(unit.begin(), unit.end(), p.begin());
}

Tensor ModelState::encode(const Tensor& images) const {
    Graph g;
    g.set_recording(false);
    return cfrep::encode(g, arch_, params_, images);
}

Tensor ModelState::decode(const Tensor& latent) const {
    Graph g;
    g.set_recording(false);
    return cfrep::decode(g, arch_, params_, latent);
}

std::vector<double> ModelState::project(const Tensor& latent) const {
    return cfrep::project(latent.values(), arch_.latent_dim, params_.projection.values());
}

}  // namespace cfrep
