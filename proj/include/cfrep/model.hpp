#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cfrep/tensor.hpp"

namespace cfrep {

/// Convolutional autoencoder layout. The encoder applies one 3x3 stride-2
/// convolution (leaky ReLU 0.2) per entry of `channels`, then a dense map to
/// the latent space. The decoder mirrors it with 4x4 stride-2 transposed
/// convolutions and ends in a sigmoid.
struct Architecture {
    std::size_t image_size = 64;
    std::vector<std::size_t> channels{8, 16, 32, 64};
    std::size_t latent_dim = 2;

    std::size_t bottleneck_side() const;
    std::size_t bottleneck_size() const { return channels.back() * bottleneck_side() * bottleneck_side(); }
    void validate() const;
};

template <typename T>
struct Layer {
    BasicTensor<T> weight;
    BasicTensor<T> bias;
};

template <typename T>
struct Parameters {
    std::vector<Layer<T>> encoder_conv;
    Layer<T> encoder_fc;
    Layer<T> decoder_fc;
    std::vector<Layer<T>> decoder_deconv;
    /// Projection-estimator vector p, stored as [n, 1]; no intercept.
    BasicTensor<T> projection;

    /// Handles (shared storage) to encoder + decoder tensors.
    std::vector<BasicTensor<T>> autoencoder() const;
    std::vector<BasicTensor<T>> all() const;
    /// Stable names used by checkpoints.
    std::vector<std::pair<std::string, BasicTensor<T>>> named() const;
};

/// [B,1,S,S] -> [B,n]
template <typename T>
BasicTensor<T> encode(BasicGraph<T>& g, const Architecture& arch, const Parameters<T>& params,
                      const BasicTensor<T>& images);

/// [B,n] -> [B,1,S,S], values in (0, 1).
template <typename T>
BasicTensor<T> decode(BasicGraph<T>& g, const Architecture& arch, const Parameters<T>& params,
                      const BasicTensor<T>& latent);

/// Raw projection D p ([B]); the Pearson-based losses are invariant to the
/// scale of p, so no normalization happens inside the graph.
template <typename T>
BasicTensor<T> project_raw(BasicGraph<T>& g, const Parameters<T>& params, const BasicTensor<T>& latent);

/// zp[i] = dot(latent[i], p) / ||p||. Throws DomainError for ||p|| = 0.
std::vector<double> project(std::span<const float> latent, std::size_t latent_dim, std::span<const float> p);

/// Trainable state of encoder, decoder and projection estimator.
class ModelState {
public:
    /// Throws ConfigError unless latent_dim >= confounders + 1.
    ModelState(Architecture arch, std::size_t confounders, std::uint64_t seed);
    /// Wraps existing tensors (checkpoint loading); shapes are validated.
    ModelState(Architecture arch, Parameters<float> params);

    const Architecture& architecture() const { return arch_; }
    Parameters<float>& params() { return params_; }
    const Parameters<float>& params() const { return params_; }

    /// Allocates and zeroes every gradient buffer.
    void zero_grad();
    Parameters<double> to_double() const;

    /// Unit-length copy of p.
    std::vector<float> unit_projection() const;
    /// Rescales p to unit length in place.
    void normalize_projection();

    /// Graph-free inference helpers; `images` is [B,1,S,S].
    Tensor encode(const Tensor& images) const;
    Tensor decode(const Tensor& latent) const;
    /// zp* for every row of a [B,n] latent matrix (normalized p).
    std::vector<double> project(const Tensor& latent) const;

private:
    Architecture arch_;
    Parameters<float> params_;
};

}  // namespace cfrep
