#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cfrep/errors.hpp"

namespace cfrep {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class BasicGraph;

/// Dense row-major array with an optional gradient buffer.
///
/// Copies share storage (handle semantics); use clone() for a deep copy.
/// A default-constructed tensor is "undefined" and owns no storage.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, bool requires_grad = false);
    BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false);
    /// Keeps `Tensor({1}, {1})` from binding the braced values to requires_grad.
    BasicTensor(Shape shape, std::initializer_list<T> values, bool requires_grad = false)
        : BasicTensor(std::move(shape), std::vector<T>(values), requires_grad) {}

    static BasicTensor full(Shape shape, T value, bool requires_grad = false);
    static BasicTensor scalar(T value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(s_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<T> values();
    std::span<const T> values() const;
    T* data() { return values().data(); }
    const T* data() const { return values().data(); }
    T& operator[](std::size_t i) { return s_->data[i]; }
    const T& operator[](std::size_t i) const { return s_->data[i]; }
    T item() const;

    bool requires_grad() const { return s_ && s_->requires_grad; }
    void set_requires_grad(bool on);

    bool has_grad() const { return s_ && !s_->grad.empty(); }
    std::span<T> grad();
    std::span<const T> grad() const;
    /// Gradient buffer, allocated (zero-filled) on first access. Gradients
    /// are accumulation state, so const handles may write them.
    std::vector<T>& grad_buffer() const;
    void zero_grad();
    void drop_grad();

    /// Deep copy of shape and values; the copy is a fresh leaf without grad.
    BasicTensor clone() const;
    /// Same storage layout reinterpreted under a new shape (deep copy).
    BasicTensor reshaped(Shape shape) const;

    bool same_storage(const BasicTensor& other) const { return s_ == other.s_; }
    const void* producer() const { return s_ ? s_->producer : nullptr; }

    /// Throws NumericFault if any value (or gradient) is NaN/Inf.
    void check_finite(const char* what) const;

private:
    struct Storage {
        Shape shape;
        std::vector<T> data;
        std::vector<T> grad;
        bool requires_grad = false;
        const void* producer = nullptr;
    };
    std::shared_ptr<Storage> s_;

    friend class BasicGraph<T>;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Tape of recorded operations. Nodes are appended in forward order and
/// replayed in exact reverse order by backward().
template <typename T>
class BasicGraph {
public:
    using BackwardFn = std::function<void()>;

    BasicGraph() = default;
    ~BasicGraph() { clear(); }
    BasicGraph(const BasicGraph&) = delete;
    BasicGraph& operator=(const BasicGraph&) = delete;

    /// Registers `output` as produced by this graph and appends its
    /// backward closure. The closure reads output.grad() and accumulates
    /// into the gradients of its inputs.
    void record(BasicTensor<T>& output, BackwardFn fn);

    /// Seeds d(loss)/d(loss) = 1 and runs every node in reverse order.
    /// Intermediate gradients are reset first; leaf gradients accumulate
    /// across calls.
    void backward(const BasicTensor<T>& loss);

    void clear();
    std::size_t size() const { return nodes_.size(); }

    /// When false, ops run forward only and record nothing (inference).
    bool recording() const { return recording_; }
    void set_recording(bool on) { recording_ = on; }

private:
    bool recording_ = true;
    struct Node {
        BasicTensor<T> output;
        BackwardFn fn;
    };
    std::vector<Node> nodes_;
};

using Graph = BasicGraph<float>;
using Graph64 = BasicGraph<double>;

/// Converts between precisions (used by the 64-bit gradient-check path).
template <typename To, typename From>
BasicTensor<To> cast_tensor(const BasicTensor<From>& src, bool requires_grad = false) {
    std::vector<To> out(src.numel());
    auto in = src.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(in[i]);
    return BasicTensor<To>(src.shape(), std::move(out), requires_grad);
}

}  // namespace cfrep
