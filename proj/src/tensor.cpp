#include "cfrep/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cfrep {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, bool requires_grad) : s_(std::make_shared<Storage>()) {
    validate_shape(shape);
    s_->data.assign(shape_numel(shape), T(0));
    s_->shape = std::move(shape);
    s_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values, bool requires_grad)
    : s_(std::make_shared<Storage>()) {
    validate_shape(shape);
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
    }
    s_->shape = std::move(shape);
    s_->data = std::move(values);
    s_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
    BasicTensor t(std::move(shape), requires_grad);
    std::fill(t.s_->data.begin(), t.s_->data.end(), value);
    return t;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
    return BasicTensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
const Shape& BasicTensor<T>::shape() const {
    if (!s_) throw Error("use of an undefined tensor");
    return s_->shape;
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
    }
    return s[axis];
}

template <typename T>
std::size_t BasicTensor<T>::numel() const {
    return s_ ? s_->data.size() : 0;
}

template <typename T>
std::span<T> BasicTensor<T>::values() {
    if (!s_) throw Error("use of an undefined tensor");
    return s_->data;
}

template <typename T>
std::span<const T> BasicTensor<T>::values() const {
    if (!s_) throw Error("use of an undefined tensor");
    return s_->data;
}

template <typename T>
T BasicTensor<T>::item() const {
    if (numel() != 1) throw ShapeError("item() on a tensor of shape " + shape_str(shape()));
    return s_->data[0];
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool on) {
    if (!s_) throw Error("use of an undefined tensor");
    s_->requires_grad = on;
}

template <typename T>
std::span<T> BasicTensor<T>::grad() {
    if (!has_grad()) throw Error("tensor " + shape_str(shape()) + " has no gradient");
    return s_->grad;
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
    if (!has_grad()) throw Error("tensor " + shape_str(shape()) + " has no gradient");
    return s_->grad;
}

template <typename T>
std::vector<T>& BasicTensor<T>::grad_buffer() const {
    if (!s_) throw Error("use of an undefined tensor");
    if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
    return s_->grad;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
    auto& gb = grad_buffer();
    std::fill(gb.begin(), gb.end(), T(0));
}

template <typename T>
void BasicTensor<T>::drop_grad() {
    if (s_) {
        s_->grad.clear();
        s_->grad.shrink_to_fit();
    }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
    return BasicTensor(shape(), s_->data, false);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
        throw ShapeError("cannot reshape " + shape_str(this->shape()) + " to " + shape_str(shape));
    }
    return BasicTensor(std::move(shape), s_->data, false);
}

template <typename T>
void BasicTensor<T>::check_finite(const char* what) const {
    if (!s_) return;
    for (std::size_t i = 0; i < s_->data.size(); ++i) {
        if (!std::isfinite(s_->data[i])) {
            throw NumericFault(std::string(what) + ": non-finite value at flat index " + std::to_string(i));
        }
    }
    for (std::size_t i = 0; i < s_->grad.size(); ++i) {
        if (!std::isfinite(s_->grad[i])) {
            throw NumericFault(std::string(what) + ": non-finite gradient at flat index " + std::to_string(i));
        }
    }
}

template <typename T>
void BasicGraph<T>::record(BasicTensor<T>& output, BackwardFn fn) {
    output.s_->requires_grad = true;
    output.s_->producer = this;
    nodes_.push_back(Node{output, std::move(fn)});
}

template <typename T>
void BasicGraph<T>::backward(const BasicTensor<T>& loss) {
    if (!loss.defined()) throw Error("backward on an undefined tensor");
    if (loss.numel() != 1) {
        throw ShapeError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
    }
    if (loss.producer() != this) {
        throw Error("backward on a loss that was not produced by this graph (detached)");
    }
    for (auto& node : nodes_) node.output.zero_grad();
    BasicTensor<T> seed = loss;
    seed.grad_buffer()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
}

template <typename T>
void BasicGraph<T>::clear() {
    for (auto& node : nodes_) node.output.s_->producer = nullptr;
    nodes_.clear();
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class BasicGraph<float>;
template class BasicGraph<double>;

}  // namespace cfrep
