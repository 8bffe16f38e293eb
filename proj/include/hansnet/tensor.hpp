#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hansnet/errors.hpp"

namespace hansnet {

class Rng;

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::int64_t tape_id = -1;  // node index on the recording tape, -1 for leaves/constants
    const void* tape = nullptr;
};

}  // namespace detail

/// Dense row-major N-d array of doubles.
///
/// A Tensor is a handle: copies alias the same storage, which is how parameters
/// keep identity between the model, the tape, and the optimizer. Use clone()
/// for an independent copy. A tensor with requires_grad() set is a leaf the tape
/// will populate a gradient for; outputs of recorded ops are non-leaf nodes.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
    static Tensor uniform(Shape shape, double lo, double hi, Rng& rng);
    static Tensor normal(Shape shape, double mean, double stddev, Rng& rng);
    static Tensor eye(std::size_t n);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    /// Axis length; negative axes count from the end.
    std::size_t dim(int axis) const;
    std::size_t size() const;

    std::span<const double> data() const;
    /// Mutable access to values. Only valid on tensors that are not tape nodes.
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t flat) const { return data()[flat]; }

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on = true);
    bool has_grad() const;
    std::span<const double> grad() const;
    /// Gradient buffer, allocated (zeroed) on first access.
    std::span<double> mutable_grad() const;
    void zero_grad();
    bool on_tape() const;

    Tensor clone() const;
    /// Values only; the result is a constant with respect to any tape.
    Tensor detach() const { return clone(); }

    detail::TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<detail::TensorImpl>& handle() const { return impl_; }

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Define-by-run record of operations for reverse-mode differentiation.
///
/// Nodes are appended in execution order; backward() visits them in strict
/// reverse order, then frees every saved intermediate. A second backward()
/// without a new forward pass is a ContractError.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    Tape() = default;
    ~Tape() { clear(); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Registers `output` as produced by `op` from `inputs`.
    void record(std::string_view op, Tensor& output, BackwardFn fn);
    void backward(const Tensor& loss);
    void clear();
    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    /// Ops recorded so far, in append order.
    std::vector<std::string_view> op_names() const;

private:
    struct Node {
        std::string_view op;
        std::shared_ptr<detail::TensorImpl> output;
        BackwardFn fn;
    };
    std::vector<Node> nodes_;
    bool consumed_ = false;
};

/// Tape recording on the calling thread, or nullptr.
Tape* active_tape();

/// Makes a tape active on this thread for the lifetime of the scope.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

/// Suspends recording (e.g. for MC-dropout inference or trace updates).
class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape* previous_;
};

/// Runs backward on the tape that recorded `loss`.
void backward(const Tensor& loss);

namespace detail {

/// True if any input needs a gradient and a tape is recording.
bool should_record(std::initializer_list<const Tensor*> inputs);
/// Throws NumericalError naming `op` if any value is NaN/Inf.
void check_finite(const Tensor& t, std::string_view op);

}  // namespace detail

}  // namespace hansnet
