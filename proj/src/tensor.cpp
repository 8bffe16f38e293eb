#include "hansnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hansnet/rng.hpp"

namespace hansnet {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<detail::TensorImpl>()) {
    for (auto d : shape)
        if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_str(shape));
    impl_->data.assign(numel(shape), fill);
    impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<detail::TensorImpl>()) {
    for (auto d : shape)
        if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_str(shape));
    if (numel(shape) != values.size())
        throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                             shape_str(shape));
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.impl_->data) v = rng.uniform(lo, hi);
    return t;
}

Tensor Tensor::normal(Shape shape, double mean, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.impl_->data) v = rng.normal(mean, stddev);
    return t;
}

Tensor Tensor::eye(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.impl_->data[i * n + i] = 1.0;
    return t;
}

const Shape& Tensor::shape() const {
    if (!impl_) throw ContractError("use of an undefined tensor");
    return impl_->shape;
}

std::size_t Tensor::dim(int axis) const {
    const auto& s = shape();
    const int r = static_cast<int>(s.size());
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r)
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
    return s[static_cast<std::size_t>(a)];
}

std::size_t Tensor::size() const { return impl_ ? impl_->data.size() : 0; }

std::span<const double> Tensor::data() const {
    if (!impl_) throw ContractError("use of an undefined tensor");
    return impl_->data;
}

std::span<double> Tensor::mutable_data() {
    if (!impl_) throw ContractError("use of an undefined tensor");
    if (impl_->tape_id >= 0) throw ContractError("cannot mutate a tensor recorded on a tape");
    return impl_->data;
}

double Tensor::item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    if (!impl_) throw ContractError("use of an undefined tensor");
    impl_->requires_grad = on;
    return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!impl_) throw ContractError("use of an undefined tensor");
    return impl_->grad;
}

std::span<double> Tensor::mutable_grad() const {
    if (!impl_) throw ContractError("use of an undefined tensor");
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_) impl_->grad.clear();
}

bool Tensor::on_tape() const { return impl_ && impl_->tape_id >= 0; }

Tensor Tensor::clone() const {
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->shape = shape();
    t.impl_->data = impl_->data;
    return t;
}

// ---------------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void Tape::record(std::string_view op, Tensor& output, BackwardFn fn) {
    if (consumed_) consumed_ = false;  // a new forward pass begins
    auto* impl = output.impl();
    impl->requires_grad = true;
    impl->tape_id = static_cast<std::int64_t>(nodes_.size());
    impl->tape = this;
    nodes_.push_back(Node{op, output.handle(), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
    if (consumed_) throw ContractError("backward called twice without a new forward pass");
    if (!loss.defined() || loss.size() != 1)
        throw ContractError("backward requires a scalar loss, got " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    if (loss.impl()->tape != this || !loss.on_tape())
        throw ContractError("loss was not recorded on this tape");
    Tensor l = loss;
    l.mutable_grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->output->grad.empty()) continue;  // not on a path to the loss
        it->fn();
    }
    clear();
    consumed_ = true;
}

void Tape::clear() {
    for (auto& n : nodes_) {
        n.output->tape_id = -1;
        n.output->tape = nullptr;
    }
    nodes_.clear();
    consumed_ = false;
}

std::vector<std::string_view> Tape::op_names() const {
    std::vector<std::string_view> names;
    names.reserve(nodes_.size());
    for (const auto& n : nodes_) names.push_back(n.op);
    return names;
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.impl()->tape == nullptr) {
        if (auto* t = active_tape(); t && t->consumed())
            throw ContractError("backward called twice without a new forward pass");
        throw ContractError("loss is not on an active tape");
    }
    auto* tape = static_cast<Tape*>(const_cast<void*>(loss.impl()->tape));
    tape->backward(loss);
}

namespace detail {

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (g_active_tape == nullptr) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor* t) { return t && t->defined() && t->requires_grad(); });
}

void check_finite(const Tensor& t, std::string_view op) {
    for (double v : t.data())
        if (!std::isfinite(v)) throw NumericalError(std::string(op) + " produced a non-finite value");
}

}  // namespace detail

}  // namespace hansnet
