#include "stpc/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "stpc/error.hpp"

namespace stpc::ad {

namespace {

thread_local bool t_grad_enabled = true;
thread_local std::string t_fault_op;
thread_local double t_fault_factor = 1.0;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

std::vector<double>& TensorImpl::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
    if (requires_grad) impl_->grad_buffer();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(Shape{}, {value}, requires_grad);
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
    return impl_->data[0];
}

void Tensor::zero_grad() {
    if (impl_->requires_grad)
        impl_->grad.assign(impl_->data.size(), 0.0);
    else
        impl_->grad.clear();
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

void Tape::record(std::string_view op, std::vector<std::shared_ptr<TensorImpl>> inputs,
                  std::shared_ptr<TensorImpl> output, BackwardFn backward) {
    if (!t_grad_enabled) return;
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const auto& in) { return in->requires_grad; });
    if (!any) return;
    output->requires_grad = true;
    nodes_.push_back(Node{std::string(op), std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
        clear();
        return;
    }
    loss.impl()->grad_buffer()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->output->grad.empty()) continue;  // not reachable from loss
        if (!t_fault_op.empty() && it->op == t_fault_op) {
            for (double& g : it->output->grad) g *= t_fault_factor;
        }
        it->backward();
    }
    clear();
}

void Tape::clear() { nodes_.clear(); }

std::vector<std::string> Tape::op_names() const {
    std::vector<std::string> names;
    names.reserve(nodes_.size());
    for (const auto& n : nodes_) names.push_back(n.op);
    return names;
}

Tape& Tape::current() {
    thread_local Tape tape;
    return tape;
}

void backward(const Tensor& loss) { Tape::current().backward(loss); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

void set_fault_injection(std::string op, double factor) {
    t_fault_op = std::move(op);
    t_fault_factor = factor;
}

}  // namespace stpc::ad
