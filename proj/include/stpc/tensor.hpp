#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stpc::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;

    // Zero-initialized on first use.
    std::vector<double>& grad_buffer();
};

// Shared handle to a dense row-major float64 array. Copies alias the same storage.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t numel() const { return impl_->data.size(); }

    std::span<const double> data() const { return impl_->data; }
    // Direct writes bypass the tape; use for parameter updates and initialization only.
    std::span<double> mutable_data() { return impl_->data; }
    double item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const double> grad() const { return impl_->grad; }
    std::span<double> mutable_grad() { return impl_->grad_buffer(); }
    void zero_grad();

    // Copy of the values with no tape history.
    Tensor detach() const;

    TensorImpl* impl() const noexcept { return impl_.get(); }
    const std::shared_ptr<TensorImpl>& shared() const noexcept { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// Ordered record of primitive applications. Creation order is a topological order,
// so backward() replays nodes last-to-first.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    void record(std::string_view op, std::vector<std::shared_ptr<TensorImpl>> inputs,
                std::shared_ptr<TensorImpl> output, BackwardFn backward);

    // Seeds d(loss)/d(loss) = 1, propagates, then clears the tape.
    void backward(const Tensor& loss);
    void clear();
    std::size_t size() const noexcept { return nodes_.size(); }
    std::vector<std::string> op_names() const;

    // One tape per thread; distinct threads never share recorded state.
    static Tape& current();

private:
    struct Node {
        std::string op;
        std::vector<std::shared_ptr<TensorImpl>> inputs;
        std::shared_ptr<TensorImpl> output;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
};

void backward(const Tensor& loss);

// Disables tape recording on this thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// Test hook: multiplies the incoming gradient of every node of the named op by
// `factor` during backward. Empty op name disables it. Thread-local.
void set_fault_injection(std::string op, double factor);

}  // namespace stpc::ad
