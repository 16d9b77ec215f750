#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "sodsynth/tensor.hpp"

namespace sodsynth::ad {

namespace detail {

struct Node {
    Tensor value;
    Tensor grad;           // allocated during backward, same shape as value
    bool requires_grad = false;
    bool grad_ready = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad and accumulates contributions into parents' grads.
    std::function<void(Node&)> backprop;
};

} // namespace detail

/// Handle to a node of a reverse-mode computation graph. Copying a
/// Variable aliases the node. Graphs are built by the free functions
/// below and differentiated with backward().
class Variable {
public:
    Variable() : node_(std::make_shared<detail::Node>()) {}

    explicit Variable(Tensor value, bool requires_grad = false)
        : node_(std::make_shared<detail::Node>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    static Variable scalar(double v, bool requires_grad = false) {
        return Variable(Tensor::scalar(v), requires_grad);
    }

    const Tensor& value() const { return node_->value; }
    const std::vector<int>& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_->requires_grad; }

    /// Gradient populated by the last backward() pass that reached this node.
    const Tensor& grad() const;
    bool grad_ready() const { return node_->grad_ready; }

    /// Same value, cut off from the graph (no gradient flows past it).
    Variable detach() const { return Variable(node_->value, false); }

    /// Replace the stored value (used by the optimizer on leaf parameters).
    /// Only valid on leaves; the old tensor is discarded, not mutated.
    void assign(Tensor value);

    std::shared_ptr<detail::Node> node() const { return node_; }

private:
    explicit Variable(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    friend Variable make_op(Tensor, std::vector<Variable>, std::function<void(detail::Node&)>);

    std::shared_ptr<detail::Node> node_;
};

/// Internal: wrap an op result. requires_grad is inherited from parents.
Variable make_op(Tensor value, std::vector<Variable> parents,
                 std::function<void(detail::Node&)> backprop);

// ---- elementwise ops (equal-shape or scalar-with-tensor broadcast) ----
Variable add(const Variable& a, const Variable& b);
Variable add(const Variable& a, double b);
Variable sub(const Variable& a, const Variable& b);
Variable sub(const Variable& a, double b);
Variable sub(double a, const Variable& b);
Variable mul(const Variable& a, const Variable& b);
Variable mul(const Variable& a, double b);
Variable div(const Variable& a, const Variable& b);
Variable div(const Variable& a, double b);
Variable relu(const Variable& x);
Variable sigmoid(const Variable& x);
Variable abs(const Variable& x);
Variable log(const Variable& x);   // input clamped to >= kLogEps
Variable square(const Variable& x);

inline Variable operator+(const Variable& a, const Variable& b) { return add(a, b); }
inline Variable operator-(const Variable& a, const Variable& b) { return sub(a, b); }
inline Variable operator*(const Variable& a, const Variable& b) { return mul(a, b); }
inline Variable operator+(const Variable& a, double b) { return add(a, b); }
inline Variable operator-(const Variable& a, double b) { return sub(a, b); }
inline Variable operator*(const Variable& a, double b) { return mul(a, b); }
inline Variable operator*(double a, const Variable& b) { return mul(b, a); }
inline Variable operator-(double a, const Variable& b) { return sub(a, b); }

constexpr double kLogEps = 1e-8;
constexpr double kDivEps = 1e-8;

// ---- reductions ----
Variable sum(const Variable& x);
Variable sum(const Variable& x, const std::vector<int>& axes);
Variable mean(const Variable& x);
Variable mean(const Variable& x, const std::vector<int>& axes);

// ---- shape ----
Variable reshape(const Variable& x, std::vector<int> shape);

/// Cross-correlation of input [C_in,H,W] with kernel [C_out,C_in,kh,kw].
/// Zero padding, H' = floor((H + 2*padding - kh)/stride) + 1.
Variable conv2d(const Variable& input, const Variable& kernel, int stride = 1, int padding = 0);

/// Bilinear sampling (align_corners = false) of [C,H,W] to [C,out_h,out_w].
Variable bilinear_resize(const Variable& x, int out_h, int out_w);

/// Reverse-mode accumulation from a scalar root. Populates grad on every
/// reachable requires_grad node; repeated Variable uses sum contributions.
void backward(const Variable& root);

} // namespace sodsynth::ad
