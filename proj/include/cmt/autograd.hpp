#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cmt/tensor.hpp"

namespace cmt {

struct Node;

/// Write access to one input's gradient from inside a backward rule.
class GradSink {
public:
    explicit GradSink(Node* node) : node_(node) {}
    /// False when the input does not require a gradient; rules may skip work.
    bool wanted() const noexcept;
    /// Gradient buffer of the input, zero-initialized on first access.
    Tensor& grad();

private:
    Node* node_;
};

/// Receives the gradient of the node's output and accumulates into inputs.
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<GradSink> inputs)>;

struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::uint64_t id = 0;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;
};

/// Handle to a graph node. Copies share the node.
class Var {
public:
    Var() = default;
    /// Leaf node. Parameters pass requires_grad = true; data passes false.
    explicit Var(Tensor value, bool requires_grad = false);

    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return node_->has_grad; }
    /// Accumulated gradient, or zeros of value's shape if none reached this node.
    Tensor grad() const;
    void zero_grad();

    const std::shared_ptr<Node>& node() const { return node_; }
    bool defined() const noexcept { return static_cast<bool>(node_); }

private:
    friend Var make_node(Tensor, std::vector<Var>, BackwardFn);
    std::shared_ptr<Node> node_;
};

/// Record an operation. The backward rule is dropped when no input needs a
/// gradient, so constant-only subgraphs carry no provenance.
Var make_node(Tensor value, std::vector<Var> inputs, BackwardFn backward);

/// Reverse-mode sweep from a one-element root. Nodes are visited in
/// descending creation order, which fixes the accumulation order.
void backward(const Var& root);

using ParamBindings = std::map<std::string, Var>;
using GradientMap = std::map<std::string, Tensor>;

/// backward(root), then collect the gradient of every bound parameter.
GradientMap backward(const Var& root, const ParamBindings& params);

}  // namespace cmt
