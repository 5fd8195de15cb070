#include "cmt/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

#include <fmt/format.h>

#include "cmt/errors.hpp"

namespace cmt {

namespace {

std::atomic<std::uint64_t> next_node_id{1};

}  // namespace

bool GradSink::wanted() const noexcept { return node_->requires_grad; }

Tensor& GradSink::grad() {
    if (!node_->has_grad) {
        node_->grad = Tensor::zeros(node_->value.shape());
        node_->has_grad = true;
    }
    return node_->grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    node_->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
}

Tensor Var::grad() const {
    if (node_->has_grad) return node_->grad;
    return Tensor::zeros(node_->value.shape());
}

void Var::zero_grad() {
    node_->grad = Tensor();
    node_->has_grad = false;
}

Var make_node(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    Var out(std::move(value), false);
    const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
    if (needs) {
        out.node_->requires_grad = true;
        out.node_->parents.reserve(inputs.size());
        for (auto& in : inputs) out.node_->parents.push_back(in.node());
        out.node_->backward = std::move(backward);
    }
    return out;
}

void backward(const Var& root) {
    if (!root.defined() || root.value().size() != 1)
        throw ContractError(fmt::format("backward() needs a scalar root, got shape {}",
                                        root.defined() ? shape_str(root.shape()) : std::string("<undefined>")));
    if (!root.requires_grad()) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.node().get()};
    seen.insert(stack.back());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    // Every parent is created before its children, so descending id is a
    // valid reverse topological order.
    std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id > b->id; });

    Node* r = root.node().get();
    GradSink(r).grad()[0] += 1.0;

    std::vector<GradSink> sinks;
    for (Node* n : order) {
        if (!n->backward || !n->has_grad) continue;
        sinks.clear();
        for (const auto& p : n->parents) sinks.emplace_back(p.get());
        n->backward(n->grad, sinks);
    }
}

GradientMap backward(const Var& root, const ParamBindings& params) {
    backward(root);
    GradientMap grads;
    for (const auto& [name, var] : params) grads.emplace(name, var.grad());
    return grads;
}

}  // namespace cmt
