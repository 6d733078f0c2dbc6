#pragma once

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "findnet/tensor.hpp"

namespace findnet {

// A named learnable tensor. The optimizer reads value/grad; forward passes
// bind parameters onto a tape via Tape::param.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor::zeros(value.shape());
    }

    void zero_grad() { std::fill(grad.vec().begin(), grad.vec().end(), 0.0); }
};

using NodeId = int32_t;

// Reverse-mode differentiation tape. One tape per forward pass; nodes are
// appended in evaluation order, so creation order is a topological order and
// backward() is a single reverse sweep. A tape is confined to one thread.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, NodeId)>;

    struct Node {
        const char* op;
        std::vector<NodeId> inputs;
        Tensor value;
        Tensor grad;  // zero until backward()
        BackwardFn backward;
        Parameter* bound = nullptr;
    };

    NodeId constant(Tensor v) { return push("const", {}, std::move(v), nullptr); }

    // Leaf bound to an external parameter; harvest() accumulates its grad.
    // Binding the same parameter twice returns the existing node.
    NodeId param(Parameter& p) {
        auto it = bindings_.find(&p);
        if (it != bindings_.end()) return it->second;
        NodeId id = push("param", {}, p.value, nullptr);
        nodes_[static_cast<size_t>(id)].bound = &p;
        bindings_.emplace(&p, id);
        return id;
    }

    NodeId push(const char* op, std::vector<NodeId> inputs, Tensor value, BackwardFn fn) {
        Node n;
        n.op = op;
        n.inputs = std::move(inputs);
        n.grad = Tensor::zeros(value.shape());
        n.value = std::move(value);
        n.backward = std::move(fn);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    Tensor& grad(NodeId id) { return nodes_[static_cast<size_t>(id)].grad; }
    const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
    size_t size() const { return nodes_.size(); }

    // Accumulates d(loss)/d(value) into every node reachable from loss_node,
    // in reverse topological order. Unreachable nodes keep zero grads.
    void backward(NodeId loss_node) {
        if (value(loss_node).numel() != 1)
            throw ContractError("backward: loss node must be scalar, got shape " +
                                shape_str(value(loss_node).shape()));
        std::vector<char> reach(nodes_.size(), 0);
        std::vector<NodeId> stack{loss_node};
        reach[static_cast<size_t>(loss_node)] = 1;
        while (!stack.empty()) {
            NodeId id = stack.back();
            stack.pop_back();
            for (NodeId in : nodes_[static_cast<size_t>(id)].inputs)
                if (!reach[static_cast<size_t>(in)]) {
                    reach[static_cast<size_t>(in)] = 1;
                    stack.push_back(in);
                }
        }
        grad(loss_node)[0] = 1.0;
        for (NodeId id = loss_node; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (!reach[static_cast<size_t>(id)] || !n.backward) continue;
            if (!break_op().empty() && break_op() == n.op) {
                // gradcheck debug hook: corrupt this operator's adjoint
                for (int64_t i = 0; i < n.grad.numel(); ++i) n.grad[i] *= 1.25;
            }
            n.backward(*this, id);
        }
    }

    // Adds leaf grads into their bound parameters.
    void harvest() {
        for (auto& [p, id] : bindings_) {
            const Tensor& g = grad(id);
            for (int64_t i = 0; i < g.numel(); ++i) p->grad[i] += g[i];
        }
    }

    // Name of an operator whose adjoint gets deliberately corrupted
    // (verification harness negative tests). Empty = off.
    static std::string& break_op() {
        static std::string s;
        return s;
    }

private:
    std::deque<Node> nodes_;  // deque: node references stay valid as the tape grows
    std::unordered_map<Parameter*, NodeId> bindings_;
};

}  // namespace findnet
