#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "monoalign/tensor.hpp"

namespace monoalign {

// Define-by-run reverse-mode tape. Nodes are appended in evaluation order,
// which is a topological order by construction; backward() walks them once
// in reverse. A fresh tape is built per training step.
class Tape {
  public:
    // Receives the gradient of the loss w.r.t. this node's output and pushes
    // contributions into the gradients of its input nodes.
    using BackwardFn = std::function<void(Tape&, const std::vector<double>&)>;

    int add_node(size_t out_size, BackwardFn bw = nullptr) {
        nodes_.push_back(Node{std::vector<double>(out_size, 0.0), std::move(bw)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    // Registers a gradient-carrying input (parameter) on the tape.
    Tensor leaf(const Tensor& t) {
        Tensor out = t;
        out.node = add_node(t.size());
        return out;
    }

    std::vector<double>& grad(int node) {
        if (node < 0 || node >= static_cast<int>(nodes_.size()))
            throw std::out_of_range("tape: bad node id");
        return nodes_[static_cast<size_t>(node)].grad;
    }

    void accumulate(int node, const std::vector<double>& g) {
        if (node < 0) return;
        auto& dst = grad(node);
        if (dst.size() != g.size()) throw std::invalid_argument("tape: gradient size mismatch");
        for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }

    void backward(const Tensor& loss) {
        if (!loss.is_scalar() || loss.node < 0)
            throw std::invalid_argument("tape: backward requires a scalar loss produced on the tape");
        grad(loss.node)[0] = 1.0;
        visits_ = 0;
        for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
            ++visits_;
            auto& n = nodes_[static_cast<size_t>(id)];
            if (n.bw) n.bw(*this, n.grad);
        }
    }

    size_t node_count() const { return nodes_.size(); }
    int backward_visits() const { return visits_; }

  private:
    struct Node {
        std::vector<double> grad;
        BackwardFn bw;
    };
    std::vector<Node> nodes_;
    int visits_ = 0;
};

}  // namespace monoalign
