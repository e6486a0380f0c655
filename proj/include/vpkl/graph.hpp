#pragma once

#include <functional>
#include <vector>

#include "vpkl/tensor.hpp"

namespace vpkl {

enum class ReduceKind { Max, Mean, Sum };

// Reverse-mode tape. Nodes are appended in construction order, which is a
// topological order by definition, so backward() is a single reverse sweep.
// A graph is single-threaded; distinct graphs can run concurrently.
class Graph {
public:
    using NodeId = int;

    NodeId leaf(Tensor value, bool requires_grad = false);
    NodeId constant(Tensor value) { return leaf(std::move(value), false); }
    NodeId constant(double v) { return leaf(Tensor::scalar(v), false); }

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId scale(NodeId x, double c);
    NodeId add_const(NodeId x, double c);
    NodeId relu(NodeId x);
    NodeId tanh(NodeId x);
    // Elementwise product. Shapes must be equal, or a may be a length-N
    // weight vector broadcast over the rows of an NxD matrix b.
    NodeId mul(NodeId a, NodeId b);
    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId x);
    // Cross-correlation along the frame axis; odd width, zero same-padding,
    // stride 1, optional dilation. x is [N x C_in], k is [w x C_in x C_out].
    NodeId conv1d_same(NodeId x, NodeId k, int dilation = 1);
    // 2-D analogue; x is [H x W x C_in], k is [w x w x C_in x C_out]. Stride
    // downsamples by ceil(H/stride) with centered zero padding.
    NodeId conv2d_same(NodeId x, NodeId k, int stride = 1);
    // Adds a length-C vector to every row of an NxC matrix (bias).
    NodeId add_rowwise(NodeId x, NodeId b);
    // Removes the given axis. Max routes its gradient to the winning element
    // only (ties break to the lowest index); mean/sum distribute 1/n and 1.
    NodeId reduce(NodeId x, int axis, ReduceKind kind);
    NodeId sum_all(NodeId x);
    // dot(a,b) / (|a||b| + eps); zero-norm inputs yield 0 with zero gradient.
    NodeId cosine_similarity(NodeId a, NodeId b);
    // (x - target)^2 for a scalar x.
    NodeId squared_error(NodeId x, double target);

    // Reverse accumulation from a scalar root. Populates grad for every
    // node on a path from a requires_grad leaf to the root.
    void backward(NodeId loss);

    const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    bool has_grad(NodeId id) const;
    const Tensor& grad(NodeId id) const;

    int node_count() const { return static_cast<int>(nodes_.size()); }

    static constexpr double kCosineEps = 1e-8;

private:
    enum class Op {
        Leaf,
        Add,
        Sub,
        Scale,
        AddConst,
        Relu,
        Tanh,
        Mul,
        MatMul,
        Transpose,
        Conv1d,
        Conv2d,
        AddRowwise,
        Reduce,
        SumAll,
        Cosine,
        SquaredError,
    };

    struct Node {
        Op op = Op::Leaf;
        NodeId in0 = -1;
        NodeId in1 = -1;
        Tensor value;
        Tensor grad;          // allocated during backward
        bool requires_grad = false;
        bool needs_grad = false;  // reachable from a requires_grad leaf
        double c = 0.0;           // scalar op parameter
        int axis = 0;
        ReduceKind rk = ReduceKind::Sum;
        int dilation = 1;
        int stride = 1;
        std::vector<int> argmax;  // winners cached by reduce-max forward
    };

    NodeId push(Node n);
    Node& at(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& at(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
    Tensor& grad_buffer(NodeId id);
    void backward_node(NodeId id);

    std::vector<Node> nodes_;
};

// Max over all coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
// where numeric comes from central differences with step h. The builder
// receives leaf ids for every input (in order) and must return a scalar loss.
double gradient_check(
    const std::function<Graph::NodeId(Graph&, const std::vector<Graph::NodeId>&)>& build,
    const std::vector<Tensor>& inputs, double h = 1e-4);

}  // namespace vpkl
