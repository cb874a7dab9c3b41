#pragma once

#include <functional>
#include <vector>

#include "planter/tensor.hpp"

namespace planter::grad {

/// Handle to a node on a GradTape.
struct ValueId {
    int v = -1;
    bool valid() const { return v >= 0; }
    bool operator==(const ValueId&) const = default;
};

/// Ordered record of one forward pass over rank-4 tensors. Every node owns
/// its value and a same-shape gradient accumulator (zero until backward).
/// Replaying the records in reverse applies the chain rule; leaves that the
/// loss never touched keep their zero gradient.
///
/// A tape is single-threaded by contract; concurrency happens across whole
/// tapes (one per candidate / batch).
class GradTape {
public:
    using BackpropFn = std::function<void(GradTape&, int self)>;

    /// New leaf node (input, parameter, or constant). Values must be finite.
    ValueId leaf(Tensor4 value);

    /// Appends an op node. `inputs` of the op must already be on the tape;
    /// `backprop` reads grad(self) and accumulates into the inputs' grads.
    ValueId record(Tensor4 value, BackpropFn backprop, const char* op);

    const Tensor4& value(ValueId id) const { return node(id).value; }
    const Tensor4& grad(ValueId id) const { return node(id).grad; }
    Tensor4& grad_mut(ValueId id) { return node_mut(id).grad; }
    Tensor4& grad_mut(int idx) { return nodes_[idx].grad; }
    const Tensor4& value_at(int idx) const { return nodes_[idx].value; }

    /// Reverse pass from a scalar loss node. Gradients accumulate; call
    /// zero_grads between repeated passes for fresh values.
    void backward(ValueId loss);

    void zero_grads();
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor4 value;
        Tensor4 grad;
        BackpropFn backprop;  // empty for leaves
        const char* op;
    };

    const Node& node(ValueId id) const;
    Node& node_mut(ValueId id);

    std::vector<Node> nodes_;
};

// Table-1 operations. Shapes: activations (n,c,h,w); conv weights
// (c_out,c_in,3,3); fc weights (out,in,1,1); biases (1,c,1,1). Every op
// checks its preconditions and that the result is finite.

ValueId conv2d(GradTape& t, ValueId input, ValueId weight, ValueId bias);
ValueId relu(GradTape& t, ValueId input);
ValueId maxpool2x2(GradTape& t, ValueId input);
/// (n,c,h,w) -> (n, c*h*w, 1, 1); channel-major, so widened channels land in
/// a contiguous tail of the feature vector.
ValueId flatten(GradTape& t, ValueId input);
ValueId linear(GradTape& t, ValueId input, ValueId weight, ValueId bias);
/// Mean over the batch of -log softmax(logits)[target]; max-subtracted for
/// stability. Targets must lie in [0, classes).
ValueId softmax_cross_entropy(GradTape& t, ValueId logits, std::vector<int> targets);
/// Sum of all elements (test utility).
ValueId sum(GradTape& t, ValueId input);
/// a*x + b*y elementwise on same-shape tensors (used to mix scalar losses).
ValueId scale_add(GradTape& t, double a, ValueId x, double b, ValueId y);

}  // namespace planter::grad
