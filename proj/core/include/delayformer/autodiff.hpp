#pragma once

#include <functional>
#include <vector>

#include "delayformer/tensor.hpp"

namespace delayformer {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
    const Tensor& value() const;
};

/// Reverse-mode autodiff tape. Nodes are appended in forward order, so node
/// ids form a topological order of the computation DAG; backward() sweeps
/// them in reverse, accumulating gradients additively across fan-out.
/// A tape is confined to one logical thread and rebuilt per forward pass.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// New leaf holding `value`. Trainable leaves receive gradients and keep
    /// their buffers after backward(); plain constants do not.
    Var leaf(Tensor value, bool trainable = false);

    const Tensor& value(int id) const;
    /// Gradient accumulated for a node. For leaves never touched by
    /// backward() this is a zero tensor of the leaf's shape.
    const Tensor& grad(int id);
    bool needs_grad(int id) const;
    std::size_t node_count() const { return nodes_.size(); }

    /// Reverse accumulation from a scalar loss node. Intermediate node
    /// buffers are released as the sweep passes them; leaf values and
    /// gradients stay valid. Throws ContractError if the loss is not scalar.
    void backward(Var loss);

    // -- internals used by the op constructors --
    using BackwardFn = std::function<void(Tape&, int self)>;
    Var make_node(Tensor value, std::vector<int> parents, BackwardFn fn);
    /// Gradient buffer of `id`, allocated as zeros on first use. Returns
    /// nullptr when the node does not participate in differentiation.
    Tensor* grad_buffer(int id);
    void accumulate(int id, const Tensor& delta);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<int> parents;
        BackwardFn backward;
        bool trainable = false;
        bool needs_grad = false;
        bool is_leaf = false;
    };
    std::vector<Node> nodes_;
};

// ---- differentiable operations ----------------------------------------------

Var matmul(Var a, Var b);
/// Batched product over the leading extent; optionally B transposed, with a
/// fixed scalar factor folded in (used for attention score scaling).
Var bmm(Var a, Var b, bool transpose_b = false, double alpha = 1.0);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var add_rowvec(Var m, Var v);
Var gelu(Var x);
Var softmax_lastdim(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps);
Var reshape(Var x, std::vector<std::size_t> shape);
Var sum(Var x);

/// (S*p) x D matrix of token rows -> (S*heads) x p x dh with dh = D/heads.
Var split_heads(Var x, std::size_t n_seq, std::size_t seq_len, std::size_t n_heads);
/// Inverse of split_heads.
Var merge_heads(Var x, std::size_t n_seq, std::size_t seq_len, std::size_t n_heads);

/// Contiguous row slice [row0, row0+n_rows) of a 2-D node.
Var row_block(Var x, std::size_t row0, std::size_t n_rows);
/// Vertical concatenation of 2-D nodes with equal column counts.
Var concat_rows(const std::vector<Var>& parts);

/// Mean of squared differences against a fixed target (scalar node).
Var mse_loss(Var pred, const Tensor& target);

}  // namespace delayformer
