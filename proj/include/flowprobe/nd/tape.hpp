#pragma once

#include <functional>
#include <set>
#include <vector>

#include "flowprobe/nd/params.hpp"
#include "flowprobe/nd/tensor.hpp"

namespace flowprobe::nd {

class Tape;

// Handle to a node on a tape. Cheap to copy.
struct Value {
    Tape* tape = nullptr;
    int idx = -1;

    const Tensor& val() const;
    bool valid() const { return tape != nullptr && idx >= 0; }
};

// Reverse-mode gradient tape, rebuilt per forward pass. Ops append nodes in
// topological order, so a reverse sweep over the node list is a valid
// backward schedule. Gradients of parameter leaves accumulate into their
// ParamSet buffers; backward() clears the tape afterwards.
class Tape {
public:
    struct Node {
        Tensor value;
        const Tensor* ext = nullptr;  // leaves may reference external storage
        Tensor grad;                  // allocated lazily during backward
        bool requires_grad = false;
        bool grad_alloc = false;
        ParamEntry* param = nullptr;  // set for parameter leaves
        ParamSet* owner = nullptr;
        std::function<void(Tape&, int)> backprop;  // empty for leaves

        const Tensor& val() const { return ext ? *ext : value; }
    };

    Value constant(Tensor t) {
        t.ensure_finite("constant");
        return push(std::move(t), false, nullptr, nullptr, {});
    }

    // Parameter leaf. References the ParamSet's tensor (no copy); the
    // ParamSet must outlive this tape.
    Value param(ParamSet& ps, const std::string& name) {
        ParamEntry& e = ps.at(name);
        Node n;
        n.ext = &e.value;
        n.requires_grad = true;
        n.param = &e;
        n.owner = &ps;
        nodes_.push_back(std::move(n));
        return Value{this, static_cast<int>(nodes_.size()) - 1};
    }

    // Constant leaf referencing external storage (no copy, no gradient).
    Value constant_ref(const Tensor& t) {
        Node n;
        n.ext = &t;
        nodes_.push_back(std::move(n));
        return Value{this, static_cast<int>(nodes_.size()) - 1};
    }

    const Tensor& value_of(int idx) const { return nodes_[static_cast<size_t>(idx)].val(); }
    Node& node(int idx) { return nodes_[static_cast<size_t>(idx)]; }
    size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1, sweeps the tape in reverse, accumulates
    // parameter gradients into their ParamSets, then clears the tape.
    void backward(Value loss);

    void clear() { nodes_.clear(); }

    // --- internal helpers used by op implementations ---
    Value push(Tensor value, bool needs, ParamEntry* param, ParamSet* owner,
               std::function<void(Tape&, int)> backprop) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = needs;
        n.param = param;
        n.owner = owner;
        n.backprop = std::move(backprop);
        nodes_.push_back(std::move(n));
        return Value{this, static_cast<int>(nodes_.size()) - 1};
    }

    Tensor& grad_buf(int idx) {
        Node& n = nodes_[static_cast<size_t>(idx)];
        if (!n.grad_alloc) {
            n.grad = Tensor::zeros(n.val().shape());
            n.grad_alloc = true;
        }
        return n.grad;
    }

    bool needs_grad(int idx) const { return nodes_[static_cast<size_t>(idx)].requires_grad; }

private:
    std::vector<Node> nodes_;
};

inline const Tensor& Value::val() const { return tape->value_of(idx); }

// ---- Op set: exactly what the networks in this project need. ----

// Matrix product a[m x k] * b[k x n] -> [m x n].
Value matmul(Value a, Value b);
// Elementwise sum / product, same shape.
Value add(Value a, Value b);
Value mul(Value a, Value b);
// Broadcast bias add: a[m x n] + row[n] on every row.
Value add_row(Value a, Value row);
// Broadcast per-channel scale: a[m x n] * row[n] on every row.
Value mul_row(Value a, Value row);
// Scalar scale.
Value scale(Value a, double s);
// Activations.
Value tanh_act(Value a);
Value silu(Value a);
// Column-wise concatenation [m x p] ++ [m x q] -> [m x (p+q)].
Value concat_cols(Value a, Value b);
// Row gather from an embedding table [R x C] -> [B x C].
Value gather_rows(Value table, const std::vector<int>& rows);
// Mean-squared-error reduction to a scalar.
Value mse(Value pred, Value target);
// Sum of all elements to a scalar.
Value sum_all(Value a);
// Mean softmax cross-entropy over rows of logits[B x C] against class labels.
Value softmax_xent(Value logits, const std::vector<int>& labels);

// Row-wise softmax, forward only (no tape node); used by inference heads.
Tensor softmax_rows(const Tensor& logits);

}  // namespace flowprobe::nd
