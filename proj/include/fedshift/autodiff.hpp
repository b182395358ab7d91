#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "fedshift/mat.hpp"

namespace fedshift::ad {

class Tape;

// Lightweight handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Mat& value() const;
    const Mat& grad() const;
    bool requires_grad() const;
};

// Reverse-mode tape over dense matrices. Nodes are recorded in forward
// (topological) order; backward() walks them once in reverse. Single
// threaded per tape; gradients accumulate additively across fan-out.
class Tape {
public:
    Var leaf(Mat value, bool requires_grad);
    Var constant(Mat value) { return leaf(std::move(value), false); }

    // Scalar output only.
    void backward(Var out);

    Mat& value_of(Var v) { return nodes_[v.id].value; }
    const Mat& value_of(Var v) const { return nodes_[v.id].value; }
    Mat& grad_of(Var v) { return nodes_[v.id].grad; }
    const Mat& grad_of(Var v) const { return nodes_[v.id].grad; }
    bool requires_grad_of(Var v) const { return nodes_[v.id].requires_grad; }

    size_t num_nodes() const { return nodes_.size(); }

    // Internal: record a computed node; backward closure installed after
    // the handle (and thus the output id) exists.
    Var record(Mat value, bool requires_grad);
    void set_back(Var v, std::function<void(Tape&)> back);

private:
    struct Node {
        Mat value;
        Mat grad;
        bool requires_grad = false;
        std::function<void(Tape&)> back;  // empty for leaves
    };
    // deque: appending nodes must not invalidate outstanding value/grad
    // references held by composite ops
    std::deque<Node> nodes_;
};

// --- primitives ---------------------------------------------------------

Var matmul(Var a, Var b);
// add/sub: same shape, or b a 1xC row vector broadcast over a's rows.
Var add(Var a, Var b);
Var sub(Var a, Var b);
// mul/div: elementwise; b may be a Rx1 column or 1xC row vector broadcast.
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double c);
Var leaky_relu(Var a, double slope);
Var tanh_v(Var a);
Var exp_v(Var a);
Var log_v(Var a);
Var softmax_rows(Var a);
Var sum(Var a);        // -> 1x1
Var mean(Var a);       // -> 1x1
Var mean_rows(Var a);  // column means -> 1xC
Var row_gather(Var a, std::vector<int> idx);
Var row_scatter_add(Var a, std::vector<int> idx, int out_rows);
Var concat_cols(Var a, Var b);
Var repeat_rows(Var a, int times);  // a is 1xC -> times x C
Var cosine_pair(Var a, Var b);      // both 1xD (or Dx1) -> scalar
// clamp each column to [lo, hi]; lo/hi are 1xC rows. Gradient passes only
// where the input was strictly inside the interval.
Var clamp(Var a, const Mat& lo, const Mat& hi);

// --- composites ---------------------------------------------------------

// Numerically stable cross-entropy of softmax(logits) vs label; logits 1xC.
Var cross_entropy(Var logits, int label);

// In-place SGD on tape leaves: value -= lr * grad, then grad cleared.
// Rejects vars that do not require gradients.
void sgd_step(const std::vector<Var>& params, double learning_rate);

}  // namespace fedshift::ad
