#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "tspsens/matrix.hpp"
#include "tspsens/rng.hpp"

namespace tspsens::ad {

/// Handle to a value recorded on a Tape.
using Var = std::size_t;

/// Reverse-mode differentiation over whole matrices. Every op appends a node
/// holding its value and a closure that pushes the node's gradient back to
/// its inputs; backward() replays the closures in reverse order.
///
/// A tape is single-use: build the graph, call backward once, read grads.
class Tape {
public:
    Var leaf(Matrix value);

    const Matrix& value(Var v) const { return nodes_[v].value; }
    /// Gradient of the seeded output w.r.t. v (zeros if v did not contribute).
    const Matrix& grad(Var v);

    Var matmul(Var a, Var b);
    /// a * b^T
    Var matmul_bt(Var a, Var b);
    Var add(Var a, Var b);
    /// a (r x c) + bias (1 x c) broadcast over rows.
    Var add_bias(Var a, Var bias);
    Var scale(Var a, double s);
    Var relu(Var a);
    /// Inverted dropout with keep probability 1 - p; mask drawn from rng.
    Var dropout(Var a, double p, Rng& rng);
    /// Row-wise layer normalization with affine gamma/beta (each 1 x c).
    Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);
    /// 1 x c mean over rows.
    Var mean_rows(Var a);
    /// Repeats a 1 x c row `rows` times.
    Var broadcast_rows(Var a, std::size_t rows);
    Var concat_cols(std::span<const Var> parts);
    Var slice_cols(Var a, std::size_t start, std::size_t len);
    Var softmax_rows(Var a);

    /// Seeds d(out) = seed and propagates to every node.
    void backward(Var out, const Matrix& seed);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void()> back;
    };

    Var push(Matrix value, std::function<void()> back = {});
    Matrix& g(Var v);

    std::vector<Node> nodes_;
};

}  // namespace tspsens::ad
