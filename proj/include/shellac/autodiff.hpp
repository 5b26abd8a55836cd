#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

// Minimal reverse-mode differentiation over row-major matrices.
//
// Every value is a (rows x cols) block of doubles. Signals are laid out as
// channels x frames; vectors are n x 1. Operations append a node to the tape
// and, when recording, a closure that pushes the node's gradient back into its
// inputs. Nodes are only ever appended, so reverse insertion order is a valid
// topological order for the backward sweep.

namespace shellac::ad {

struct Var {
    int id = -1;
};

class Tape {
public:
    explicit Tape(bool record = true) : record_(record) {}

    bool recording() const noexcept { return record_; }

    Var constant(int rows, int cols, std::vector<double> value);
    Var constant(int rows, int cols, std::span<const double> value);

    /// Leaf whose gradient is tracked.
    Var parameter(int rows, int cols, std::span<const double> value);

    int rows(Var v) const { return nodes_[v.id].rows; }
    int cols(Var v) const { return nodes_[v.id].cols; }
    std::span<const double> value(Var v) const { return nodes_[v.id].value; }

    /// Gradient of the last `backward` target w.r.t. v; empty if v did not contribute.
    std::span<const double> grad(Var v) const { return nodes_[v.id].grad; }

    /// Seeds d(target)/d(target) = 1 for a 1x1 target and sweeps the tape backwards.
    void backward(Var target);

    // Op plumbing.
    using Backward = std::function<void(Tape&, Var self)>;
    /// Appends an op result. `bw` is dropped when not recording or when no
    /// input in `inputs` needs a gradient.
    Var push(int rows, int cols, std::vector<double> value, std::initializer_list<Var> inputs,
             Backward bw);
    bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
    std::vector<double>& value_mut(Var v) { return nodes_[v.id].value; }
    std::vector<double>& grad_mut(Var v);  // allocates zeros on first use
    bool has_grad(Var v) const { return !nodes_[v.id].grad.empty(); }

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        int rows = 0;
        int cols = 0;
        std::vector<double> value;
        std::vector<double> grad;
        Backward backward;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
    bool record_;
};

// ---- operations ----------------------------------------------------------

/// Circular same-length 1-D convolution, odd kernel centered on each frame.
/// x: Cin x L, w: Cout x (Cin*K), b: Cout x 1.
Var conv1d(Tape& t, Var x, Var w, Var b, int kernel, int dilation);

/// Strided downsampling convolution with kernel == stride == factor.
/// x: Cin x L, w: Cout x (Cin*F), b: Cout x 1 -> Cout x L/F.
Var conv_down(Tape& t, Var x, Var w, Var b, int factor);

/// Transposed convolution with kernel == stride == factor.
/// x: Cin x L, w: Cin x (Cout*F), b: Cout x 1 -> Cout x L*F.
Var conv_up(Tape& t, Var x, Var w, Var b, int factor);

/// Dense layer on a column vector. x: n x 1, w: m x n, b: m x 1.
Var linear(Tape& t, Var x, Var w, Var b);

/// x * sigmoid(x)
Var silu(Tape& t, Var x);

Var add(Tape& t, Var a, Var b);

/// Stacks a on top of b along the channel axis.
Var concat_rows(Tape& t, Var a, Var b);

/// out[c, :] = (1 + film[c]) * x[c, :] + film[C + c]; film is 2C x 1.
Var film(Tape& t, Var x, Var film_params);

/// Multi-head scaled dot-product attention along the frame axis, no
/// positional encoding. q, k, v: C x L with C divisible by heads.
Var attention(Tape& t, Var q, Var k, Var v, int heads);

/// Softmax weights of `attention` as heads x len(query) x len(key).
std::vector<double> attention_probabilities(std::span<const double> q, std::span<const double> k,
                                            int channels, int len, int heads);

/// Mean of squared differences against a fixed target; returns 1x1.
Var mse(Tape& t, Var pred, std::span<const double> target);

}  // namespace shellac::ad
