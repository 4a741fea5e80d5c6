#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "bayescope/tensor.hpp"

namespace bayescope::ad {

class Tape;

/// Lightweight handle to a value recorded on a tape.
class Node {
  public:
    Node() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    double scalar() const { return value().item(); }

    Tape* tape() const { return tape_; }
    std::size_t index() const { return idx_; }
    bool valid() const { return tape_ != nullptr; }

  private:
    friend class Tape;
    Node(Tape* t, std::size_t i) : tape_(t), idx_(i) {}
    Tape* tape_ = nullptr;
    std::size_t idx_ = 0;
};

/// Dynamic Wengert list: ops append entries during the forward pass, so the
/// list is already topologically ordered and backward() is a single reverse
/// sweep that visits each node exactly once. One tape per forward/backward
/// pass; tapes are single-threaded, distinct tapes are independent.
class Tape {
  public:
    using BackFn = std::function<void(Tape&, std::size_t)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf with no gradient tracking (inputs, targets, noise draws).
    Node constant(Tensor value);

    /// Trainable leaf. backward() accumulates dLoss/dLeaf into *grad_sink;
    /// repeated backward calls keep accumulating until the caller zeroes it.
    Node param(const Tensor& value, Tensor* grad_sink);

    /// Reverse sweep from a scalar loss. Internal gradients are reset on
    /// every call; sinks are accumulated into.
    void backward(Node loss);

    std::size_t size() const { return entries_.size(); }

    const Tensor& value(std::size_t idx) const { return entries_[idx].value; }
    bool tracked(std::size_t idx) const { return entries_[idx].track; }

    /// Gradient held for a node after the last backward() (zeros if the node
    /// did not participate). Test/diagnostic accessor.
    Tensor grad_of(Node n) const;

    // Op builders (used by the free functions below).
    Node emit(Tensor value, bool track, BackFn backprop);
    Tensor& grad_buf(std::size_t idx) { return entries_[idx].grad; }

  private:
    struct EntryRec {
        Tensor value;
        Tensor grad;
        BackFn backprop;     // null for leaves
        Tensor* sink = nullptr;
        bool track = false;
    };
    std::vector<EntryRec> entries_;
};

// --- elementwise suite -------------------------------------------------
// Binary ops broadcast when one operand is scalar or its shape equals the
// trailing extents of the other; anything else is a DimensionError.
Node add(Node a, Node b);
Node sub(Node a, Node b);
Node mul(Node a, Node b);
Node div(Node a, Node b);  // zero divisor -> NumericError

Node affine(Node x, double scale, double shift);  // scale*x + shift
inline Node add(Node x, double s) { return affine(x, 1.0, s); }
inline Node sub(Node x, double s) { return affine(x, 1.0, -s); }
inline Node mul(Node x, double s) { return affine(x, s, 0.0); }
inline Node neg(Node x) { return affine(x, -1.0, 0.0); }

Node exp(Node x);   // non-finite result -> NumericError
Node log(Node x);   // non-positive input -> NumericError
Node tanh(Node x);
Node relu(Node x);
Node softplus(Node x);
Node square(Node x);
Node clamp(Node x, double lo, double hi);

Node reduce_sum(Node x);   // -> scalar
Node reduce_mean(Node x);  // -> scalar

// --- structural ---------------------------------------------------------
Node reshape(Node x, Shape shape);
Node select_column(Node x, std::size_t col);     // [m,n] -> [m,1]
Node concat_rows(std::span<const Node> rows);    // k nodes [1,n] -> [k,n]

// --- dense / conv -------------------------------------------------------
Node matmul(Node a, Node b);                     // [m,k] x [k,n] -> [m,n]
Node conv2d(Node x, Node kernels, std::size_t stride);  // valid convolution
Node avg_pool2d(Node x, std::size_t win);

inline Node operator+(Node a, Node b) { return add(a, b); }
inline Node operator-(Node a, Node b) { return sub(a, b); }
inline Node operator*(Node a, Node b) { return mul(a, b); }
inline Node operator/(Node a, Node b) { return div(a, b); }
inline Node operator+(Node a, double s) { return add(a, s); }
inline Node operator-(Node a, double s) { return sub(a, s); }
inline Node operator*(Node a, double s) { return mul(a, s); }
inline Node operator*(double s, Node a) { return mul(a, s); }

}  // namespace bayescope::ad
