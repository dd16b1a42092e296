#pragma once

// Reverse-mode differentiation over dense f64 tensors.
//
// A Tape records nodes in creation order; parents always precede children,
// so the creation order is a topological order and backward() walks it in
// reverse. Gradients are accumulated in that fixed order, which makes the
// result deterministic for a given graph.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "splitnet/tensor.hpp"

namespace splitnet::ad {

enum class Op {
  constant,
  parameter,
  conv2d_same,
  add_bias,
  relu,
  sigmoid,
  axpy,
  lincomb,
  center_scale,
  mean_over_pathways,
  avgpool2,
  maxpool2,
  upsample_nearest,
  transpose_conv2,
  concat_channels,
  add,
  sub,
  mul,
  sum,
  mean,
  bce_loss,
  hinge_loss,
  logit_fixed_point,
};

std::string to_string(Op op);

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  /// Null unless this node takes part in a gradient computation.
  const Tensor* grad() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  const Tensor& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  const Tensor* grad(int id) const;
  Op op(int id) const { return nodes_.at(static_cast<std::size_t>(id)).op; }
  const std::vector<int>& parents(int id) const { return nodes_.at(static_cast<std::size_t>(id)).parents; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node that depends on
  /// a parameter. Throws ValidationError for a non-scalar loss or a foreign
  /// handle.
  void backward(Var loss);
  void zero_grad();

  // Used by primitive implementations.
  Var record(Op op, Tensor value, std::initializer_list<Var> parents, Backward backward);
  Tensor& grad_buffer(int id);

 private:
  struct Node {
    Op op;
    Tensor value;
    std::vector<int> parents;
    Backward backward;
    bool needs_grad = false;
    bool has_grad = false;
    Tensor grad;
  };
  std::vector<Node> nodes_;
};

// Field-shaped operands are rank 3 (channels, rows, cols).

/// Zero-padded "same" cross-correlation; bank is (out, in, k, k), k odd.
Var conv2d_same(Var x, Var bank);
/// Adds bias[c] to every pixel of channel c.
Var add_bias(Var x, Var bias);
Var relu(Var x);
/// Saturates at the representable values nearest 0 and 1.
Var sigmoid(Var x);
/// base + alpha * expr; a one-channel base broadcasts across expr's channels.
Var axpy(Var base, double alpha, Var expr);
/// a * x + b * y; either operand may have one channel and broadcast.
Var lincomb(double a, Var x, double b, Var y);
/// (x - center) / denom.
Var center_scale(Var x, double center, double denom);
/// (1/c) * sum over channels, summed in channel order.
Var mean_over_pathways(Var x);
Var avgpool2(Var x);
/// Ties go to the first element in row-major order.
Var maxpool2(Var x);
Var upsample_nearest(Var x);
/// Stride-2 transposed convolution; kernel is (1, 2, 2) shared or (c, 2, 2).
Var transpose_conv2(Var x, Var kernel);
Var concat_channels(Var first, Var second);
Var add(Var x, Var y);
Var sub(Var x, Var y);
Var mul(Var x, Var y);
Var sum(Var x);
Var mean(Var x);

/// Damped iteration p <- (1 - rho) p + rho Sig((ubar - p) / dt) from
/// p = ubar until the largest change drops below tol or max_iter runs out.
/// The gradient is the implicit-function derivative at the returned point,
/// dp/dubar = s (1 - s) / (dt + s (1 - s)) with s = p.
struct FixedPointStats {
  bool converged = false;
  int iterations = 0;
};
Var logit_fixed_point(Var ubar, double dt, double rho, double tol, int max_iter, FixedPointStats* stats = nullptr);

/// Mean binary cross-entropy; u is clamped to [clamp, 1 - clamp] and the
/// number of clamped pixels is added to *clamped when non-null. At clamped
/// pixels the gradient is evaluated at the clamp bound.
Var bce_loss(Var u, const Tensor& target, double clamp = 1e-12, std::size_t* clamped = nullptr);
/// Mean of max(0, 1 - y (2u - 1)) with y = 2g - 1.
Var hinge_loss(Var u, const Tensor& target);

}  // namespace splitnet::ad
