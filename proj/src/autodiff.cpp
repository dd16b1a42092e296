#include "splitnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "splitnet/error.hpp"
#include "splitnet/kernels.hpp"
#include "splitnet/numerics.hpp"

namespace splitnet::ad {

std::string to_string(Op op) {
  switch (op) {
    case Op::constant: return "constant";
    case Op::parameter: return "parameter";
    case Op::conv2d_same: return "conv2d_same";
    case Op::add_bias: return "add_bias";
    case Op::relu: return "relu";
    case Op::sigmoid: return "sigmoid";
    case Op::axpy: return "axpy";
    case Op::lincomb: return "lincomb";
    case Op::center_scale: return "center_scale";
    case Op::mean_over_pathways: return "mean_over_pathways";
    case Op::avgpool2: return "avgpool2";
    case Op::maxpool2: return "maxpool2";
    case Op::upsample_nearest: return "upsample_nearest";
    case Op::transpose_conv2: return "transpose_conv2";
    case Op::concat_channels: return "concat_channels";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::bce_loss: return "bce_loss";
    case Op::hinge_loss: return "hinge_loss";
    case Op::logit_fixed_point: return "logit_fixed_point";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor* Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Tensor value) { return record(Op::constant, std::move(value), {}, nullptr); }

Var Tape::parameter(Tensor value) {
  Var v = record(Op::parameter, std::move(value), {}, nullptr);
  nodes_.back().needs_grad = true;
  return v;
}

const Tensor* Tape::grad(int id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  return (n.needs_grad && n.has_grad) ? &n.grad : nullptr;
}

Var Tape::record(Op op, Tensor value, std::initializer_list<Var> parents, Backward backward) {
  const int id = static_cast<int>(nodes_.size());
  Node node{op, std::move(value), {}, std::move(backward), false, false, Tensor{}};
  for (const Var& p : parents) {
    if (&p.tape() != this) throw ValidationError("operand belongs to a different tape");
    if (p.id() < 0 || p.id() >= id) throw ValidationError("operand is not an earlier node (cycle)");
    node.parents.push_back(p.id());
    node.needs_grad = node.needs_grad || nodes_[static_cast<std::size_t>(p.id())].needs_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, id);
}

Tensor& Tape::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape, 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::zero_grad() {
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ValidationError("loss belongs to a different tape");
  const Node& root = nodes_.at(static_cast<std::size_t>(loss.id()));
  if (root.value.size() != 1) throw ValidationError("backward needs a scalar loss, got " + root.value.shape_string());
  if (!root.needs_grad) return;
  grad_buffer(loss.id()).data[0] += 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || !n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

namespace {

kernels::Planes planes(const Tensor& t) {
  if (t.rank() != 3) throw ValidationError("expected a (channels, rows, cols) tensor, got " + t.shape_string());
  return {t.dim(0), t.dim(1), t.dim(2)};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ValidationError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

// Broadcast rules for binary channel ops: equal shapes, or one side has a
// single channel with the same plane.
std::vector<int> broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.same_shape(b)) return a.shape;
  if (a.rank() == 3 && b.rank() == 3 && a.dim(1) == b.dim(1) && a.dim(2) == b.dim(2)) {
    if (a.dim(0) == 1) return b.shape;
    if (b.dim(0) == 1) return a.shape;
  }
  throw ValidationError(std::string(op) + ": cannot broadcast " + a.shape_string() + " with " + b.shape_string());
}

// Adds g (full shape) into the gradient of an operand that may have been
// broadcast along channels; channel sums run in channel order.
void accumulate_broadcast(Tensor& target, const Tensor& g, double scale) {
  if (target.size() == g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) target.data[i] += scale * g.data[i];
    return;
  }
  const std::size_t plane = target.size();
  const std::size_t channels = g.size() / plane;
  for (std::size_t p = 0; p < plane; ++p) {
    double s = 0.0;
    for (std::size_t c = 0; c < channels; ++c) s += g.data[c * plane + p];
    target.data[p] += scale * s;
  }
}

inline double at_broadcast(const Tensor& t, std::size_t i, std::size_t plane) {
  return t.size() == plane ? t.data[i % plane] : t.data[i];
}

}  // namespace

Var conv2d_same(Var x, Var bank) {
  const Tensor& xv = x.value();
  const Tensor& kv = bank.value();
  const kernels::Planes xd = planes(xv);
  if (kv.rank() != 4 || kv.dim(2) != kv.dim(3)) throw ValidationError("conv2d_same: bank must be (out, in, k, k)");
  if (kv.dim(2) % 2 == 0) throw ValidationError("conv2d_same: kernel size must be odd");
  if (kv.dim(1) != xd.channels)
    throw ValidationError("conv2d_same: bank expects " + std::to_string(kv.dim(1)) + " input channels, got " +
                          std::to_string(xd.channels));
  const int out_channels = kv.dim(0);
  const int k = kv.dim(2);
  Tensor out({out_channels, xd.rows, xd.cols});
  kernels::active().conv2d_same(xv.data, xd, kv.data, out_channels, k, out.data, false);
  const int xid = x.id();
  const int kid = bank.id();
  return x.tape().record(Op::conv2d_same, std::move(out), {x, bank},
                         [xid, kid, xd, out_channels, k](Tape& t, const Tensor& g) {
                           const auto& table = kernels::active();
                           if (t.needs_grad(xid))
                             table.conv2d_same_grad_input(g.data, xd, t.value(kid).data, out_channels, k,
                                                          t.grad_buffer(xid).data);
                           if (t.needs_grad(kid))
                             table.conv2d_same_grad_kernel(g.data, t.value(xid).data, xd, out_channels, k,
                                                           t.grad_buffer(kid).data);
                         });
}

Var add_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  const kernels::Planes xd = planes(xv);
  if (bias.value().size() != static_cast<std::size_t>(xd.channels))
    throw ValidationError("add_bias: need one bias per channel");
  Tensor out = xv;
  const std::size_t plane = static_cast<std::size_t>(xd.plane_size());
  for (int c = 0; c < xd.channels; ++c) {
    const double b = bias.value().data[static_cast<std::size_t>(c)];
    for (std::size_t p = 0; p < plane; ++p) out.data[c * plane + p] += b;
  }
  const int xid = x.id();
  const int bid = bias.id();
  return x.tape().record(Op::add_bias, std::move(out), {x, bias}, [xid, bid, xd, plane](Tape& t, const Tensor& g) {
    if (t.needs_grad(xid)) {
      Tensor& gx = t.grad_buffer(xid);
      for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i];
    }
    if (t.needs_grad(bid)) {
      Tensor& gb = t.grad_buffer(bid);
      for (int c = 0; c < xd.channels; ++c) {
        double s = 0.0;
        for (std::size_t p = 0; p < plane; ++p) s += g.data[c * plane + p];
        gb.data[static_cast<std::size_t>(c)] += s;
      }
    }
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data) v = splitnet::relu(v);
  const int xid = x.id();
  return x.tape().record(Op::relu, std::move(out), {x}, [xid](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(xid);
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv.data[i] > 0.0) gx.data[i] += g.data[i];
  });
}

Var sigmoid(Var x) {
  Tensor out = x.value();
  for (double& v : out.data) v = splitnet::sigmoid(v);
  const int xid = x.id();
  const int self = static_cast<int>(x.tape().size());
  return x.tape().record(Op::sigmoid, std::move(out), {x}, [xid, self](Tape& t, const Tensor& g) {
    const Tensor& s = t.value(self);
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i] * s.data[i] * (1.0 - s.data[i]);
  });
}

Var axpy(Var base, double alpha, Var expr) {
  const Tensor& bv = base.value();
  const Tensor& ev = expr.value();
  if (!bv.same_shape(ev)) {
    if (!(bv.rank() == 3 && ev.rank() == 3 && bv.dim(0) == 1 && bv.dim(1) == ev.dim(1) && bv.dim(2) == ev.dim(2)))
      throw ValidationError("axpy: base " + bv.shape_string() + " does not broadcast to " + ev.shape_string());
  }
  Tensor out(ev.shape);
  const std::size_t plane = bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = at_broadcast(bv, i, plane) + alpha * ev.data[i];
  const int bid = base.id();
  const int eid = expr.id();
  return base.tape().record(Op::axpy, std::move(out), {base, expr}, [bid, eid, alpha](Tape& t, const Tensor& g) {
    if (t.needs_grad(bid)) accumulate_broadcast(t.grad_buffer(bid), g, 1.0);
    if (t.needs_grad(eid)) accumulate_broadcast(t.grad_buffer(eid), g, alpha);
  });
}

Var lincomb(double a, Var x, double b, Var y) {
  const Tensor& xv = x.value();
  const Tensor& yv = y.value();
  Tensor out(broadcast_shape(xv, yv, "lincomb"));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t plane = out.rank() == 3 ? static_cast<std::size_t>(out.dim(1)) * out.dim(2) : out.size();
    out.data[i] = a * at_broadcast(xv, i, plane) + b * at_broadcast(yv, i, plane);
  }
  const int xid = x.id();
  const int yid = y.id();
  return x.tape().record(Op::lincomb, std::move(out), {x, y}, [xid, yid, a, b](Tape& t, const Tensor& g) {
    if (t.needs_grad(xid)) accumulate_broadcast(t.grad_buffer(xid), g, a);
    if (t.needs_grad(yid)) accumulate_broadcast(t.grad_buffer(yid), g, b);
  });
}

Var center_scale(Var x, double center, double denom) {
  if (denom == 0.0) throw ValidationError("center_scale: zero denominator");
  Tensor out = x.value();
  for (double& v : out.data) v = (v - center) / denom;
  const int xid = x.id();
  return x.tape().record(Op::center_scale, std::move(out), {x}, [xid, denom](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i] / denom;
  });
}

Var mean_over_pathways(Var x) {
  const kernels::Planes xd = planes(x.value());
  const std::size_t plane = static_cast<std::size_t>(xd.plane_size());
  Tensor out({1, xd.rows, xd.cols});
  const auto& xv = x.value().data;
  for (std::size_t p = 0; p < plane; ++p) {
    double s = 0.0;
    for (int c = 0; c < xd.channels; ++c) s += xv[c * plane + p];
    out.data[p] = s / xd.channels;
  }
  const int xid = x.id();
  return x.tape().record(Op::mean_over_pathways, std::move(out), {x}, [xid, xd, plane](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xid);
    for (int c = 0; c < xd.channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) gx.data[c * plane + p] += g.data[p] / xd.channels;
  });
}

Var avgpool2(Var x) {
  const kernels::Planes xd = planes(x.value());
  if (xd.rows % 2 || xd.cols % 2) throw ValidationError("avgpool2: odd plane size");
  Tensor out({xd.channels, xd.rows / 2, xd.cols / 2});
  kernels::active().avgpool2(x.value().data, xd, out.data);
  const int xid = x.id();
  return x.tape().record(Op::avgpool2, std::move(out), {x}, [xid, xd](Tape& t, const Tensor& g) {
    kernels::active().avgpool2_grad(g.data, xd, t.grad_buffer(xid).data);
  });
}

Var maxpool2(Var x) {
  const kernels::Planes xd = planes(x.value());
  if (xd.rows % 2 || xd.cols % 2) throw ValidationError("maxpool2: odd plane size");
  const kernels::Planes cd{xd.channels, xd.rows / 2, xd.cols / 2};
  Tensor out({cd.channels, cd.rows, cd.cols});
  auto argmax = std::make_shared<std::vector<int>>(out.size());
  kernels::active().maxpool2(x.value().data, xd, out.data, *argmax);
  const int xid = x.id();
  return x.tape().record(Op::maxpool2, std::move(out), {x}, [xid, cd, argmax](Tape& t, const Tensor& g) {
    kernels::active().maxpool2_grad(g.data, *argmax, cd, t.grad_buffer(xid).data);
  });
}

Var upsample_nearest(Var x) {
  const kernels::Planes cd = planes(x.value());
  Tensor out({cd.channels, cd.rows * 2, cd.cols * 2});
  kernels::active().upsample_nearest(x.value().data, cd, out.data);
  const int xid = x.id();
  return x.tape().record(Op::upsample_nearest, std::move(out), {x}, [xid, cd](Tape& t, const Tensor& g) {
    kernels::active().upsample_nearest_grad(g.data, cd, t.grad_buffer(xid).data);
  });
}

Var transpose_conv2(Var x, Var kernel) {
  const kernels::Planes cd = planes(x.value());
  const Tensor& kv = kernel.value();
  if (kv.rank() != 3 || kv.dim(1) != 2 || kv.dim(2) != 2 || (kv.dim(0) != 1 && kv.dim(0) != cd.channels))
    throw ValidationError("transpose_conv2: kernel must be (1, 2, 2) or (channels, 2, 2), got " + kv.shape_string());
  const int kc = kv.dim(0);
  Tensor out({cd.channels, cd.rows * 2, cd.cols * 2});
  kernels::active().transpose_conv2(x.value().data, cd, kv.data, kc, out.data);
  const int xid = x.id();
  const int kid = kernel.id();
  return x.tape().record(Op::transpose_conv2, std::move(out), {x, kernel}, [xid, kid, cd, kc](Tape& t, const Tensor& g) {
    const auto& table = kernels::active();
    if (t.needs_grad(xid)) table.transpose_conv2_grad_input(g.data, cd, t.value(kid).data, kc, t.grad_buffer(xid).data);
    if (t.needs_grad(kid)) table.transpose_conv2_grad_kernel(g.data, t.value(xid).data, cd, kc, t.grad_buffer(kid).data);
  });
}

Var concat_channels(Var first, Var second) {
  const kernels::Planes a = planes(first.value());
  const kernels::Planes b = planes(second.value());
  if (a.rows != b.rows || a.cols != b.cols) throw ValidationError("concat_channels: plane mismatch");
  Tensor out({a.channels + b.channels, a.rows, a.cols});
  std::copy(first.value().data.begin(), first.value().data.end(), out.data.begin());
  std::copy(second.value().data.begin(), second.value().data.end(),
            out.data.begin() + static_cast<std::ptrdiff_t>(first.value().size()));
  const int aid = first.id();
  const int bid = second.id();
  const std::size_t split = first.value().size();
  return first.tape().record(Op::concat_channels, std::move(out), {first, second}, [aid, bid, split](Tape& t, const Tensor& g) {
    if (t.needs_grad(aid)) {
      Tensor& ga = t.grad_buffer(aid);
      for (std::size_t i = 0; i < split; ++i) ga.data[i] += g.data[i];
    }
    if (t.needs_grad(bid)) {
      Tensor& gb = t.grad_buffer(bid);
      for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] += g.data[split + i];
    }
  });
}

Var add(Var x, Var y) { return lincomb(1.0, x, 1.0, y); }

Var sub(Var x, Var y) { return lincomb(1.0, x, -1.0, y); }

Var mul(Var x, Var y) {
  require_same_shape(x.value(), y.value(), "mul");
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= y.value().data[i];
  const int xid = x.id();
  const int yid = y.id();
  return x.tape().record(Op::mul, std::move(out), {x, y}, [xid, yid](Tape& t, const Tensor& g) {
    if (t.needs_grad(xid)) {
      Tensor& gx = t.grad_buffer(xid);
      const Tensor& yv = t.value(yid);
      for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i] * yv.data[i];
    }
    if (t.needs_grad(yid)) {
      Tensor& gy = t.grad_buffer(yid);
      const Tensor& xv = t.value(xid);
      for (std::size_t i = 0; i < g.size(); ++i) gy.data[i] += g.data[i] * xv.data[i];
    }
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data) s += v;
  const int xid = x.id();
  return x.tape().record(Op::sum, Tensor::scalar(s), {x}, [xid](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xid);
    for (double& v : gx.data) v += g.data[0];
  });
}

Var mean(Var x) {
  double s = 0.0;
  for (double v : x.value().data) s += v;
  const double n = static_cast<double>(x.value().size());
  const int xid = x.id();
  return x.tape().record(Op::mean, Tensor::scalar(s / n), {x}, [xid, n](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xid);
    for (double& v : gx.data) v += g.data[0] / n;
  });
}

Var logit_fixed_point(Var ubar, double dt, double rho, double tol, int max_iter, FixedPointStats* stats) {
  if (!(dt > 0.0)) throw ValidationError("logit_fixed_point: dt must be positive");
  if (!(rho > 0.0 && rho <= 1.0)) throw ValidationError("logit_fixed_point: damping must lie in (0, 1]");
  const Tensor& uv = ubar.value();
  Tensor p = uv;
  FixedPointStats st;
  for (int it = 1; it <= max_iter; ++it) {
    double change = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double s = splitnet::sigmoid((uv.data[i] - p.data[i]) / dt);
      const double next = (1.0 - rho) * p.data[i] + rho * s;
      change = std::max(change, std::abs(next - p.data[i]));
      p.data[i] = next;
    }
    st.iterations = it;
    if (change < tol) {
      st.converged = true;
      break;
    }
  }
  if (stats) *stats = st;
  const int uid = ubar.id();
  const int self = static_cast<int>(ubar.tape().size());
  return ubar.tape().record(Op::logit_fixed_point, std::move(p), {ubar}, [uid, self, dt](Tape& t, const Tensor& g) {
    const Tensor& pv = t.value(self);
    Tensor& gu = t.grad_buffer(uid);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double d = pv.data[i] * (1.0 - pv.data[i]);
      gu.data[i] += g.data[i] * d / (dt + d);
    }
  });
}

Var bce_loss(Var u, const Tensor& target, double clamp, std::size_t* clamped) {
  const Tensor& uv = u.value();
  if (uv.size() != target.size()) throw ValidationError("bce_loss: shape mismatch");
  const double lo = clamp;
  const double hi = 1.0 - clamp;
  double s = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < uv.size(); ++i) {
    double p = uv.data[i];
    if (p < lo) { p = lo; ++hits; }
    else if (p > hi) { p = hi; ++hits; }
    const double g = target.data[i];
    s += -(g * std::log(p) + (1.0 - g) * std::log(1.0 - p));
  }
  if (clamped) *clamped += hits;
  const double n = static_cast<double>(uv.size());
  const int uid = u.id();
  return u.tape().record(Op::bce_loss, Tensor::scalar(s / n), {u}, [uid, target, lo, hi, n](Tape& t, const Tensor& g) {
    const Tensor& uv = t.value(uid);
    Tensor& gu = t.grad_buffer(uid);
    for (std::size_t i = 0; i < uv.size(); ++i) {
      const double p = std::clamp(uv.data[i], lo, hi);
      const double y = target.data[i];
      gu.data[i] += g.data[0] * (-y / p + (1.0 - y) / (1.0 - p)) / n;
    }
  });
}

Var hinge_loss(Var u, const Tensor& target) {
  const Tensor& uv = u.value();
  if (uv.size() != target.size()) throw ValidationError("hinge_loss: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < uv.size(); ++i) {
    const double y = 2.0 * target.data[i] - 1.0;
    s += std::max(0.0, 1.0 - y * (2.0 * uv.data[i] - 1.0));
  }
  const double n = static_cast<double>(uv.size());
  const int uid = u.id();
  return u.tape().record(Op::hinge_loss, Tensor::scalar(s / n), {u}, [uid, target, n](Tape& t, const Tensor& g) {
    const Tensor& uv = t.value(uid);
    Tensor& gu = t.grad_buffer(uid);
    for (std::size_t i = 0; i < uv.size(); ++i) {
      const double y = 2.0 * target.data[i] - 1.0;
      if (1.0 - y * (2.0 * uv.data[i] - 1.0) > 0.0) gu.data[i] += g.data[0] * (-2.0 * y) / n;
    }
  });
}

}  // namespace splitnet::ad
