#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bimodec/core/error.hpp"

/// Minimal reverse-mode differentiation for the cnnatt network. Tensors are
/// matrices whose rows are samples; sequence tensors stack B items of T steps
/// as B*T rows (item-major) and carry T alongside.
namespace bimodec::decode::ag {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

namespace kernels {

inline std::string dims(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

/// im2col for a valid 1-D convolution along time: row (b, t) holds frames t..t+k-1 of item b.
inline Matrix im2col(const Matrix& x, Eigen::Index steps, Eigen::Index kernel) {
  const Eigen::Index items = x.rows() / steps, cin = x.cols(), out_steps = steps - kernel + 1;
  Matrix cols(items * out_steps, kernel * cin);
  for (Eigen::Index b = 0; b < items; ++b) {
    for (Eigen::Index t = 0; t < out_steps; ++t) {
      for (Eigen::Index j = 0; j < kernel; ++j) cols.block(b * out_steps + t, j * cin, 1, cin) = x.row(b * steps + t + j);
    }
  }
  return cols;
}

inline Matrix elu(const Matrix& x) { return x.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); }); }

struct LayerNormCache {
  Matrix xhat;
  Eigen::VectorXd inv_std;
};

inline Matrix layer_norm(const Matrix& x, const RowVector& gain, const RowVector& bias, double eps, LayerNormCache* cache = nullptr) {
  const auto c = static_cast<double>(x.cols());
  const Eigen::VectorXd mean = x.rowwise().sum() / c;
  Matrix xc = x.colwise() - mean;
  const Eigen::VectorXd inv_std = ((xc.array().square().rowwise().sum() / c) + eps).rsqrt().matrix();
  Matrix xhat = inv_std.asDiagonal() * xc;
  Matrix y = (xhat.array().rowwise() * gain.array()).rowwise() + bias.array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv_std;
  }
  return y;
}

inline void softmax_rows(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
}

/// Single-head scaled dot-product self-attention per item. Returns B*T x D;
/// the T x T weights of each item are written to `weights` if given.
inline Matrix self_attention(const Matrix& x, Eigen::Index steps, const Matrix& wq, const Matrix& wk, const Matrix& wv,
                             std::vector<Matrix>* weights = nullptr, Matrix* q_out = nullptr, Matrix* k_out = nullptr,
                             Matrix* v_out = nullptr) {
  const Eigen::Index items = x.rows() / steps, d = wq.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix q = x * wq, k = x * wk, v = x * wv;
  Matrix out(x.rows(), wv.cols());
  if (weights) weights->resize(static_cast<std::size_t>(items));
  for (Eigen::Index b = 0; b < items; ++b) {
    Matrix s = q.middleRows(b * steps, steps) * k.middleRows(b * steps, steps).transpose() * scale;
    softmax_rows(s);
    out.middleRows(b * steps, steps).noalias() = s * v.middleRows(b * steps, steps);
    if (weights) (*weights)[static_cast<std::size_t>(b)] = std::move(s);
  }
  if (q_out) *q_out = std::move(q);
  if (k_out) *k_out = std::move(k);
  if (v_out) *v_out = std::move(v);
  return out;
}

inline Matrix mean_pool(const Matrix& x, Eigen::Index steps) {
  const Eigen::Index items = x.rows() / steps;
  Matrix out(items, x.cols());
  for (Eigen::Index b = 0; b < items; ++b) out.row(b) = x.middleRows(b * steps, steps).colwise().mean();
  return out;
}

}  // namespace kernels

struct Var {
  int id = -1;
};

class Tape {
 public:
  struct Node {
    std::string op;
    std::vector<int> inputs;
    Matrix value;
    Matrix grad;  ///< empty until something flows in
    bool requires_grad = false;
    Eigen::Index steps = 0;  ///< T for sequence tensors, 0 otherwise
    std::function<void(Tape&, int)> backward;
    std::vector<Matrix> saved;
  };

  Var leaf(Matrix value, bool requires_grad = false, Eigen::Index steps = 0, std::string name = "leaf") {
    if (!value.allFinite()) throw NumericError("autograd: non-finite leaf '" + name + "'");
    Node n;
    n.op = std::move(name);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.steps = steps;
    return push(std::move(n));
  }

  const Matrix& value(Var v) const { return at(v).value; }
  const Matrix& grad(Var v) const { return at(v).grad; }
  const Node& node(Var v) const { return at(v); }
  Eigen::Index steps(Var v) const { return at(v).steps; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and visits nodes in reverse creation order,
  /// which is a reverse topological order because inputs always exist first.
  void backward(Var loss) {
    const Node& l = at(loss);
    if (l.value.size() != 1) throw ShapeError("autograd: backward needs a scalar, got " + kernels::dims(l.value));
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[static_cast<std::size_t>(loss.id)].grad = Matrix::Ones(1, 1);
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.backward && n.grad.size() > 0) n.backward(*this, id);
    }
  }

  Var push(Node n) {
    if (!n.value.allFinite()) throw NumericError("autograd: non-finite output of " + n.op);
    for (int i : n.inputs) n.requires_grad = n.requires_grad || at(Var{i}).requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Node& mut(int id) { return nodes_[static_cast<std::size_t>(id)]; }

  void accumulate(int id, const Matrix& g) {
    Node& n = mut(id);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = g;
    else n.grad += g;
  }

  bool wants(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

 private:
  const Node& at(Var v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw ShapeError("autograd: invalid variable");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  std::vector<Node> nodes_;
};

/// Valid convolution over time. x: B*T x Cin (steps T), w: (k*Cin) x Cout, b: 1 x Cout.
inline Var conv1d_time(Tape& t, Var x, Var w, Var b, Eigen::Index kernel) {
  const Matrix& xv = t.value(x);
  const Eigen::Index steps = t.steps(x);
  if (steps <= 0) throw ShapeError("conv1d_time: input is not a sequence");
  if (kernel < 1 || kernel > steps) throw ShapeError("conv1d_time: kernel " + std::to_string(kernel) + " vs time steps T=" + std::to_string(steps));
  const Eigen::Index cin = xv.cols();
  if (t.value(w).rows() != kernel * cin) {
    throw ShapeError("conv1d_time: weight rows " + std::to_string(t.value(w).rows()) + " != kernel*C_in = " + std::to_string(kernel * cin));
  }
  if (t.value(b).rows() != 1 || t.value(b).cols() != t.value(w).cols()) throw ShapeError("conv1d_time: bias must be 1 x C_out");
  Tape::Node n;
  n.op = "conv1d_time";
  n.inputs = {x.id, w.id, b.id};
  n.steps = steps - kernel + 1;
  Matrix cols = kernels::im2col(xv, steps, kernel);
  n.value = (cols * t.value(w)).rowwise() + t.value(b).row(0);
  n.saved.push_back(std::move(cols));
  n.backward = [x, w, b, kernel, steps, cin](Tape& tp, int self) {
    const Matrix& g = tp.mut(self).grad;
    const Matrix& cols = tp.mut(self).saved[0];
    if (tp.wants(w.id)) tp.accumulate(w.id, cols.transpose() * g);
    if (tp.wants(b.id)) tp.accumulate(b.id, g.colwise().sum());
    if (tp.wants(x.id)) {
      const Matrix dcols = g * tp.value(w).transpose();
      const Eigen::Index out_steps = steps - kernel + 1, items = dcols.rows() / out_steps;
      Matrix dx = Matrix::Zero(items * steps, cin);
      for (Eigen::Index it = 0; it < items; ++it) {
        for (Eigen::Index s = 0; s < out_steps; ++s) {
          for (Eigen::Index j = 0; j < kernel; ++j) dx.row(it * steps + s + j) += dcols.block(it * out_steps + s, j * cin, 1, cin);
        }
      }
      tp.accumulate(x.id, dx);
    }
  };
  return t.push(std::move(n));
}

inline Var elu(Tape& t, Var x) {
  Tape::Node n;
  n.op = "elu";
  n.inputs = {x.id};
  n.steps = t.steps(x);
  n.value = kernels::elu(t.value(x));
  n.backward = [x](Tape& tp, int self) {
    const Matrix& y = tp.mut(self).value;
    const Matrix& xv = tp.value(x);
    const Matrix d = (xv.array() > 0.0).select(Matrix::Ones(y.rows(), y.cols()), y.array() + 1.0);
    tp.accumulate(x.id, tp.mut(self).grad.cwiseProduct(d));
  };
  return t.push(std::move(n));
}

/// Normalizes each row over its columns, then applies per-column gain and bias.
inline Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5) {
  const Eigen::Index c = t.value(x).cols();
  if (t.value(gain).rows() != 1 || t.value(gain).cols() != c || t.value(bias).rows() != 1 || t.value(bias).cols() != c) {
    throw ShapeError("layer_norm: gain/bias must be 1 x C with C=" + std::to_string(c));
  }
  Tape::Node n;
  n.op = "layer_norm";
  n.inputs = {x.id, gain.id, bias.id};
  n.steps = t.steps(x);
  kernels::LayerNormCache cache;
  n.value = kernels::layer_norm(t.value(x), t.value(gain).row(0), t.value(bias).row(0), eps, &cache);
  n.saved.push_back(std::move(cache.xhat));
  n.saved.push_back(cache.inv_std);
  n.backward = [x, gain, bias](Tape& tp, int self) {
    const Matrix& g = tp.mut(self).grad;
    const Matrix& xhat = tp.mut(self).saved[0];
    const Eigen::VectorXd inv_std = tp.mut(self).saved[1].col(0);
    if (tp.wants(gain.id)) tp.accumulate(gain.id, (g.cwiseProduct(xhat)).colwise().sum());
    if (tp.wants(bias.id)) tp.accumulate(bias.id, g.colwise().sum());
    if (tp.wants(x.id)) {
      const auto c = static_cast<double>(g.cols());
      const Matrix dxhat = g.array().rowwise() * tp.value(gain).row(0).array();
      const Eigen::VectorXd m1 = dxhat.rowwise().sum() / c;
      const Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().sum() / c;
      Matrix dx = dxhat.colwise() - m1;
      dx -= m2.asDiagonal() * xhat;
      tp.accumulate(x.id, inv_std.asDiagonal() * dx);
    }
  };
  return t.push(std::move(n));
}

/// y = x w + b. x: N x in, w: in x out, b: 1 x out.
inline Var linear(Tape& t, Var x, Var w, Var b) {
  if (t.value(x).cols() != t.value(w).rows()) {
    throw ShapeError("linear: input features " + std::to_string(t.value(x).cols()) + " != weight rows (in) " +
                     std::to_string(t.value(w).rows()));
  }
  if (t.value(b).rows() != 1 || t.value(b).cols() != t.value(w).cols()) throw ShapeError("linear: bias must be 1 x out");
  Tape::Node n;
  n.op = "linear";
  n.inputs = {x.id, w.id, b.id};
  n.steps = t.steps(x);
  n.value = (t.value(x) * t.value(w)).rowwise() + t.value(b).row(0);
  n.backward = [x, w, b](Tape& tp, int self) {
    const Matrix& g = tp.mut(self).grad;
    if (tp.wants(w.id)) tp.accumulate(w.id, tp.value(x).transpose() * g);
    if (tp.wants(b.id)) tp.accumulate(b.id, g.colwise().sum());
    if (tp.wants(x.id)) tp.accumulate(x.id, g * tp.value(w).transpose());
  };
  return t.push(std::move(n));
}

/// Single-head self-attention over the time axis of each item.
inline Var self_attention(Tape& t, Var x, Var wq, Var wk, Var wv) {
  const Eigen::Index steps = t.steps(x);
  if (steps <= 0) throw ShapeError("self_attention: input is not a sequence");
  const Eigen::Index c = t.value(x).cols();
  if (t.value(wq).rows() != c || t.value(wk).rows() != c || t.value(wv).rows() != c) {
    throw ShapeError("self_attention: projection rows must equal channels C=" + std::to_string(c));
  }
  if (t.value(wq).cols() != t.value(wk).cols()) throw ShapeError("self_attention: query and key dims D differ");
  Tape::Node n;
  n.op = "self_attention";
  n.inputs = {x.id, wq.id, wk.id, wv.id};
  n.steps = steps;
  std::vector<Matrix> weights;
  Matrix q, k, v;
  n.value = kernels::self_attention(t.value(x), steps, t.value(wq), t.value(wk), t.value(wv), &weights, &q, &k, &v);
  n.saved = std::move(weights);
  n.saved.push_back(std::move(q));
  n.saved.push_back(std::move(k));
  n.saved.push_back(std::move(v));
  n.backward = [x, wq, wk, wv, steps](Tape& tp, int self) {
    auto& node = tp.mut(self);
    const Matrix& g = node.grad;
    const auto items = static_cast<Eigen::Index>(node.saved.size()) - 3;
    const Matrix& q = node.saved[static_cast<std::size_t>(items)];
    const Matrix& k = node.saved[static_cast<std::size_t>(items + 1)];
    const Matrix& v = node.saved[static_cast<std::size_t>(items + 2)];
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Matrix dq(q.rows(), q.cols()), dk(k.rows(), k.cols()), dv(v.rows(), v.cols());
    for (Eigen::Index b = 0; b < items; ++b) {
      const Matrix& a = node.saved[static_cast<std::size_t>(b)];
      const auto go = g.middleRows(b * steps, steps);
      dv.middleRows(b * steps, steps).noalias() = a.transpose() * go;
      const Matrix da = go * v.middleRows(b * steps, steps).transpose();
      const Eigen::VectorXd row_dot = (da.cwiseProduct(a)).rowwise().sum();
      const Matrix ds = a.cwiseProduct(da.colwise() - row_dot) * scale;
      dq.middleRows(b * steps, steps).noalias() = ds * k.middleRows(b * steps, steps);
      dk.middleRows(b * steps, steps).noalias() = ds.transpose() * q.middleRows(b * steps, steps);
    }
    const Matrix& xv = tp.value(x);
    if (tp.wants(wq.id)) tp.accumulate(wq.id, xv.transpose() * dq);
    if (tp.wants(wk.id)) tp.accumulate(wk.id, xv.transpose() * dk);
    if (tp.wants(wv.id)) tp.accumulate(wv.id, xv.transpose() * dv);
    if (tp.wants(x.id)) {
      tp.accumulate(x.id, dq * tp.value(wq).transpose() + dk * tp.value(wk).transpose() + dv * tp.value(wv).transpose());
    }
  };
  return t.push(std::move(n));
}

/// Attention weights of item `item` from a self_attention node.
inline const Matrix& attention_weights(const Tape& t, Var att, Eigen::Index item) {
  const auto& n = t.node(att);
  if (n.op != "self_attention") throw ShapeError("attention_weights: not a self_attention node");
  return n.saved.at(static_cast<std::size_t>(item));
}

inline Var add(Tape& t, Var a, Var b) {
  if (t.value(a).rows() != t.value(b).rows() || t.value(a).cols() != t.value(b).cols()) {
    throw ShapeError("add: " + kernels::dims(t.value(a)) + " vs " + kernels::dims(t.value(b)));
  }
  Tape::Node n;
  n.op = "add";
  n.inputs = {a.id, b.id};
  n.steps = t.steps(a);
  n.value = t.value(a) + t.value(b);
  n.backward = [a, b](Tape& tp, int self) {
    tp.accumulate(a.id, tp.mut(self).grad);
    tp.accumulate(b.id, tp.mut(self).grad);
  };
  return t.push(std::move(n));
}

/// Average over the time steps of each item: B*T x C -> B x C.
inline Var mean_pool_time(Tape& t, Var x) {
  const Eigen::Index steps = t.steps(x);
  if (steps <= 0) throw ShapeError("mean_pool_time: input is not a sequence");
  Tape::Node n;
  n.op = "mean_pool_time";
  n.inputs = {x.id};
  n.value = kernels::mean_pool(t.value(x), steps);
  n.backward = [x, steps](Tape& tp, int self) {
    const Matrix& g = tp.mut(self).grad;
    Matrix dx(g.rows() * steps, g.cols());
    for (Eigen::Index b = 0; b < g.rows(); ++b) {
      for (Eigen::Index s = 0; s < steps; ++s) dx.row(b * steps + s) = g.row(b) / static_cast<double>(steps);
    }
    tp.accumulate(x.id, dx);
  };
  return t.push(std::move(n));
}

/// mean((pred - target)^2) over all entries.
inline Var mse_loss(Tape& t, Var pred, const Matrix& target) {
  const Matrix& p = t.value(pred);
  if (p.rows() != target.rows() || p.cols() != target.cols()) {
    throw ShapeError("mse_loss: prediction " + kernels::dims(p) + " vs target " + kernels::dims(target));
  }
  Tape::Node n;
  n.op = "mse_loss";
  n.inputs = {pred.id};
  const Matrix diff = p - target;
  n.value = Matrix::Constant(1, 1, diff.squaredNorm() / static_cast<double>(diff.size()));
  n.saved.push_back(diff);
  n.backward = [pred](Tape& tp, int self) {
    const auto& node = tp.mut(self);
    const Matrix& diff = node.saved[0];
    tp.accumulate(pred.id, diff * (2.0 * node.grad(0, 0) / static_cast<double>(diff.size())));
  };
  return t.push(std::move(n));
}

/// sum(x .* r) for a constant r; a scalar probe for gradient checks.
inline Var weighted_sum(Tape& t, Var x, const Matrix& r) {
  if (t.value(x).rows() != r.rows() || t.value(x).cols() != r.cols()) throw ShapeError("weighted_sum: shape mismatch");
  Tape::Node n;
  n.op = "weighted_sum";
  n.inputs = {x.id};
  n.value = Matrix::Constant(1, 1, t.value(x).cwiseProduct(r).sum());
  n.saved.push_back(r);
  n.backward = [x](Tape& tp, int self) { tp.accumulate(x.id, tp.mut(self).saved[0] * tp.mut(self).grad(0, 0)); };
  return t.push(std::move(n));
}

}  // namespace bimodec::decode::ag
