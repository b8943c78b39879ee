#include "mfos/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mfos::ad {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
}

double logistic(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw std::out_of_range("tape: invalid variable");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Tape::Node& Tape::node(Var v) {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw std::out_of_range("tape: invalid variable");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::constant(Matrix value) { return leaf(std::move(value), false); }

Var Tape::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (Var in : inputs) n.requires_grad = n.requires_grad || node(in).requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

bool Tape::has_grad(Var v) const { return node(v).grad_live; }

Matrix Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad_live) return n.grad;
  return Matrix::Zero(n.value.rows(), n.value.cols());
}

Matrix& Tape::grad_buffer(Var v) {
  Node& n = node(v);
  if (!n.grad_live) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad_live = true;
  }
  return n.grad;
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  check_same_shape(n.value, g, "accumulate");
  if (!n.grad_live) {
    n.grad = g;
    n.grad_live = true;
  } else {
    n.grad += g;
  }
}

void Tape::accumulate_row(Var v, Eigen::Index row, const Eigen::Ref<const RowVector>& g) {
  if (!node(v).requires_grad) return;
  grad_buffer(v).row(row) += g;
}

void Tape::backward(Var loss, double seed) {
  const Matrix& out = value(loss);
  if (out.rows() != 1 || out.cols() != 1) throw std::invalid_argument("backward: loss must be a 1x1 node");
  backward(loss, Matrix::Constant(1, 1, seed));
}

void Tape::backward(Var out, const Matrix& seed) {
  if (nodes_.empty()) throw std::logic_error("backward called before any forward computation");
  Node& root = node(out);
  check_same_shape(root.value, seed, "backward seed");
  for (Node& n : nodes_) {
    n.grad_live = false;
    n.grad.resize(0, 0);
  }
  if (!root.requires_grad) return;
  root.grad = seed;
  root.grad_live = true;
  for (std::int32_t i = out.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.grad_live || n.is_leaf || !n.backward) continue;
    Matrix g = std::move(n.grad);
    n.grad_live = false;
    n.grad.resize(0, 0);
    n.backward(*this, g);
  }
}

void Tape::set_label(Var v, std::string label) { node(v).label = std::move(label); }

const std::string& Tape::label(Var v) const { return node(v).label; }

std::int32_t Tape::first_non_finite(std::int32_t from, std::int32_t to) const {
  for (std::int32_t i = std::max(from, 0); i <= to && static_cast<std::size_t>(i) < nodes_.size(); ++i) {
    if (!nodes_[static_cast<std::size_t>(i)].value.allFinite()) return i;
  }
  return -1;
}

Var add(Tape& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "add");
  return t.record(t.value(a) + t.value(b), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "sub");
  return t.record(t.value(a) - t.value(b), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -g);
  });
}

Var mul(Tape& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "mul");
  return t.record(t.value(a).cwiseProduct(t.value(b)), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
  });
}

Var scale(Tape& t, Var a, double s) {
  return t.record(t.value(a) * s, {a}, [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a, g * s); });
}

Var matmul_nt(Tape& t, Var a, Var w) {
  const Matrix& av = t.value(a);
  const Matrix& wv = t.value(w);
  if (av.cols() != wv.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Matrix out(av.rows(), wv.rows());
  out.noalias() = av * wv.transpose();
  return t.record(std::move(out), {a, w}, [a, w](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) {
      Matrix ga(g.rows(), tp.value(w).cols());
      ga.noalias() = g * tp.value(w);
      tp.accumulate(a, ga);
    }
    if (tp.requires_grad(w)) tp.grad_buffer(w).noalias() += g.transpose() * tp.value(a);
  });
}

Var linear(Tape& t, Var x, Var w, Var b) {
  const Matrix& xv = t.value(x);
  const Matrix& wv = t.value(w);
  const Matrix& bv = t.value(b);
  if (xv.cols() != wv.cols()) throw std::invalid_argument("linear: input width does not match weight");
  if (bv.rows() != 1 || bv.cols() != wv.rows()) throw std::invalid_argument("linear: bias shape mismatch");
  Matrix out(xv.rows(), wv.rows());
  out.noalias() = xv * wv.transpose();
  out.rowwise() += bv.row(0);
  return t.record(std::move(out), {x, w, b}, [x, w, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(x)) {
      Matrix gx(g.rows(), tp.value(w).cols());
      gx.noalias() = g * tp.value(w);
      tp.accumulate(x, gx);
    }
    if (tp.requires_grad(w)) tp.grad_buffer(w).noalias() += g.transpose() * tp.value(x);
    if (tp.requires_grad(b)) tp.grad_buffer(b) += g.colwise().sum();
  });
}

Var silu(Tape& t, Var a) {
  const Matrix& av = t.value(a);
  Matrix out = av.unaryExpr([](double v) { return v * logistic(v); });
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
    const Matrix& v = tp.value(a);
    Matrix d = v.unaryExpr([](double u) {
      const double s = logistic(u);
      return s * (1.0 + u * (1.0 - s));
    });
    tp.accumulate(a, g.cwiseProduct(d));
  });
}

Var sigmoid(Tape& t, Var a) {
  Matrix out = t.value(a).unaryExpr([](double v) { return logistic(v); });
  const std::int32_t self = static_cast<std::int32_t>(t.size());
  return t.record(std::move(out), {a}, [a, self](Tape& tp, const Matrix& g) {
    const Matrix& s = tp.value(Var{self});
    tp.accumulate(a, g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
  });
}

Var group_norm(Tape& t, Var x, Var gain, Var bias, int groups, double eps) {
  const Matrix& xv = t.value(x);
  const Eigen::Index rows = xv.rows();
  const Eigen::Index cols = xv.cols();
  if (groups <= 0 || cols % groups != 0) throw std::invalid_argument("group_norm: channels not divisible by groups");
  if (t.value(gain).cols() != cols || t.value(bias).cols() != cols) throw std::invalid_argument("group_norm: affine shape");
  const Eigen::Index m = cols / groups;
  Matrix xhat(rows, cols);
  Matrix inv(rows, groups);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index gi = 0; gi < groups; ++gi) {
      auto seg = xv.row(r).segment(gi * m, m);
      const double mean = seg.mean();
      const double var = (seg.array() - mean).square().mean();
      const double iv = 1.0 / std::sqrt(var + eps);
      inv(r, gi) = iv;
      xhat.row(r).segment(gi * m, m) = (seg.array() - mean) * iv;
    }
  }
  Matrix out = xhat;
  out.array().rowwise() *= t.value(gain).row(0).array();
  out.rowwise() += t.value(bias).row(0);
  return t.record(std::move(out), {x, gain, bias},
                  [x, gain, bias, groups, m, xhat = std::move(xhat), inv = std::move(inv)](Tape& tp, const Matrix& g) {
                    if (tp.requires_grad(gain)) tp.grad_buffer(gain) += g.cwiseProduct(xhat).colwise().sum();
                    if (tp.requires_grad(bias)) tp.grad_buffer(bias) += g.colwise().sum();
                    if (!tp.requires_grad(x)) return;
                    Matrix dxhat = g;
                    dxhat.array().rowwise() *= tp.value(gain).row(0).array();
                    Matrix dx(g.rows(), g.cols());
                    const double md = static_cast<double>(m);
                    for (Eigen::Index r = 0; r < g.rows(); ++r) {
                      for (Eigen::Index gi = 0; gi < groups; ++gi) {
                        auto dh = dxhat.row(r).segment(gi * m, m).array();
                        auto xh = xhat.row(r).segment(gi * m, m).array();
                        const double s1 = dh.sum();
                        const double s2 = (dh * xh).sum();
                        dx.row(r).segment(gi * m, m) = (inv(r, gi) / md) * (md * dh - s1 - xh * s2);
                      }
                    }
                    tp.accumulate(x, dx);
                  });
}

Var gather_rows(Tape& t, Var a, std::vector<std::int32_t> idx) {
  const Matrix& av = t.value(a);
  Matrix out(static_cast<Eigen::Index>(idx.size()), av.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= av.rows()) throw std::out_of_range("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(r)) = av.row(idx[r]);
  }
  return t.record(std::move(out), {a}, [a, idx = std::move(idx)](Tape& tp, const Matrix& g) {
    if (!tp.requires_grad(a)) return;
    Matrix& buf = tp.grad_buffer(a);
    for (std::size_t r = 0; r < idx.size(); ++r) buf.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
  });
}

Var concat_cols(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  if (av.rows() != bv.rows()) throw std::invalid_argument("concat_cols: row mismatch");
  Matrix out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  const Eigen::Index ca = av.cols();
  const Eigen::Index cb = bv.cols();
  return t.record(std::move(out), {a, b}, [a, b, ca, cb](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.leftCols(ca));
    if (tp.requires_grad(b)) tp.accumulate(b, g.rightCols(cb));
  });
}

Var slice_cols(Tape& t, Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& av = t.value(a);
  if (start < 0 || count < 0 || start + count > av.cols()) throw std::out_of_range("slice_cols: range");
  return t.record(av.middleCols(start, count), {a}, [a, start, count](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.grad_buffer(a).middleCols(start, count) += g;
  });
}

Var reshape(Tape& t, Var a, Eigen::Index rows, Eigen::Index cols) {
  const Matrix& av = t.value(a);
  if (rows * cols != av.size()) throw std::invalid_argument("reshape: size mismatch");
  Matrix out = Eigen::Map<const Matrix>(av.data(), rows, cols);
  const Eigen::Index r0 = av.rows();
  const Eigen::Index c0 = av.cols();
  return t.record(std::move(out), {a}, [a, r0, c0](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Eigen::Map<const Matrix>(g.data(), r0, c0));
  });
}

Var repeat_cols(Tape& t, Var a, Eigen::Index cols) {
  const Matrix& av = t.value(a);
  if (av.cols() != 1) throw std::invalid_argument("repeat_cols: input must be a column");
  Matrix out = av.replicate(1, cols);
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g.rowwise().sum()); });
}

Var sum(Tape& t, Var a) {
  Matrix out = Matrix::Constant(1, 1, t.value(a).sum());
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
    const Matrix& v = tp.value(a);
    tp.accumulate(a, Matrix::Constant(v.rows(), v.cols(), g(0, 0)));
  });
}

Matrix sinusoidal_embedding(double n, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw std::invalid_argument("sinusoidal_embedding: dim must be positive and even");
  const int half = dim / 2;
  Matrix out(1, dim);
  for (int i = 0; i < half; ++i) {
    const double w = std::pow(10000.0, -static_cast<double>(i) / half);
    out(0, i) = std::sin(n * w);
    out(0, half + i) = std::cos(n * w);
  }
  return out;
}

}  // namespace mfos::ad
