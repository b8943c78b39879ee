#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mfos/linalg.hpp"

namespace mfos::ad {

// Handle to a tape node.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode record of matrix-valued operations. Nodes are appended in
// evaluation order, so reverse index order is a reverse topological order.
class Tape {
 public:
  // Receives the gradient of the node's output and pushes it into the
  // node's inputs through accumulate().
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

  Var constant(Matrix value);
  // Leaf whose gradient is kept after backward (parameters, probed inputs).
  Var leaf(Matrix value, bool requires_grad = true);
  // Generic node. requires_grad is inherited from the inputs.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);

  const Matrix& value(Var v) const;
  bool requires_grad(Var v) const;
  // Gradient of the last backward pass; zero matrix when nothing flowed.
  // Only leaves keep their gradient after backward().
  Matrix grad(Var v) const;
  bool has_grad(Var v) const;

  // Adds g into the gradient buffer of v (no-op if v does not need one).
  void accumulate(Var v, const Matrix& g);
  void accumulate_row(Var v, Eigen::Index row, const Eigen::Ref<const RowVector>& g);
  // Direct access to the (zero-initialized) gradient buffer of v.
  Matrix& grad_buffer(Var v);

  // Runs reverse mode from a 1x1 node with seed d(loss)/d(loss) = seed.
  void backward(Var loss, double seed = 1.0);
  // General seed with the shape of the output.
  void backward(Var out, const Matrix& seed);

  void set_label(Var v, std::string label);
  const std::string& label(Var v) const;
  // First node in [from, to] with a non-finite value, or -1.
  std::int32_t first_non_finite(std::int32_t from, std::int32_t to) const;

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool is_leaf = false;
    bool grad_live = false;
    BackwardFn backward;
    std::string label;
  };
  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
};

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);  // elementwise
Var scale(Tape& t, Var a, double s);
// a * w^T
Var matmul_nt(Tape& t, Var a, Var w);
// x * w^T + b, with b a 1 x out row broadcast over rows.
Var linear(Tape& t, Var x, Var w, Var b);
Var silu(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
// Rows are split into `groups` contiguous channel groups; gain/bias are 1 x C.
// An all-zero group normalizes to zero.
Var group_norm(Tape& t, Var x, Var gain, Var bias, int groups, double eps = 1e-5);
// out.row(r) = a.row(idx[r]).
Var gather_rows(Tape& t, Var a, std::vector<std::int32_t> idx);
Var concat_cols(Tape& t, Var a, Var b);
Var slice_cols(Tape& t, Var a, Eigen::Index start, Eigen::Index count);
// Row-major reinterpretation with the same number of entries.
Var reshape(Tape& t, Var a, Eigen::Index rows, Eigen::Index cols);
// r x 1 -> r x cols by repeating the column.
Var repeat_cols(Tape& t, Var a, Eigen::Index cols);
// Sum of all entries, 1 x 1.
Var sum(Tape& t, Var a);

// Standard sinusoidal position embedding of a scalar time, 1 x dim:
// [sin(n w_i), cos(n w_i)] with w_i = 10000^(-i / (dim/2)).
Matrix sinusoidal_embedding(double n, int dim);

}  // namespace mfos::ad
