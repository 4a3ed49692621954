#pragma once

// Matrix-granular reverse-mode differentiation. Each tape node holds one dense
// matrix; operations record a closure that pushes the node's gradient into its
// inputs. Nodes are appended in evaluation order, so walking the tape backwards
// is a reverse topological order.

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ledf/graph.hpp"
#include "ledf/matrix.hpp"

namespace ledf::ad {

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m;  // Adam first moment
  Matrix v;  // Adam second moment
};

/// Named trainable matrices with gradient slots and optimizer state.
class ParamStore {
 public:
  Param& add(const std::string& name, Matrix init);
  Param& get(const std::string& name);
  const Param& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::deque<Param>& all() { return params_; }
  const std::deque<Param>& all() const { return params_; }

  void zero_grad();
  std::int64_t step = 0;

 private:
  std::deque<Param> params_;  // stable addresses for tape leaves
};

class Tape;

/// Handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Var constant(Matrix value);
  Var param(Param& p);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Records a node computed from `inputs`; `back` runs only if some input needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward back);
  Var record(Matrix value, const std::vector<Var>& inputs, Backward back);

  /// Adds g into the gradient of node id (no-op for nodes that need none).
  void accumulate(std::size_t id, const Matrix& g);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse
  /// order; parameter gradients are added into their Param::grad.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Backward back;
    Param* param = nullptr;
  };
  std::deque<Node> nodes_;
};

// Differentiable operations.

Var matmul(Var x, Var w);                       // dense affine map without bias
Var mode3_product(Var tensor, Var w);           // tensor stored as (n*c) x s
Var spmm(const CsrMatrix& a, Var x);            // a must be symmetric
Var relu(Var x);
Var dropout(Var x, double p, bool training, std::mt19937_64& rng);
Var add(Var a, Var b);
Var add_row_bias(Var x, Var bias);              // bias is 1 x cols
Var scale(Var x, double s);
Var affine_scalar(Var x, double a, double b);   // a * x + b elementwise
Var row_scale(Var weights, Var x);              // diag(weights) * x, weights n x 1
Var concat_cols(const std::vector<Var>& cols);
Var column(Var x, std::size_t j);
Var row_softmax(Var x);
Var reshape(Var x, std::size_t rows, std::size_t cols);

/// Stacks s matrices of shape n x c into an (n*c) x s tensor.
Var stack_slices(const std::vector<Var>& slices);
/// Per-node convex combination: out[i,:] = sum_q w[i,q] * slices[q][i,:].
Var weighted_slice_sum(const std::vector<Var>& slices, Var weights);
Var mean_slices(const std::vector<Var>& slices);
Var max_slices(const std::vector<Var>& slices);

/// Mean cross-entropy over the listed rows (1 x 1 result).
Var softmax_ce(Var logits, const std::vector<int>& labels, const std::vector<std::size_t>& rows);

struct AdamOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with bias correction; weight decay enters as an L2 term added to the
/// gradient. Clears gradients afterwards.
void adam_step(ParamStore& store, const AdamOptions& opt);

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients with central differences (step 1e-5
/// relative to max(1, |theta|)). Relative error uses max(|a|, |n|, 1e-6) as
/// the denominator. `loss` must rebuild the computation on the tape it is
/// given and be deterministic across calls.
GradcheckReport gradcheck(ParamStore& store, const std::function<Var(Tape&)>& loss);

}  // namespace ledf::ad
