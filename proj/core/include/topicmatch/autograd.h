#pragma once

// Minimal reverse-mode automatic differentiation over dense float64 matrices.
//
// A Var is a handle to a node in a dynamically built graph. Operations on
// Vars allocate new nodes; a node remembers how to push its gradient to its
// parents only when at least one parent requires a gradient, so evaluation
// with constant inputs builds no backward closures.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace topicmatch::ag {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
  template <typename Expr>
  void accumulate_expr(const Expr& g) {
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    grad += g;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  // Gradient after backward(); zero-sized if nothing flowed into this node.
  const Matrix& grad() const { return node_->grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  double scalar() const { return node_->value(0, 0); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// A persistent trainable tensor. The leaf node survives across graph builds;
// its grad accumulates until zero_grad().
class Parameter {
 public:
  Parameter() : node_(std::make_shared<Node>()) { node_->requires_grad = true; }
  explicit Parameter(Matrix init) : Parameter() { node_->value = std::move(init); }

  // Copies are deep: a copied model never aliases the original's storage.
  Parameter(const Parameter& other) : Parameter() {
    node_->value = other.node_->value;
    node_->requires_grad = other.node_->requires_grad;
  }
  Parameter& operator=(const Parameter& other) {
    if (this != &other) {
      node_->value = other.node_->value;
      node_->requires_grad = other.node_->requires_grad;
      node_->grad.resize(0, 0);
    }
    return *this;
  }
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  Var var() const { return Var(node_); }
  Matrix& value() { return node_->value; }
  const Matrix& value() const { return node_->value; }
  Matrix& grad() {
    if (node_->grad.size() == 0) node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
    return node_->grad;
  }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool has_grad() const { return node_->grad.size() != 0; }
  void set_trainable(bool trainable) { node_->requires_grad = trainable; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Matrix value);
Var scalar_constant(double v);

// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to every reachable
// node that requires a gradient.
void backward(const Var& root);

// Linear algebra. MACs are reported to the active MacCounter.
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var transpose(const Var& a);

// Elementwise.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var square(const Var& a);
Var gelu(const Var& a);
Var log_clamped(const Var& a, double eps);  // log(max(a, eps))
Var clamp_min(const Var& a, double floor);   // max(a, floor)

// Broadcasting.
Var add_row(const Var& a, const Var& row);  // row: 1 x cols
Var mul_row(const Var& a, const Var& row);
Var add_col(const Var& a, const Var& col);  // col: rows x 1
Var mul_col(const Var& a, const Var& col);

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);
Var sum_cols(const Var& a);  // rows x 1, sum across each row
Var sum_rows(const Var& a);  // 1 x cols, sum down each column
Var row_dot(const Var& a, const Var& b);  // rows x 1

// Softmax along each row. -infinity entries receive zero probability; a row
// that is entirely -infinity is a caller error.
Var softmax_rows(const Var& a);
// Per-row standardization to zero mean and unit variance (no affine).
Var normalize_rows(const Var& a, double eps);

// Indexing. Index -1 in gather_rows produces a zero row.
Var gather_rows(const Var& a, std::span<const Index> rows);
Var scatter_rows(const Var& base, std::span<const Index> rows, const Var& src);
Var gather_elements(const Var& a, std::span<const std::pair<Index, Index>> cells);
Var slice_cols(const Var& a, Index start, Index count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var reshape(const Var& a, Index rows, Index cols);  // row-major reinterpretation

// Treats `a` as a stack of blocks of `block_rows` rows each and transposes
// every block: (m*r x c) -> (m*c x r).
Var block_transpose(const Var& a, Index block_rows);
// weights: m x n, blocks: (m*n x d) -> (m x d), out[i] = sum_k w[i,k] blocks[i*n+k].
Var block_weighted_sum(const Var& weights, const Var& blocks);
// queries: m x d, blocks: (m*n x d) -> (m x n), out[i,k] = <q[i], blocks[i*n+k]>.
Var block_dot(const Var& queries, const Var& blocks);

// Convolution over a single image stored channel-major as (channels x h*w).
// weight: (out_channels x in_channels*k*k); bias (optional): out_channels x 1.
struct ConvShape {
  int height = 0;
  int width = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};
Var conv2d(const Var& input, const Var& weight, const Var* bias, const ConvShape& shape);
// Nearest-neighbour x2 upsampling of a (channels x h*w) map.
Var upsample2x(const Var& input, int height, int width);

}  // namespace topicmatch::ag
