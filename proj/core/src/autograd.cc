#include "topicmatch/autograd.h"

#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

#include "topicmatch/errors.h"
#include "topicmatch/mac_counter.h"

namespace topicmatch::ag {
namespace {

using NodePtr = std::shared_ptr<Node>;
using Backward = std::function<void(Node&)>;

Var make(Matrix value, std::initializer_list<const Var*> inputs, Backward backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const Var* v : inputs) {
    if (v->requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const Var* v : inputs) {
      if (v->requires_grad()) node->parents.push_back(v->node());
    }
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

Var make_many(Matrix value, std::span<const Var> inputs, Backward backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const Var& v : inputs) {
    if (v.requires_grad()) {
      node->requires_grad = true;
      node->parents.push_back(v.node());
    }
  }
  if (node->requires_grad) node->backward = std::move(backward);
  return Var(std::move(node));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::kShapeError,
         std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
             std::to_string(b.cols()));
  }
}

void count(Index a, Index b, Index c) {
  count_macs(static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(b) *
             static_cast<std::uint64_t>(c));
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var scalar_constant(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

void backward(const Var& root) {
  require(root.rows() == 1 && root.cols() == 1, ErrorCode::kShapeError,
          "backward: root must be a scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Node* r = root.node().get();
  r->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() != 0) node->backward(*node);
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorCode::kShapeError, "matmul: inner dimensions " + std::to_string(a.cols()) +
                                     " and " + std::to_string(b.rows()));
  }
  count(a.rows(), a.cols(), b.cols());
  Matrix out = a.value() * b.value();
  NodePtr pa = a.node(), pb = b.node();
  return make(std::move(out), {&a, &b}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->accumulate_expr(self.grad * pb->value.transpose());
    if (pb->requires_grad) pb->accumulate_expr(pa->value.transpose() * self.grad);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) {
    fail(ErrorCode::kShapeError, "matmul_nt: inner dimensions " + std::to_string(a.cols()) +
                                     " and " + std::to_string(b.cols()));
  }
  count(a.rows(), a.cols(), b.rows());
  Matrix out = a.value() * b.value().transpose();
  NodePtr pa = a.node(), pb = b.node();
  return make(std::move(out), {&a, &b}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->accumulate_expr(self.grad * pb->value);
    if (pb->requires_grad) pb->accumulate_expr(self.grad.transpose() * pa->value);
  });
}

Var transpose(const Var& a) {
  Matrix out = a.value().transpose();
  NodePtr pa = a.node();
  return make(std::move(out), {&a},
              [pa](Node& self) { pa->accumulate_expr(self.grad.transpose()); });
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  NodePtr pa = a.node(), pb = b.node();
  return make(a.value() + b.value(), {&a, &b}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->accumulate(self.grad);
    if (pb->requires_grad) pb->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  NodePtr pa = a.node(), pb = b.node();
  return make(a.value() - b.value(), {&a, &b}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->accumulate(self.grad);
    if (pb->requires_grad) pb->accumulate_expr(-self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  NodePtr pa = a.node(), pb = b.node();
  return make(a.value().cwiseProduct(b.value()), {&a, &b}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->accumulate_expr(self.grad.cwiseProduct(pb->value));
    if (pb->requires_grad) pb->accumulate_expr(self.grad.cwiseProduct(pa->value));
  });
}

Var div(const Var& a, const Var& b) {
  check_same_shape(a, b, "div");
  NodePtr pa = a.node(), pb = b.node();
  return make(a.value().cwiseQuotient(b.value()), {&a, &b}, [pa, pb](Node& self) {
    if (pa->requires_grad) pa->accumulate_expr(self.grad.cwiseQuotient(pb->value));
    if (pb->requires_grad) {
      pb->accumulate_expr(-self.grad.cwiseProduct(pa->value).cwiseQuotient(
          pb->value.cwiseProduct(pb->value)));
    }
  });
}

Var scale(const Var& a, double s) {
  NodePtr pa = a.node();
  return make(a.value() * s, {&a}, [pa, s](Node& self) { pa->accumulate_expr(self.grad * s); });
}

Var add_scalar(const Var& a, double s) {
  NodePtr pa = a.node();
  return make(a.value().array() + s, {&a}, [pa](Node& self) { pa->accumulate(self.grad); });
}

Var square(const Var& a) {
  NodePtr pa = a.node();
  return make(a.value().cwiseAbs2(), {&a}, [pa](Node& self) {
    pa->accumulate_expr(2.0 * self.grad.cwiseProduct(pa->value));
  });
}

Var gelu(const Var& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  Matrix out(a.rows(), a.cols());
  const Matrix& x = a.value();
  for (Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
  }
  NodePtr pa = a.node();
  return make(std::move(out), {&a}, [pa](Node& self) {
    const Matrix& x = pa->value;
    Matrix g(x.rows(), x.cols());
    for (Index i = 0; i < x.size(); ++i) {
      const double v = x.data()[i];
      const double t = std::tanh(kC * (v + kA * v * v * v));
      const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
      g.data()[i] = self.grad.data()[i] * d;
    }
    pa->accumulate(g);
  });
}

Var log_clamped(const Var& a, double eps) {
  Matrix out = a.value().cwiseMax(eps).array().log();
  NodePtr pa = a.node();
  return make(std::move(out), {&a}, [pa, eps](Node& self) {
    const Matrix& x = pa->value;
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    for (Index i = 0; i < x.size(); ++i) {
      if (x.data()[i] > eps) g.data()[i] = self.grad.data()[i] / x.data()[i];
    }
    pa->accumulate(g);
  });
}

Var clamp_min(const Var& a, double floor) {
  Matrix out = a.value().cwiseMax(floor);
  NodePtr pa = a.node();
  return make(std::move(out), {&a}, [pa, floor](Node& self) {
    const Matrix& x = pa->value;
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    for (Index i = 0; i < x.size(); ++i) {
      if (x.data()[i] > floor) g.data()[i] = self.grad.data()[i];
    }
    pa->accumulate(g);
  });
}

// ---------------------------------------------------------------------------
// Broadcasting

Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), ErrorCode::kShapeError,
          "add_row: row vector width mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  NodePtr pa = a.node(), pr = row.node();
  return make(std::move(out), {&a, &row}, [pa, pr](Node& self) {
    if (pa->requires_grad) pa->accumulate(self.grad);
    if (pr->requires_grad) pr->accumulate_expr(self.grad.colwise().sum());
  });
}

Var mul_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), ErrorCode::kShapeError,
          "mul_row: row vector width mismatch");
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  NodePtr pa = a.node(), pr = row.node();
  return make(std::move(out), {&a, &row}, [pa, pr](Node& self) {
    if (pa->requires_grad) {
      pa->accumulate_expr(
          (self.grad.array().rowwise() * pr->value.row(0).array()).matrix());
    }
    if (pr->requires_grad) {
      pr->accumulate_expr(self.grad.cwiseProduct(pa->value).colwise().sum());
    }
  });
}

Var add_col(const Var& a, const Var& col) {
  require(col.cols() == 1 && col.rows() == a.rows(), ErrorCode::kShapeError,
          "add_col: column vector height mismatch");
  Matrix out = a.value().colwise() + col.value().col(0);
  NodePtr pa = a.node(), pc = col.node();
  return make(std::move(out), {&a, &col}, [pa, pc](Node& self) {
    if (pa->requires_grad) pa->accumulate(self.grad);
    if (pc->requires_grad) pc->accumulate_expr(self.grad.rowwise().sum());
  });
}

Var mul_col(const Var& a, const Var& col) {
  require(col.cols() == 1 && col.rows() == a.rows(), ErrorCode::kShapeError,
          "mul_col: column vector height mismatch");
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  NodePtr pa = a.node(), pc = col.node();
  return make(std::move(out), {&a, &col}, [pa, pc](Node& self) {
    if (pa->requires_grad) {
      pa->accumulate_expr(
          (self.grad.array().colwise() * pc->value.col(0).array()).matrix());
    }
    if (pc->requires_grad) {
      pc->accumulate_expr(self.grad.cwiseProduct(pa->value).rowwise().sum());
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  NodePtr pa = a.node();
  return make(std::move(out), {&a}, [pa](Node& self) {
    pa->accumulate_expr(Matrix::Constant(pa->value.rows(), pa->value.cols(), self.grad(0, 0)));
  });
}

Var mean(const Var& a) {
  require(a.value().size() > 0, ErrorCode::kShapeError, "mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var sum_cols(const Var& a) {
  Matrix out = a.value().rowwise().sum();
  NodePtr pa = a.node();
  return make(std::move(out), {&a}, [pa](Node& self) {
    pa->accumulate_expr(self.grad.col(0).replicate(1, pa->value.cols()));
  });
}

Var sum_rows(const Var& a) {
  Matrix out = a.value().colwise().sum();
  NodePtr pa = a.node();
  return make(std::move(out), {&a}, [pa](Node& self) {
    pa->accumulate_expr(self.grad.row(0).replicate(pa->value.rows(), 1));
  });
}

Var row_dot(const Var& a, const Var& b) {
  check_same_shape(a, b, "row_dot");
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  NodePtr pa = a.node(), pb = b.node();
  return make(std::move(out), {&a, &b}, [pa, pb](Node& self) {
    if (pa->requires_grad) {
      pa->accumulate_expr((pb->value.array().colwise() * self.grad.col(0).array()).matrix());
    }
    if (pb->requires_grad) {
      pb->accumulate_expr((pa->value.array().colwise() * self.grad.col(0).array()).matrix());
    }
  });
}

Var softmax_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    if (!(m > -std::numeric_limits<double>::infinity())) {
      fail(ErrorCode::kAllMasked, "softmax over a row with no finite entry");
    }
    double z = 0.0;
    for (Index c = 0; c < x.cols(); ++c) {
      const double e = std::exp(x(r, c) - m);
      out(r, c) = e;
      z += e;
    }
    out.row(r) /= z;
  }
  NodePtr pa = a.node();
  auto y = std::make_shared<Matrix>(out);
  return make(std::move(out), {&a}, [pa, y](Node& self) {
    Matrix gy = self.grad.cwiseProduct(*y);
    Eigen::VectorXd s = gy.rowwise().sum();
    Matrix g = gy - (y->array().colwise() * s.array()).matrix();
    pa->accumulate(g);
  });
}

Var normalize_rows(const Var& a, double eps) {
  const Matrix& x = a.value();
  const Index n = x.cols();
  require(n > 0, ErrorCode::kShapeError, "normalize_rows on zero-width input");
  Matrix out(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    out.row(r) = (x.row(r).array() - mu) * inv_std(r);
  }
  NodePtr pa = a.node();
  auto xhat = std::make_shared<Matrix>(out);
  return make(std::move(out), {&a}, [pa, xhat, inv_std](Node& self) {
    const Matrix& g = self.grad;
    const Index n = g.cols();
    Matrix dx(g.rows(), n);
    for (Index r = 0; r < g.rows(); ++r) {
      const double mg = g.row(r).mean();
      const double mgx = g.row(r).dot(xhat->row(r)) / static_cast<double>(n);
      dx.row(r) = inv_std(r) * (g.row(r).array() - mg - xhat->row(r).array() * mgx);
    }
    pa->accumulate(dx);
  });
}

// ---------------------------------------------------------------------------
// Indexing

Var gather_rows(const Var& a, std::span<const Index> rows) {
  Matrix out = Matrix::Zero(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Index r = rows[i];
    if (r < 0) continue;
    require(r < a.rows(), ErrorCode::kShapeError, "gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = a.value().row(r);
  }
  NodePtr pa = a.node();
  std::vector<Index> idx(rows.begin(), rows.end());
  return make(std::move(out), {&a}, [pa, idx = std::move(idx)](Node& self) {
    Matrix g = Matrix::Zero(pa->value.rows(), pa->value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= 0) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
    }
    pa->accumulate(g);
  });
}

Var scatter_rows(const Var& base, std::span<const Index> rows, const Var& src) {
  require(src.rows() == static_cast<Index>(rows.size()) && src.cols() == base.cols(),
          ErrorCode::kShapeError, "scatter_rows: source shape mismatch");
  Matrix out = base.value();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < base.rows(), ErrorCode::kShapeError,
            "scatter_rows: index out of range");
    out.row(rows[i]) = src.value().row(static_cast<Index>(i));
  }
  NodePtr pb = base.node(), ps = src.node();
  std::vector<Index> idx(rows.begin(), rows.end());
  return make(std::move(out), {&base, &src}, [pb, ps, idx = std::move(idx)](Node& self) {
    if (pb->requires_grad) {
      Matrix g = self.grad;
      for (Index r : idx) g.row(r).setZero();
      pb->accumulate(g);
    }
    if (ps->requires_grad) {
      Matrix g(static_cast<Index>(idx.size()), self.grad.cols());
      for (std::size_t i = 0; i < idx.size(); ++i) g.row(static_cast<Index>(i)) = self.grad.row(idx[i]);
      ps->accumulate(g);
    }
  });
}

Var gather_elements(const Var& a, std::span<const std::pair<Index, Index>> cells) {
  Matrix out(static_cast<Index>(cells.size()), 1);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto [r, c] = cells[i];
    require(r >= 0 && r < a.rows() && c >= 0 && c < a.cols(), ErrorCode::kShapeError,
            "gather_elements: index out of range");
    out(static_cast<Index>(i), 0) = a.value()(r, c);
  }
  NodePtr pa = a.node();
  std::vector<std::pair<Index, Index>> idx(cells.begin(), cells.end());
  return make(std::move(out), {&a}, [pa, idx = std::move(idx)](Node& self) {
    Matrix g = Matrix::Zero(pa->value.rows(), pa->value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      g(idx[i].first, idx[i].second) += self.grad(static_cast<Index>(i), 0);
    }
    pa->accumulate(g);
  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), ErrorCode::kShapeError,
          "slice_cols: range out of bounds");
  Matrix out = a.value().middleCols(start, count);
  NodePtr pa = a.node();
  return make(std::move(out), {&a}, [pa, start, count](Node& self) {
    Matrix g = Matrix::Zero(pa->value.rows(), pa->value.cols());
    g.middleCols(start, count) = self.grad;
    pa->accumulate(g);
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), ErrorCode::kShapeError, "concat_cols: no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, ErrorCode::kShapeError, "concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<NodePtr> nodes;
  std::vector<Index> offsets;
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(at);
    at += p.cols();
  }
  return make_many(std::move(out), parts, [nodes, offsets](Node& self) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i]->requires_grad) {
        nodes[i]->accumulate_expr(self.grad.middleCols(offsets[i], nodes[i]->value.cols()));
      }
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), ErrorCode::kShapeError, "concat_rows: no inputs");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const Var& p : parts) {
    require(p.cols() == cols, ErrorCode::kShapeError, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<NodePtr> nodes;
  std::vector<Index> offsets;
  Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(at);
    at += p.rows();
  }
  return make_many(std::move(out), parts, [nodes, offsets](Node& self) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i]->requires_grad) {
        nodes[i]->accumulate_expr(self.grad.middleRows(offsets[i], nodes[i]->value.rows()));
      }
    }
  });
}

Var reshape(const Var& a, Index rows, Index cols) {
  require(rows * cols == a.value().size(), ErrorCode::kShapeError, "reshape: size mismatch");
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  NodePtr pa = a.node();
  return make(std::move(out), {&a}, [pa](Node& self) {
    pa->accumulate_expr(
        Eigen::Map<const Matrix>(self.grad.data(), pa->value.rows(), pa->value.cols()));
  });
}

namespace {

Matrix block_transpose_value(const Matrix& a, Index block_rows) {
  const Index c = a.cols();
  const Index m = a.rows() / block_rows;
  Matrix out(m * c, block_rows);
  for (Index i = 0; i < m; ++i) {
    out.middleRows(i * c, c) = a.middleRows(i * block_rows, block_rows).transpose();
  }
  return out;
}

}  // namespace

Var block_transpose(const Var& a, Index block_rows) {
  require(block_rows > 0 && a.rows() % block_rows == 0, ErrorCode::kShapeError,
          "block_transpose: rows not divisible by block size");
  NodePtr pa = a.node();
  const Index c = a.cols();
  return make(block_transpose_value(a.value(), block_rows), {&a}, [pa, c](Node& self) {
    pa->accumulate(block_transpose_value(self.grad, c));
  });
}

Var block_weighted_sum(const Var& weights, const Var& blocks) {
  const Index m = weights.rows(), n = weights.cols(), d = blocks.cols();
  require(blocks.rows() == m * n, ErrorCode::kShapeError,
          "block_weighted_sum: block count mismatch");
  count(m, n, d);
  Matrix out(m, d);
  for (Index i = 0; i < m; ++i) {
    out.row(i) = weights.value().row(i) * blocks.value().middleRows(i * n, n);
  }
  NodePtr pw = weights.node(), pb = blocks.node();
  return make(std::move(out), {&weights, &blocks}, [pw, pb, m, n](Node& self) {
    if (pw->requires_grad) {
      Matrix g(m, n);
      for (Index i = 0; i < m; ++i) {
        g.row(i) = (pb->value.middleRows(i * n, n) * self.grad.row(i).transpose()).transpose();
      }
      pw->accumulate(g);
    }
    if (pb->requires_grad) {
      Matrix g(m * n, pb->value.cols());
      for (Index i = 0; i < m; ++i) {
        g.middleRows(i * n, n) = pw->value.row(i).transpose() * self.grad.row(i);
      }
      pb->accumulate(g);
    }
  });
}

Var block_dot(const Var& queries, const Var& blocks) {
  const Index m = queries.rows(), d = queries.cols();
  require(blocks.cols() == d && m > 0 && blocks.rows() % m == 0, ErrorCode::kShapeError,
          "block_dot: shape mismatch");
  const Index n = blocks.rows() / m;
  count(m, n, d);
  Matrix out(m, n);
  for (Index i = 0; i < m; ++i) {
    out.row(i) = (blocks.value().middleRows(i * n, n) * queries.value().row(i).transpose()).transpose();
  }
  NodePtr pq = queries.node(), pb = blocks.node();
  return make(std::move(out), {&queries, &blocks}, [pq, pb, m, n](Node& self) {
    if (pq->requires_grad) {
      Matrix g(m, pq->value.cols());
      for (Index i = 0; i < m; ++i) {
        g.row(i) = self.grad.row(i) * pb->value.middleRows(i * n, n);
      }
      pq->accumulate(g);
    }
    if (pb->requires_grad) {
      Matrix g(m * n, pb->value.cols());
      for (Index i = 0; i < m; ++i) {
        g.middleRows(i * n, n) = self.grad.row(i).transpose() * pq->value.row(i);
      }
      pb->accumulate(g);
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

Matrix im2col(const Matrix& x, const ConvShape& s) {
  const int k = s.kernel, ho = s.out_height(), wo = s.out_width();
  const Index channels = x.rows();
  Matrix cols = Matrix::Zero(channels * k * k, static_cast<Index>(ho) * wo);
  for (Index c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Index row = (c * k + ky) * k + kx;
        double* dst = cols.row(row).data();
        const double* src = x.row(c).data();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s.stride + ky - s.pad;
          if (iy < 0 || iy >= s.height) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s.stride + kx - s.pad;
            if (ix < 0 || ix >= s.width) continue;
            dst[oy * wo + ox] = src[iy * s.width + ix];
          }
        }
      }
    }
  }
  return cols;
}

Matrix col2im(const Matrix& cols, Index channels, const ConvShape& s) {
  const int k = s.kernel, ho = s.out_height(), wo = s.out_width();
  Matrix x = Matrix::Zero(channels, static_cast<Index>(s.height) * s.width);
  for (Index c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Index row = (c * k + ky) * k + kx;
        const double* src = cols.row(row).data();
        double* dst = x.row(c).data();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s.stride + ky - s.pad;
          if (iy < 0 || iy >= s.height) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s.stride + kx - s.pad;
            if (ix < 0 || ix >= s.width) continue;
            dst[iy * s.width + ix] += src[oy * wo + ox];
          }
        }
      }
    }
  }
  return x;
}

}  // namespace

Var conv2d(const Var& input, const Var& weight, const Var* bias, const ConvShape& s) {
  const Index cin = input.rows();
  const Index k2 = static_cast<Index>(s.kernel) * s.kernel;
  require(input.cols() == static_cast<Index>(s.height) * s.width, ErrorCode::kShapeError,
          "conv2d: input spatial size mismatch");
  require(weight.cols() == cin * k2, ErrorCode::kShapeError,
          "conv2d: weight shape inconsistent with input channels");
  const Index cout = weight.rows();
  const Index spatial = static_cast<Index>(s.out_height()) * s.out_width();
  count(cout, cin * k2, spatial);

  const bool direct = s.kernel == 1 && s.stride == 1 && s.pad == 0;
  auto cols = std::make_shared<Matrix>(direct ? input.value() : im2col(input.value(), s));
  Matrix out = weight.value() * (*cols);
  if (bias != nullptr) {
    require(bias->rows() == cout && bias->cols() == 1, ErrorCode::kShapeError,
            "conv2d: bias shape mismatch");
    out.colwise() += bias->value().col(0);
  }
  NodePtr pi = input.node(), pw = weight.node();
  NodePtr pb = bias != nullptr ? bias->node() : nullptr;
  Var none;
  const Var& b = bias != nullptr ? *bias : none;
  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->requires_grad = input.requires_grad() || weight.requires_grad() || b.requires_grad();
  if (node->requires_grad) {
    if (input.requires_grad()) node->parents.push_back(pi);
    if (weight.requires_grad()) node->parents.push_back(pw);
    if (b.requires_grad()) node->parents.push_back(pb);
    node->backward = [pi, pw, pb, cols, s, direct](Node& self) {
      if (pw->requires_grad) pw->accumulate_expr(self.grad * cols->transpose());
      if (pb && pb->requires_grad) pb->accumulate_expr(self.grad.rowwise().sum());
      if (pi->requires_grad) {
        Matrix dcols = pw->value.transpose() * self.grad;
        if (direct) {
          pi->accumulate(dcols);
        } else {
          pi->accumulate(col2im(dcols, pi->value.rows(), s));
        }
      }
    };
  }
  return Var(std::move(node));
}

Var upsample2x(const Var& input, int height, int width) {
  require(input.cols() == static_cast<Index>(height) * width, ErrorCode::kShapeError,
          "upsample2x: spatial size mismatch");
  const Index channels = input.rows();
  const int w2 = 2 * width;
  Matrix out(channels, static_cast<Index>(4) * height * width);
  for (Index c = 0; c < channels; ++c) {
    const double* src = input.value().row(c).data();
    double* dst = out.row(c).data();
    for (int y = 0; y < 2 * height; ++y) {
      for (int x = 0; x < w2; ++x) dst[y * w2 + x] = src[(y / 2) * width + x / 2];
    }
  }
  NodePtr pi = input.node();
  return make(std::move(out), {&input}, [pi, height, width](Node& self) {
    const int w2 = 2 * width;
    Matrix g = Matrix::Zero(pi->value.rows(), pi->value.cols());
    for (Index c = 0; c < g.rows(); ++c) {
      const double* src = self.grad.row(c).data();
      double* dst = g.row(c).data();
      for (int y = 0; y < 2 * height; ++y) {
        for (int x = 0; x < w2; ++x) dst[(y / 2) * width + x / 2] += src[y * w2 + x];
      }
    }
    pi->accumulate(g);
  });
}

}  // namespace topicmatch::ag
