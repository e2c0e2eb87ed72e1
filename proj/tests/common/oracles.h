#pragma once

// Scalar reference implementations written independently of the library
// kernels: plain loops, no autodiff, no Eigen expressions beyond storage.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "topicmatch/autograd.h"
#include "topicmatch/nn.h"
#include "topicmatch/topic_matcher.h"

namespace topicmatch::oracle {

using Mat = ag::Matrix;

inline std::vector<double> softmax(const std::vector<double>& x) {
  double m = -INFINITY;
  for (double v : x) m = std::max(m, v);
  std::vector<double> e(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(x[i] - m);
    z += e[i];
  }
  for (double& v : e) v /= z;
  return e;
}

inline Mat dual_softmax(const Mat& a, const Mat& b, double temperature) {
  const auto na = a.rows(), nb = b.rows();
  Mat s(na, nb);
  for (ag::Index i = 0; i < na; ++i) {
    for (ag::Index j = 0; j < nb; ++j) {
      double d = 0.0;
      for (ag::Index c = 0; c < a.cols(); ++c) d += a(i, c) * b(j, c);
      s(i, j) = d / temperature;
    }
  }
  Mat p(na, nb);
  for (ag::Index i = 0; i < na; ++i) {
    for (ag::Index j = 0; j < nb; ++j) {
      std::vector<double> row(static_cast<std::size_t>(nb)), col(static_cast<std::size_t>(na));
      for (ag::Index k = 0; k < nb; ++k) row[static_cast<std::size_t>(k)] = s(i, k);
      for (ag::Index k = 0; k < na; ++k) col[static_cast<std::size_t>(k)] = s(k, j);
      p(i, j) = softmax(row)[static_cast<std::size_t>(j)] * softmax(col)[static_cast<std::size_t>(i)];
    }
  }
  return p;
}

// Mutual nearest neighbours by exhaustive double loop, ties to the lower index.
inline std::vector<std::pair<int, int>> mutual_nn(const Mat& p, double tau) {
  std::vector<std::pair<int, int>> out;
  for (ag::Index i = 0; i < p.rows(); ++i) {
    ag::Index best_j = 0;
    for (ag::Index j = 1; j < p.cols(); ++j) {
      if (p(i, j) > p(i, best_j)) best_j = j;
    }
    ag::Index best_i = 0;
    for (ag::Index k = 1; k < p.rows(); ++k) {
      if (p(k, best_j) > p(best_i, best_j)) best_i = k;
    }
    if (best_i == i && p(i, best_j) >= tau) out.emplace_back(static_cast<int>(i), static_cast<int>(best_j));
  }
  return out;
}

// Indices of the k largest products a_k b_k by full sort, ties to the lower index.
inline std::vector<int> top_k_products(const Eigen::VectorXd& a, const Eigen::VectorXd& b, int k) {
  std::vector<std::pair<double, int>> scored;
  for (int t = 0; t < a.size(); ++t) scored.emplace_back(a(t) * b(t), t);
  std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first > y.first : x.second < y.second;
  });
  std::vector<int> out;
  for (int t = 0; t < k; ++t) out.push_back(scored[static_cast<std::size_t>(t)].second);
  return out;
}

// sum_k theta(n, k) * topics(k, :)
inline Mat expected_context(const Mat& theta, const Mat& topics) {
  Mat out = Mat::Zero(theta.rows(), topics.cols());
  for (ag::Index n = 0; n < theta.rows(); ++n) {
    for (ag::Index k = 0; k < theta.cols(); ++k) {
      for (ag::Index d = 0; d < topics.cols(); ++d) out(n, d) += theta(n, k) * topics(k, d);
    }
  }
  return out;
}

inline Mat linear(const Mat& x, const Linear& l) {
  const Mat& w = l.weight.value();
  const Mat& b = l.bias.value();
  Mat out(x.rows(), w.cols());
  for (ag::Index r = 0; r < x.rows(); ++r) {
    for (ag::Index o = 0; o < w.cols(); ++o) {
      double acc = b(0, o);
      for (ag::Index i = 0; i < w.rows(); ++i) acc += x(r, i) * w(i, o);
      out(r, o) = acc;
    }
  }
  return out;
}

inline Mat layer_norm(const Mat& x, const LayerNorm& ln) {
  Mat out(x.rows(), x.cols());
  for (ag::Index r = 0; r < x.rows(); ++r) {
    double mu = 0.0;
    for (ag::Index c = 0; c < x.cols(); ++c) mu += x(r, c);
    mu /= static_cast<double>(x.cols());
    double var = 0.0;
    for (ag::Index c = 0; c < x.cols(); ++c) var += (x(r, c) - mu) * (x(r, c) - mu);
    var /= static_cast<double>(x.cols());
    for (ag::Index c = 0; c < x.cols(); ++c) {
      out(r, c) = (x(r, c) - mu) / std::sqrt(var + 1e-5) * ln.gain.value()(0, c) + ln.shift.value()(0, c);
    }
  }
  return out;
}

inline double gelu(double v) {
  return 0.5 * v * (1.0 + std::tanh(0.7978845608028654 * (v + 0.044715 * v * v * v)));
}

inline Mat mlp(const Mat& x, const Mlp& m) {
  Mat h = linear(x, m.fc1);
  for (ag::Index i = 0; i < h.size(); ++i) h.data()[i] = gelu(h.data()[i]);
  return linear(h, m.fc2);
}

// Multi-head scaled dot-product attention of every query row over all source
// rows, evaluated one (query, head) pair at a time.
inline Mat attention(const AttentionParams& p, const Mat& query, const Mat& source) {
  const AttentionOptions& o = p.options;
  const Mat q_in = o.pre_norm ? layer_norm(query, p.norm_query) : query;
  const Mat s_in = o.pre_norm ? layer_norm(source, p.norm_source) : source;
  const Mat q = linear(q_in, p.query), k = linear(s_in, p.key), v = linear(s_in, p.value);
  const ag::Index dim = query.cols(), dh = dim / o.heads;
  Mat mixed(query.rows(), dim);
  for (ag::Index n = 0; n < query.rows(); ++n) {
    for (int h = 0; h < o.heads; ++h) {
      std::vector<double> logits(static_cast<std::size_t>(source.rows()));
      for (ag::Index m = 0; m < source.rows(); ++m) {
        double d = 0.0;
        for (ag::Index c = 0; c < dh; ++c) d += q(n, h * dh + c) * k(m, h * dh + c);
        logits[static_cast<std::size_t>(m)] = d / std::sqrt(static_cast<double>(dh));
      }
      const auto w = softmax(logits);
      for (ag::Index c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (ag::Index m = 0; m < source.rows(); ++m) acc += w[static_cast<std::size_t>(m)] * v(m, h * dh + c);
        mixed(n, h * dh + c) = acc;
      }
    }
  }
  Mat x = linear(mixed, p.output);
  if (o.residual) x += query;
  if (o.feed_forward) x += mlp(o.pre_norm ? layer_norm(x, p.norm_ffn) : x, p.ffn);
  return x;
}

}  // namespace topicmatch::oracle
