#include <gtest/gtest.h>

#include <functional>
#include <string>

#include "test_util.h"
#include "topicmatch/autograd.h"
#include "topicmatch/errors.h"
#include "topicmatch/mac_counter.h"

using namespace topicmatch;
using topicmatch::testing::grad_check;
using topicmatch::testing::random_matrix;

namespace {

struct OpCase {
  std::string name;
  std::function<ag::Var(const ag::Var&, const ag::Var&)> op;
  ag::Index ar, ac, br, bc;
};

// Reduces any output to a scalar with fixed random weights so every entry of
// the output gradient differs.
ag::Var weighted_sum(const ag::Var& y, std::uint64_t seed) {
  Rng rng(seed);
  return ag::sum(ag::mul(y, ag::constant(random_matrix(rng, y.rows(), y.cols()))));
}

}  // namespace

TEST(Autograd, ElementaryOpsMatchFiniteDifferences) {
  const std::vector<OpCase> cases = {
      {"matmul", [](auto& a, auto& b) { return ag::matmul(a, b); }, 3, 4, 4, 5},
      {"matmul_nt", [](auto& a, auto& b) { return ag::matmul_nt(a, b); }, 3, 4, 5, 4},
      {"add", [](auto& a, auto& b) { return ag::add(a, b); }, 3, 4, 3, 4},
      {"sub", [](auto& a, auto& b) { return ag::sub(a, b); }, 3, 4, 3, 4},
      {"mul", [](auto& a, auto& b) { return ag::mul(a, b); }, 3, 4, 3, 4},
      {"div", [](auto& a, auto& b) { return ag::div(a, ag::add_scalar(ag::square(b), 1.0)); }, 3, 4, 3, 4},
      {"add_row", [](auto& a, auto& b) { return ag::add_row(a, b); }, 3, 4, 1, 4},
      {"mul_row", [](auto& a, auto& b) { return ag::mul_row(a, b); }, 3, 4, 1, 4},
      {"add_col", [](auto& a, auto& b) { return ag::add_col(a, b); }, 3, 4, 3, 1},
      {"mul_col", [](auto& a, auto& b) { return ag::mul_col(a, b); }, 3, 4, 3, 1},
      {"row_dot", [](auto& a, auto& b) { return ag::row_dot(a, b); }, 3, 4, 3, 4},
      {"softmax_rows", [](auto& a, auto& b) { return ag::mul(ag::softmax_rows(a), b); }, 3, 4, 3, 4},
      {"normalize_rows", [](auto& a, auto&) { return ag::normalize_rows(a, 1e-5); }, 3, 6, 1, 1},
      {"gelu", [](auto& a, auto&) { return ag::gelu(a); }, 3, 4, 1, 1},
      {"transpose", [](auto& a, auto&) { return ag::transpose(a); }, 3, 4, 1, 1},
      {"sum_cols", [](auto& a, auto&) { return ag::sum_cols(a); }, 3, 4, 1, 1},
      {"sum_rows", [](auto& a, auto&) { return ag::sum_rows(a); }, 3, 4, 1, 1},
      {"mean", [](auto& a, auto&) { return ag::mean(a); }, 3, 4, 1, 1},
      {"scale", [](auto& a, auto&) { return ag::scale(a, -2.5); }, 3, 4, 1, 1},
      {"log_clamped", [](auto& a, auto&) { return ag::log_clamped(ag::add_scalar(ag::square(a), 0.5), 1e-6); }, 3, 4, 1, 1},
      {"reshape", [](auto& a, auto&) { return ag::reshape(a, 2, 6); }, 3, 4, 1, 1},
      {"slice_cols", [](auto& a, auto&) { return ag::slice_cols(a, 1, 2); }, 3, 4, 1, 1},
      {"concat_cols", [](auto& a, auto& b) { const ag::Var p[] = {a, b}; return ag::concat_cols(p); }, 3, 4, 3, 2},
      {"concat_rows", [](auto& a, auto& b) { const ag::Var p[] = {a, b}; return ag::concat_rows(p); }, 3, 4, 2, 4},
      {"block_transpose", [](auto& a, auto&) { return ag::block_transpose(a, 3); }, 6, 4, 1, 1},
      {"block_weighted_sum", [](auto& a, auto& b) { return ag::block_weighted_sum(a, b); }, 3, 4, 12, 5},
      {"block_dot", [](auto& a, auto& b) { return ag::block_dot(a, b); }, 3, 5, 12, 5},
      {"upsample2x", [](auto& a, auto&) { return ag::upsample2x(a, 2, 3); }, 2, 6, 1, 1},
  };
  Rng rng(1);
  for (const auto& c : cases) {
    ag::Parameter a(random_matrix(rng, c.ar, c.ac));
    ag::Parameter b(random_matrix(rng, c.br, c.bc));
    auto loss = [&] { return weighted_sum(c.op(a.var(), b.var()), 99); };
    const auto r = grad_check(loss, {&a, &b}, rng, 12);
    EXPECT_LT(r.worst_relative, 1e-6) << c.name;
  }
}

TEST(Autograd, GatherScatterMatchFiniteDifferences) {
  Rng rng(2);
  ag::Parameter base(random_matrix(rng, 5, 3));
  ag::Parameter src(random_matrix(rng, 2, 3));
  const std::vector<ag::Index> rows{4, -1, 0, 4};
  const std::vector<ag::Index> into{1, 3};
  const std::vector<std::pair<ag::Index, ag::Index>> cells{{0, 1}, {4, 2}, {0, 1}};
  auto loss = [&] {
    const ag::Var g = ag::gather_rows(base.var(), rows);
    const ag::Var s = ag::scatter_rows(base.var(), into, src.var());
    const ag::Var e = ag::gather_elements(base.var(), cells);
    return ag::add(ag::add(weighted_sum(g, 1), weighted_sum(s, 2)), weighted_sum(e, 3));
  };
  EXPECT_LT(grad_check(loss, {&base, &src}, rng, 15).worst_relative, 1e-6);
  EXPECT_TRUE(ag::gather_rows(base.var(), rows).value().row(1).isZero());
}

TEST(Autograd, Conv2dMatchesFiniteDifferences) {
  Rng rng(3);
  for (const auto& [k, stride, pad] : {std::tuple{3, 1, 1}, std::tuple{3, 2, 1}, std::tuple{1, 1, 0}}) {
    ag::ConvShape s;
    s.height = 6;
    s.width = 5;
    s.kernel = k;
    s.stride = stride;
    s.pad = pad;
    ag::Parameter x(random_matrix(rng, 2, 30));
    ag::Parameter w(random_matrix(rng, 3, 2 * k * k));
    ag::Parameter b(random_matrix(rng, 3, 1));
    auto loss = [&] {
      const ag::Var bv = b.var();
      return weighted_sum(ag::conv2d(x.var(), w.var(), &bv, s), 5);
    };
    EXPECT_LT(grad_check(loss, {&x, &w, &b}, rng, 12).worst_relative, 1e-6) << "k" << k << " s" << stride;
  }
}

TEST(Autograd, Conv2dMatchesDirectLoop) {
  Rng rng(4);
  ag::ConvShape s;
  s.height = 5;
  s.width = 4;
  s.kernel = 3;
  s.stride = 2;
  s.pad = 1;
  const ag::Matrix x = random_matrix(rng, 2, 20);
  const ag::Matrix w = random_matrix(rng, 3, 18);
  const ag::Matrix y = ag::conv2d(ag::constant(x), ag::constant(w), nullptr, s).value();
  ASSERT_EQ(y.cols(), s.out_height() * s.out_width());
  for (int co = 0; co < 3; ++co) {
    for (int oy = 0; oy < s.out_height(); ++oy) {
      for (int ox = 0; ox < s.out_width(); ++ox) {
        double acc = 0.0;
        for (int ci = 0; ci < 2; ++ci) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
              if (iy < 0 || ix < 0 || iy >= 5 || ix >= 4) continue;
              acc += w(co, ci * 9 + ky * 3 + kx) * x(ci, iy * 4 + ix);
            }
          }
        }
        EXPECT_NEAR(y(co, oy * s.out_width() + ox), acc, 1e-12);
      }
    }
  }
}

TEST(Autograd, GradientsAccumulateAcrossUses) {
  ag::Parameter p(ag::Matrix::Constant(1, 1, 3.0));
  const ag::Var v = p.var();
  ag::backward(ag::sum(ag::mul(v, v)));
  EXPECT_DOUBLE_EQ(p.grad()(0, 0), 6.0);
  ag::backward(ag::sum(v));
  EXPECT_DOUBLE_EQ(p.grad()(0, 0), 7.0);
  p.zero_grad();
  EXPECT_FALSE(p.has_grad());
}

TEST(Autograd, ConstantsBuildNoBackwardClosures) {
  const ag::Var a = ag::constant(ag::Matrix::Ones(2, 2));
  const ag::Var y = ag::matmul(a, a);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_FALSE(static_cast<bool>(y.node()->backward));
}

TEST(Autograd, ParameterCopiesAreDeep) {
  ag::Parameter p(ag::Matrix::Ones(2, 2));
  ag::Parameter q = p;
  q.value()(0, 0) = 5.0;
  EXPECT_DOUBLE_EQ(p.value()(0, 0), 1.0);
}

TEST(Autograd, ShapeErrorsAreReported) {
  const ag::Var a = ag::constant(ag::Matrix::Ones(2, 3));
  EXPECT_THROW(ag::matmul(a, a), Error);
  EXPECT_THROW(ag::add(a, ag::constant(ag::Matrix::Ones(3, 2))), Error);
  EXPECT_THROW(ag::block_transpose(a, 4), Error);
}

TEST(MacCounter, CountsKernelsPerStage) {
  MacCounter counter;
  {
    ScopedMacCounter guard(counter);
    const ag::Var a = ag::constant(ag::Matrix::Ones(3, 4));
    const ag::Var b = ag::constant(ag::Matrix::Ones(4, 5));
    {
      ScopedMacStage stage("first");
      ag::matmul(a, b);
    }
    ScopedMacStage stage("second");
    ag::matmul_nt(a, a);
  }
  EXPECT_EQ(counter.stage("first"), 60u);
  EXPECT_EQ(counter.stage("second"), 36u);
  EXPECT_EQ(counter.total(), 96u);
}

TEST(MacCounter, NothingCountedWithoutInstalledCounter) {
  MacCounter counter;
  ag::matmul(ag::constant(ag::Matrix::Ones(2, 2)), ag::constant(ag::Matrix::Ones(2, 2)));
  EXPECT_EQ(counter.total(), 0u);
}
