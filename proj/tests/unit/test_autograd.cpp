#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "matpac/autograd.hpp"
#include "support.hpp"

using namespace matpac;
using testing_support::random_matrix;
using testing_support::readout;
using testing_support::rel_err;

namespace {

using Build = std::function<Var(Tape<double>&, std::vector<Var>&)>;

double evaluate(std::vector<Matrix<double>>& inputs, const Build& build, const Matrix<double>& R) {
  Tape<double> t;
  std::vector<Var> v;
  for (auto& m : inputs) v.push_back(t.constant(m));
  return (t.value(build(t, v)).array() * R.array()).sum();
}

double max_grad_error(std::vector<Matrix<double>> inputs, const Build& build) {
  Tape<double> t;
  std::vector<Var> v;
  for (auto& m : inputs) v.push_back(t.variable(m));
  Var y = build(t, v);
  const Matrix<double> R = random_matrix(t.value(y).rows(), t.value(y).cols(), 99);
  t.backward(readout(t, y, R));
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix<double> g = t.grad(v[k]);
    for (Index i = 0; i < inputs[k].size(); ++i) {
      const double keep = inputs[k].data()[i];
      inputs[k].data()[i] = keep + h;
      const double up = evaluate(inputs, build, R);
      inputs[k].data()[i] = keep - h;
      const double down = evaluate(inputs, build, R);
      inputs[k].data()[i] = keep;
      worst = std::max(worst, rel_err(g.data()[i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace

TEST(Autograd, MatmulLinearAdd) {
  EXPECT_LT(max_grad_error({random_matrix(3, 4, 1), random_matrix(4, 5, 2)},
                           [](auto& t, auto& v) { return ops::matmul(t, v[0], v[1]); }),
            1e-6);
  EXPECT_LT(max_grad_error({random_matrix(3, 4, 1), random_matrix(4, 2, 2), random_matrix(1, 2, 3)},
                           [](auto& t, auto& v) { return ops::linear(t, v[0], v[1], v[2]); }),
            1e-6);
  EXPECT_LT(max_grad_error({random_matrix(3, 4, 1), random_matrix(3, 4, 2)},
                           [](auto& t, auto& v) { return ops::weighted_sum(t, v[0], 0.3, v[1], -1.7); }),
            1e-6);
}

TEST(Autograd, LayerNormGelu) {
  EXPECT_LT(max_grad_error({random_matrix(4, 6, 1), random_matrix(1, 6, 2), random_matrix(1, 6, 3)},
                           [](auto& t, auto& v) { return ops::layer_norm(t, v[0], v[1], v[2], 1e-6); }),
            1e-5);
  EXPECT_LT(max_grad_error({random_matrix(4, 6, 4, 2.0)}, [](auto& t, auto& v) { return ops::gelu(t, v[0]); }),
            1e-6);
}

TEST(Autograd, SoftmaxAttention) {
  EXPECT_LT(max_grad_error({random_matrix(3, 5, 1)}, [](auto& t, auto& v) { return ops::softmax(t, v[0], 0.5); }),
            1e-6);
  EXPECT_LT(max_grad_error({random_matrix(5, 24, 2, 0.5)}, [](auto& t, auto& v) { return ops::attention(t, v[0], 2); }),
            1e-5);
}

TEST(Autograd, NormalizationAndWeightNorm) {
  EXPECT_LT(max_grad_error({random_matrix(4, 5, 1)},
                           [](auto& t, auto& v) { return ops::l2_normalize_rows(t, v[0], 1e-6); }),
            1e-6);
  EXPECT_LT(max_grad_error({random_matrix(3, 4, 1), random_matrix(6, 4, 2), random_matrix(1, 6, 3)},
                           [](auto& t, auto& v) { return ops::weight_norm_linear(t, v[0], v[1], v[2]); }),
            1e-6);
}

TEST(Autograd, IndexingOps) {
  EXPECT_LT(max_grad_error({random_matrix(5, 3, 1)},
                           [](auto& t, auto& v) { return ops::gather_rows(t, v[0], std::vector<int>{4, 0, 4, 2}); }),
            1e-6);
  EXPECT_LT(max_grad_error({random_matrix(3, 3, 1), random_matrix(6, 3, 2)},
                           [](auto& t, auto& v) {
                             return ops::add_gathered(t, v[0], v[1], std::vector<int>{5, -1, 2});
                           }),
            1e-6);
  EXPECT_LT(max_grad_error({random_matrix(2, 3, 1), random_matrix(1, 3, 2)},
                           [](auto& t, auto& v) {
                             return ops::scatter_with_token(t, v[0], v[1], {3, 0}, {1, 2, 4});
                           }),
            1e-6);
}

TEST(Autograd, DetachBlocksGradient) {
  Tape<double> t;
  Var x = t.variable(random_matrix(2, 2, 1));
  Var y = ops::detach(t, x);
  EXPECT_FALSE(t.requires_grad(y));
  Var s = ops::add(t, ops::matmul(t, t.constant(Matrix<double>::Ones(1, 2)), ops::matmul(t, x, t.constant(Matrix<double>::Ones(2, 1)))),
                   ops::matmul(t, t.constant(Matrix<double>::Ones(1, 2)), ops::matmul(t, y, t.constant(Matrix<double>::Ones(2, 1)))));
  t.backward(s);
  EXPECT_TRUE(t.grad(x).isApprox(Matrix<double>::Ones(2, 2)));
  EXPECT_EQ(t.grad(y).squaredNorm(), 0.0);
}

TEST(Autograd, BackwardNeedsScalarRoot) {
  Tape<double> t;
  Var x = t.variable(random_matrix(2, 2, 1));
  EXPECT_THROW(t.backward(x), ShapeError);
}

TEST(Autograd, BindingReusesLeaves) {
  ParameterStore<double> s;
  s.add("w", random_matrix(2, 2, 1));
  Tape<double> t;
  Binding<double> b(t, s, true);
  EXPECT_EQ(b("w").id, b("w").id);
  auto sub = b.scoped("");
  EXPECT_EQ(sub("w").id, b("w").id);
  const auto g = b.gradients();
  EXPECT_EQ(g.size(), 1U);
  EXPECT_EQ(g[0].second.squaredNorm(), 0.0);
}
