// test_autodiff.cpp

// Copyright 2026  The clvc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.


#include <doctest.h>

#include "clvc/autodiff.hpp"
#include "clvc/nn.hpp"
#include "test_util.hpp"

using namespace clvc;
using ad::Tape;
using ad::Var;

namespace {

// Fixture: parameters x (4x5) and y (5x3), a random readout per op.
struct OpCase {
  nn::ParameterStore store;
  Rng rng{11};

  OpCase() {
    store.Add("x", testing::RandomMatrix(rng, 4, 5));
    store.Add("y", testing::RandomMatrix(rng, 5, 3));
    store.Add("s", testing::RandomMatrix(rng, 1, 1));
    store.Add("bias", testing::RandomMatrix(rng, 1, 5));
  }

  // Sum(op(...) .* R) for a fixed random R of the op's output shape.
  double Check(const std::function<Var(Tape &, Var x, Var y, Var s, Var bias)> &op) {
    Matrix readout;
    auto loss = [&](Tape &t) {
      Var out = op(t, t.Param(store.Get("x")), t.Param(store.Get("y")), t.Param(store.Get("s")),
                   t.Param(store.Get("bias")));
      if (readout.rows() != out.rows() || readout.cols() != out.cols()) {
        Rng r(3);
        readout = testing::RandomMatrix(r, out.rows(), out.cols());
      }
      return ad::Sum(ad::Mul(out, t.Constant(readout)));
    };
    return testing::CheckGradients(store, loss, 40).worst_relative;
  }
};

}  // namespace

TEST_CASE("elementwise and matrix ops match central differences") {
  OpCase c;
  CHECK(c.Check([](Tape &, Var x, Var y, Var, Var) { return ad::MatMul(x, y); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var) { return ad::Sigmoid(x); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var) { return ad::Tanh(x); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var) { return ad::Exp(x); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var) { return ad::Log(ad::AddConstant(ad::Square(x), 0.5)); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var) { return ad::Relu(ad::AddConstant(x, 0.1)); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var) { return ad::Transpose(x); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var b) { return ad::AddBias(x, b); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var s, Var) { return ad::AddScalar(x, s); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var s, Var) { return ad::MulScalar(x, s); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var) { return ad::Sub(ad::Scale(x, 3.0), ad::Mul(x, x)); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var) { return ad::Mean(ad::Square(x)); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var) { return ad::RowSums(x); }) < 1e-7);
}

TEST_CASE("row-wise normalizations match central differences") {
  OpCase c;
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var) { return ad::SoftmaxRows(x); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var) { return ad::LogSoftmaxRows(x); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var) { return ad::L2NormalizeRows(x); }) < 1e-7);
  const int labels[] = {0, 4, 2, 2};
  CHECK(c.Check([&](Tape &, Var x, Var, Var, Var) { return ad::SoftmaxCrossEntropy(x, labels); }) <
        1e-7);
}

TEST_CASE("slicing, concatenation and gathering match central differences") {
  OpCase c;
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var) { return ad::SliceRows(x, 1, 2); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var) { return ad::SliceCols(x, 2, 3); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var y, Var, Var) {
          return ad::ConcatRows({x, ad::Transpose(y), x});
        }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var b) { return ad::ConcatCols({x, ad::BroadcastRows(b, 4)}); }) < 1e-7);
  const Eigen::Index idx[] = {3, 0, 3, 1};
  CHECK(c.Check([&](Tape &, Var x, Var, Var, Var) { return ad::GatherRows(x, idx); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var) { return ad::ScatterRows(x, 9, 3); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var) { return ad::UnfoldRows(x, 3); }) < 1e-7);
  CHECK(c.Check([](Tape &, Var x, Var, Var, Var) { return ad::UnfoldRows(x, 5, 1, 3); }) < 1e-7);
}

TEST_CASE("LSTM cell matches central differences") {
  nn::ParameterStore store;
  Rng rng(5);
  store.Add("gates", testing::RandomMatrix(rng, 2, 12));
  store.Add("c", testing::RandomMatrix(rng, 2, 3));
  auto loss = [&](Tape &t) {
    Var y = ad::LstmCell(t.Param(store.Get("gates")), t.Param(store.Get("c")));
    Rng r(9);
    return ad::Sum(ad::Mul(y, t.Constant(testing::RandomMatrix(r, 2, 6))));
  };
  CHECK(testing::CheckGradients(store, loss, 40).worst_relative < 1e-7);
}

TEST_CASE("a value reused twice accumulates both gradients") {
  Tape t;
  Var x = t.Input(Matrix::Constant(1, 1, 3.0));
  Var y = ad::Mul(x, x);
  t.Backward(ad::Sum(ad::Add(y, x)));
  CHECK(t.Grad(x)(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("shape mismatches throw ShapeError") {
  Tape t;
  Var a = t.Constant(Matrix::Zero(2, 3)), b = t.Constant(Matrix::Zero(2, 3));
  CHECK_THROWS_AS(ad::MatMul(a, b), ShapeError);
  CHECK_THROWS_AS(ad::Add(a, t.Constant(Matrix::Zero(3, 2))), ShapeError);
  CHECK_THROWS_AS(ad::UnfoldRows(a, 2), ShapeError);
  const int labels[] = {0, 7};
  CHECK_THROWS_AS(ad::SoftmaxCrossEntropy(a, labels), ShapeError);
}

TEST_CASE("Adam clips the global norm and keeps parameters on the float grid") {
  nn::ParameterStore store;
  store.Add("w", Matrix::Constant(1, 2, 0.1));
  store.Get("w").grad = Matrix::Constant(1, 2, 100.0);
  nn::Adam adam({.learning_rate = 0.01});
  const double norm = adam.Step(&store);
  CHECK(norm == doctest::Approx(100.0 * std::sqrt(2.0)));
  // First Adam step moves every coordinate by ~lr regardless of scale.
  CHECK(store.Get("w").value(0, 0) == doctest::Approx(0.09).epsilon(1e-5));
  const double v = store.Get("w").value(0, 1);
  CHECK(v == static_cast<double>(static_cast<float>(v)));
  CHECK(store.Get("w").grad.isZero());
}
