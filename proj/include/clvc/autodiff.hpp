// clvc/autodiff.hpp

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

// Minimal reverse-mode automatic differentiation over dense 2-D matrices.
//
// A Tape records every operation as a node holding its forward value and a
// closure that pushes the output gradient back to its inputs. Parameters are
// long-lived objects owned by a ParameterStore; a tape references them and
// accumulates into Parameter::grad on Backward(). Everything is 64-bit.

#ifndef CLVC_AUTODIFF_HPP_
#define CLVC_AUTODIFF_HPP_

#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "clvc/common.hpp"

namespace clvc::ad {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape *tape, int id) : tape_(tape), id_(id) {}

  const Matrix &value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape *tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape *tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  // Receives the tape, the output gradient and the output value.
  using BackwardFn = std::function<void(Tape &, const Matrix &, const Matrix &)>;

  // With record_gradients == false nothing is kept for the backward pass.
  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  Var Constant(Matrix value);
  // Leaf whose gradient is tracked and can be read back with Grad().
  Var Input(Matrix value);
  // One node per parameter per tape, regardless of how often it is used.
  // Gradients of trainable parameters are accumulated into p.grad by
  // Backward(), so the parameter must outlive the tape.
  Var Param(const Parameter &p);

  // Seeds d(loss)/d(loss) = 1 and accumulates into parameters.
  void Backward(Var loss);

  const Matrix &Value(int id) const { return nodes_[id].value; }
  // Gradient reaching `v` during the last Backward(); zeros if none.
  Matrix Grad(Var v) const;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // Used by the op implementations.
  Var Record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var Record(Matrix value, std::span<const Var> inputs, BackwardFn fn);
  Matrix &GradRef(int id);
  bool NeedsGrad(int id) const { return nodes_[id].needs_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Parameter *param = nullptr;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<Parameter *, int> param_nodes_;
  bool record_;
};

inline const Matrix &Var::value() const { return tape_->Value(id_); }

// ---- elementwise and linear algebra ----
Var MatMul(Var a, Var b);
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);  // Hadamard
Var Scale(Var a, double s);
Var AddConstant(Var a, double c);
Var AddBias(Var a, Var bias);      // bias: 1 x C, broadcast over rows
Var AddScalar(Var a, Var s);       // s: 1 x 1
Var MulScalar(Var a, Var s);       // s: 1 x 1
Var Sigmoid(Var a);
Var Tanh(Var a);
Var Relu(Var a);
Var Exp(Var a);
Var Log(Var a);
Var Square(Var a);
Var Transpose(Var a);

// ---- reductions ----
Var Sum(Var a);      // 1 x 1
Var Mean(Var a);     // 1 x 1
Var RowSums(Var a);  // R x 1

// ---- row-wise normalizers ----
Var SoftmaxRows(Var a);
Var LogSoftmaxRows(Var a);
Var L2NormalizeRows(Var a);
// Mean over rows of -log softmax(logits)[row, labels[row]].
Var SoftmaxCrossEntropy(Var logits, std::span<const int> labels);

// ---- reshaping ----
Var SliceRows(Var a, Eigen::Index begin, Eigen::Index count);
Var SliceCols(Var a, Eigen::Index begin, Eigen::Index count);
Var ConcatCols(std::span<const Var> parts);
Var ConcatRows(std::span<const Var> parts);
inline Var ConcatCols(std::initializer_list<Var> parts) {
  return ConcatCols(std::span<const Var>(parts.begin(), parts.size()));
}
inline Var ConcatRows(std::initializer_list<Var> parts) {
  return ConcatRows(std::span<const Var>(parts.begin(), parts.size()));
}
Var BroadcastRows(Var row, Eigen::Index rows);
Var GatherRows(Var a, std::span<const Eigen::Index> indices);
// Places `a` at row `offset` inside a zero matrix with `total_rows` rows.
Var ScatterRows(Var a, Eigen::Index total_rows, Eigen::Index offset);

// Row i of the output (for input row r = begin + i) is the concatenation of
// input rows r - kernel/2 .. r + kernel/2, zero outside [0, rows). kernel odd.
// MatMul of this with a (kernel*C) x D weight is a "same" 1-D convolution.
Var UnfoldRows(Var a, int kernel, Eigen::Index begin, Eigen::Index end);
inline Var UnfoldRows(Var a, int kernel) { return UnfoldRows(a, kernel, 0, a.rows()); }

// Fused LSTM cell. gates: B x 4H pre-activations in (input, forget, cell,
// output) order; c_prev: B x H. Returns B x 2H = [h | c].
Var LstmCell(Var gates, Var c_prev);

inline Var operator+(Var a, Var b) { return Add(a, b); }
inline Var operator-(Var a, Var b) { return Sub(a, b); }

// Mean squared error between two equally shaped matrices.
inline Var Mse(Var a, Var b) { return Mean(Square(Sub(a, b))); }

}  // namespace clvc::ad

#endif  // CLVC_AUTODIFF_HPP_
