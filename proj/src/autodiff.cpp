// autodiff.cpp

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

#include "clvc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace clvc::ad {

namespace {

std::string ShapeOf(const Matrix &m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void RequireSameShape(Var a, Var b, const char *op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + ShapeOf(a.value()) +
                     " vs " + ShapeOf(b.value()));
}

void RequireScalar(Var s, const char *op) {
  if (s.rows() != 1 || s.cols() != 1)
    throw ShapeError(std::string(op) + ": expected 1x1, got " + ShapeOf(s.value()));
}

void Accumulate(Tape &t, Var v, const Matrix &g) {
  if (t.NeedsGrad(v.id())) t.GradRef(v.id()) += g;
}

}  // namespace

// ---------------------------------------------------------------- Tape

Var Tape::Constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Input(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Param(const Parameter &cp) {
  auto &p = const_cast<Parameter &>(cp);
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.needs_grad = record_ && p.trainable;
  n.param = &p;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::Record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return Record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Tape::Record(Matrix value, std::span<const Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const Var &v : inputs)
      if (nodes_[v.id()].needs_grad) {
        n.needs_grad = true;
        break;
      }
    if (n.needs_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix &Tape::GradRef(int id) {
  Node &n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Matrix Tape::Grad(Var v) const {
  const Node &n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::Backward(Var loss) {
  if (!record_) throw PreconditionError("Backward on a tape that does not record");
  RequireScalar(loss, "Backward");
  for (Node &n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[loss.id()].needs_grad) return;
  GradRef(loss.id())(0, 0) = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node &n = nodes_[id];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, n.grad, n.value);
    if (n.param != nullptr) {
      if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols())
        n.param->grad = Matrix::Zero(n.grad.rows(), n.grad.cols());
      n.param->grad += n.grad;
    }
  }
}

// ---------------------------------------------------------------- ops

Var MatMul(Var a, Var b) {
  if (a.cols() != b.rows())
    throw ShapeError("MatMul: " + ShapeOf(a.value()) + " * " + ShapeOf(b.value()));
  Matrix out = a.value() * b.value();
  return a.tape()->Record(std::move(out), {a, b},
                          [a, b](Tape &t, const Matrix &g, const Matrix &) {
                            if (t.NeedsGrad(a.id()))
                              t.GradRef(a.id()).noalias() += g * b.value().transpose();
                            if (!t.NeedsGrad(b.id())) return;
                            if (a.rows() == 1)
                              t.GradRef(b.id()).noalias() +=
                                  a.value().row(0).transpose() * g.row(0);
                            else
                              t.GradRef(b.id()).noalias() += a.value().transpose() * g;
                          });
}

Var Add(Var a, Var b) {
  RequireSameShape(a, b, "Add");
  return a.tape()->Record(a.value() + b.value(), {a, b},
                          [a, b](Tape &t, const Matrix &g, const Matrix &) {
                            Accumulate(t, a, g);
                            Accumulate(t, b, g);
                          });
}

Var Sub(Var a, Var b) {
  RequireSameShape(a, b, "Sub");
  return a.tape()->Record(a.value() - b.value(), {a, b},
                          [a, b](Tape &t, const Matrix &g, const Matrix &) {
                            Accumulate(t, a, g);
                            if (t.NeedsGrad(b.id())) t.GradRef(b.id()) -= g;
                          });
}

Var Mul(Var a, Var b) {
  RequireSameShape(a, b, "Mul");
  return a.tape()->Record(a.value().cwiseProduct(b.value()), {a, b},
                          [a, b](Tape &t, const Matrix &g, const Matrix &) {
                            if (t.NeedsGrad(a.id()))
                              t.GradRef(a.id()) += g.cwiseProduct(b.value());
                            if (t.NeedsGrad(b.id()))
                              t.GradRef(b.id()) += g.cwiseProduct(a.value());
                          });
}

Var Scale(Var a, double s) {
  return a.tape()->Record(a.value() * s, {a},
                          [a, s](Tape &t, const Matrix &g, const Matrix &) {
                            t.GradRef(a.id()) += s * g;
                          });
}

Var AddConstant(Var a, double c) {
  return a.tape()->Record((a.value().array() + c).matrix(), {a},
                          [a](Tape &t, const Matrix &g, const Matrix &) {
                            t.GradRef(a.id()) += g;
                          });
}

Var AddBias(Var a, Var bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols())
    throw ShapeError("AddBias: " + ShapeOf(a.value()) + " + " + ShapeOf(bias.value()));
  Matrix out = a.value().rowwise() + bias.value().row(0);
  return a.tape()->Record(std::move(out), {a, bias},
                          [a, bias](Tape &t, const Matrix &g, const Matrix &) {
                            Accumulate(t, a, g);
                            if (t.NeedsGrad(bias.id()))
                              t.GradRef(bias.id()) += g.colwise().sum();
                          });
}

Var AddScalar(Var a, Var s) {
  RequireScalar(s, "AddScalar");
  Matrix out = (a.value().array() + s.scalar()).matrix();
  return a.tape()->Record(std::move(out), {a, s},
                          [a, s](Tape &t, const Matrix &g, const Matrix &) {
                            Accumulate(t, a, g);
                            if (t.NeedsGrad(s.id())) t.GradRef(s.id())(0, 0) += g.sum();
                          });
}

Var MulScalar(Var a, Var s) {
  RequireScalar(s, "MulScalar");
  Matrix out = a.value() * s.scalar();
  return a.tape()->Record(std::move(out), {a, s},
                          [a, s](Tape &t, const Matrix &g, const Matrix &) {
                            if (t.NeedsGrad(a.id())) t.GradRef(a.id()) += s.scalar() * g;
                            if (t.NeedsGrad(s.id()))
                              t.GradRef(s.id())(0, 0) += g.cwiseProduct(a.value()).sum();
                          });
}

Var Sigmoid(Var a) {
  Matrix out = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return a.tape()->Record(std::move(out), {a},
                          [a](Tape &t, const Matrix &g, const Matrix &y) {
                            t.GradRef(a.id()).array() +=
                                g.array() * y.array() * (1.0 - y.array());
                          });
}

Var Tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  return a.tape()->Record(std::move(out), {a},
                          [a](Tape &t, const Matrix &g, const Matrix &y) {
                            t.GradRef(a.id()).array() += g.array() * (1.0 - y.array().square());
                          });
}

Var Relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape()->Record(std::move(out), {a},
                          [a](Tape &t, const Matrix &g, const Matrix &) {
                            t.GradRef(a.id()).array() +=
                                (a.value().array() > 0.0).select(g.array(), 0.0);
                          });
}

Var Exp(Var a) {
  Matrix out = a.value().array().exp().matrix();
  return a.tape()->Record(std::move(out), {a},
                          [a](Tape &t, const Matrix &g, const Matrix &y) {
                            t.GradRef(a.id()).array() += g.array() * y.array();
                          });
}

Var Log(Var a) {
  Matrix out = a.value().array().log().matrix();
  return a.tape()->Record(std::move(out), {a},
                          [a](Tape &t, const Matrix &g, const Matrix &) {
                            t.GradRef(a.id()).array() += g.array() / a.value().array();
                          });
}

Var Square(Var a) {
  Matrix out = a.value().array().square().matrix();
  return a.tape()->Record(std::move(out), {a},
                          [a](Tape &t, const Matrix &g, const Matrix &) {
                            t.GradRef(a.id()).array() += 2.0 * g.array() * a.value().array();
                          });
}

Var Transpose(Var a) {
  Matrix out = a.value().transpose();
  return a.tape()->Record(std::move(out), {a},
                          [a](Tape &t, const Matrix &g, const Matrix &) {
                            t.GradRef(a.id()) += g.transpose();
                          });
}

Var Sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->Record(std::move(out), {a},
                          [a](Tape &t, const Matrix &g, const Matrix &) {
                            t.GradRef(a.id()).array() += g(0, 0);
                          });
}

Var Mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return a.tape()->Record(std::move(out), {a},
                          [a, n](Tape &t, const Matrix &g, const Matrix &) {
                            t.GradRef(a.id()).array() += g(0, 0) / n;
                          });
}

Var RowSums(Var a) {
  Matrix out = a.value().rowwise().sum();
  return a.tape()->Record(std::move(out), {a},
                          [a](Tape &t, const Matrix &g, const Matrix &) {
                            t.GradRef(a.id()).colwise() += g.col(0);
                          });
}

Var SoftmaxRows(Var a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return a.tape()->Record(std::move(out), {a},
                          [a](Tape &t, const Matrix &g, const Matrix &y) {
                            Matrix &ga = t.GradRef(a.id());
                            for (Eigen::Index r = 0; r < y.rows(); ++r) {
                              double dot = g.row(r).dot(y.row(r));
                              ga.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
                            }
                          });
}

Var LogSoftmaxRows(Var a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    double m = out.row(r).maxCoeff();
    double lse = m + std::log((out.row(r).array() - m).exp().sum());
    out.row(r).array() -= lse;
  }
  return a.tape()->Record(std::move(out), {a},
                          [a](Tape &t, const Matrix &g, const Matrix &y) {
                            Matrix &ga = t.GradRef(a.id());
                            for (Eigen::Index r = 0; r < y.rows(); ++r) {
                              double gs = g.row(r).sum();
                              ga.row(r).array() += g.row(r).array() - y.row(r).array().exp() * gs;
                            }
                          });
}

Var L2NormalizeRows(Var a) {
  Vector norms = a.value().rowwise().norm();
  for (Eigen::Index r = 0; r < norms.size(); ++r)
    if (!(norms(r) > 0.0)) throw NumericError("L2NormalizeRows: zero-norm row");
  Matrix out = a.value().array().colwise() / norms.array();
  return a.tape()->Record(std::move(out), {a},
                          [a, norms](Tape &t, const Matrix &g, const Matrix &y) {
                            Matrix &ga = t.GradRef(a.id());
                            for (Eigen::Index r = 0; r < y.rows(); ++r) {
                              double dot = g.row(r).dot(y.row(r));
                              ga.row(r) += (g.row(r) - dot * y.row(r)) / norms(r);
                            }
                          });
}

Var SoftmaxCrossEntropy(Var logits, std::span<const int> labels) {
  const Matrix &x = logits.value();
  if (static_cast<Eigen::Index>(labels.size()) != x.rows())
    throw ShapeError("SoftmaxCrossEntropy: label count does not match rows");
  Matrix probs(x.rows(), x.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    int k = labels[r];
    if (k < 0 || k >= x.cols()) throw ShapeError("SoftmaxCrossEntropy: label out of range");
    double m = x.row(r).maxCoeff();
    probs.row(r) = (x.row(r).array() - m).exp().matrix();
    double z = probs.row(r).sum();
    probs.row(r) /= z;
    total -= x(r, k) - m - std::log(z);
  }
  const double n = static_cast<double>(x.rows());
  Matrix out(1, 1);
  out(0, 0) = total / n;
  std::vector<int> owned(labels.begin(), labels.end());
  return logits.tape()->Record(
      std::move(out), {logits},
      [logits, probs = std::move(probs), owned = std::move(owned), n](
          Tape &t, const Matrix &g, const Matrix &) {
        Matrix d = probs;
        for (Eigen::Index r = 0; r < d.rows(); ++r) d(r, owned[r]) -= 1.0;
        t.GradRef(logits.id()) += (g(0, 0) / n) * d;
      });
}

Var SliceRows(Var a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows())
    throw ShapeError("SliceRows: out of range");
  Matrix out = a.value().middleRows(begin, count);
  return a.tape()->Record(std::move(out), {a},
                          [a, begin, count](Tape &t, const Matrix &g, const Matrix &) {
                            t.GradRef(a.id()).middleRows(begin, count) += g;
                          });
}

Var SliceCols(Var a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols())
    throw ShapeError("SliceCols: out of range");
  Matrix out = a.value().middleCols(begin, count);
  return a.tape()->Record(std::move(out), {a},
                          [a, begin, count](Tape &t, const Matrix &g, const Matrix &) {
                            t.GradRef(a.id()).middleCols(begin, count) += g;
                          });
}

Var ConcatCols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("ConcatCols: nothing to concatenate");
  Eigen::Index rows = parts[0].rows(), cols = 0;
  for (const Var &p : parts) {
    if (p.rows() != rows) throw ShapeError("ConcatCols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const Var &p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return parts[0].tape()->Record(std::move(out), parts,
                                 [owned](Tape &t, const Matrix &g, const Matrix &) {
                                   Eigen::Index c = 0;
                                   for (const Var &p : owned) {
                                     if (t.NeedsGrad(p.id()))
                                       t.GradRef(p.id()) += g.middleCols(c, p.cols());
                                     c += p.cols();
                                   }
                                 });
}

Var ConcatRows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("ConcatRows: nothing to concatenate");
  Eigen::Index cols = parts[0].cols(), rows = 0;
  for (const Var &p : parts) {
    if (p.cols() != cols) throw ShapeError("ConcatRows: column count mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const Var &p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return parts[0].tape()->Record(std::move(out), parts,
                                 [owned](Tape &t, const Matrix &g, const Matrix &) {
                                   Eigen::Index r = 0;
                                   for (const Var &p : owned) {
                                     if (t.NeedsGrad(p.id()))
                                       t.GradRef(p.id()) += g.middleRows(r, p.rows());
                                     r += p.rows();
                                   }
                                 });
}

Var BroadcastRows(Var row, Eigen::Index rows) {
  if (row.rows() != 1) throw ShapeError("BroadcastRows: expected a single row");
  Matrix out = row.value().replicate(rows, 1);
  return row.tape()->Record(std::move(out), {row},
                            [row](Tape &t, const Matrix &g, const Matrix &) {
                              t.GradRef(row.id()) += g.colwise().sum();
                            });
}

Var GatherRows(Var a, std::span<const Eigen::Index> indices) {
  Matrix out(static_cast<Eigen::Index>(indices.size()), a.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= a.rows()) throw ShapeError("GatherRows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(indices[i]);
  }
  std::vector<Eigen::Index> owned(indices.begin(), indices.end());
  return a.tape()->Record(std::move(out), {a},
                          [a, owned = std::move(owned)](Tape &t, const Matrix &g, const Matrix &) {
                            Matrix &ga = t.GradRef(a.id());
                            for (std::size_t i = 0; i < owned.size(); ++i)
                              ga.row(owned[i]) += g.row(static_cast<Eigen::Index>(i));
                          });
}

Var ScatterRows(Var a, Eigen::Index total_rows, Eigen::Index offset) {
  if (offset < 0 || offset + a.rows() > total_rows) throw ShapeError("ScatterRows: out of range");
  Matrix out = Matrix::Zero(total_rows, a.cols());
  out.middleRows(offset, a.rows()) = a.value();
  const Eigen::Index n = a.rows();
  return a.tape()->Record(std::move(out), {a},
                          [a, offset, n](Tape &t, const Matrix &g, const Matrix &) {
                            t.GradRef(a.id()) += g.middleRows(offset, n);
                          });
}

Var UnfoldRows(Var a, int kernel, Eigen::Index begin, Eigen::Index end) {
  if (kernel < 1 || kernel % 2 == 0) throw ShapeError("UnfoldRows: kernel must be odd");
  if (begin < 0 || end > a.rows() || begin > end) throw ShapeError("UnfoldRows: bad row range");
  const Eigen::Index rows = a.rows(), c = a.cols(), half = kernel / 2;
  Matrix out = Matrix::Zero(end - begin, kernel * c);
  for (Eigen::Index i = 0; i < end - begin; ++i)
    for (int k = 0; k < kernel; ++k) {
      Eigen::Index src = begin + i + k - half;
      if (src >= 0 && src < rows) out.block(i, k * c, 1, c) = a.value().row(src);
    }
  return a.tape()->Record(std::move(out), {a},
                          [a, kernel, begin, end, half, c, rows](Tape &t, const Matrix &g,
                                                                const Matrix &) {
                            Matrix &ga = t.GradRef(a.id());
                            for (Eigen::Index i = 0; i < end - begin; ++i)
                              for (int k = 0; k < kernel; ++k) {
                                Eigen::Index src = begin + i + k - half;
                                if (src >= 0 && src < rows) ga.row(src) += g.block(i, k * c, 1, c);
                              }
                          });
}

Var LstmCell(Var gates, Var c_prev) {
  const Eigen::Index b = c_prev.rows(), h = c_prev.cols();
  if (gates.rows() != b || gates.cols() != 4 * h)
    throw ShapeError("LstmCell: gates " + ShapeOf(gates.value()) + " vs state " +
                     ShapeOf(c_prev.value()));
  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const Matrix &z = gates.value();
  Matrix out(b, 2 * h);
  for (Eigen::Index r = 0; r < b; ++r)
    for (Eigen::Index j = 0; j < h; ++j) {
      double i = sigmoid(z(r, j)), f = sigmoid(z(r, h + j));
      double gg = std::tanh(z(r, 2 * h + j)), o = sigmoid(z(r, 3 * h + j));
      double c = f * c_prev.value()(r, j) + i * gg;
      out(r, h + j) = c;
      out(r, j) = o * std::tanh(c);
    }
  return gates.tape()->Record(
      std::move(out), {gates, c_prev},
      [gates, c_prev, b, h, sigmoid](Tape &t, const Matrix &g, const Matrix &y) {
        const Matrix &z = gates.value();
        const bool want_gates = t.NeedsGrad(gates.id());
        const bool want_c = t.NeedsGrad(c_prev.id());
        Matrix *gz = want_gates ? &t.GradRef(gates.id()) : nullptr;
        Matrix *gc = want_c ? &t.GradRef(c_prev.id()) : nullptr;
        for (Eigen::Index r = 0; r < b; ++r)
          for (Eigen::Index j = 0; j < h; ++j) {
            double i = sigmoid(z(r, j)), f = sigmoid(z(r, h + j));
            double gg = std::tanh(z(r, 2 * h + j)), o = sigmoid(z(r, 3 * h + j));
            double tc = std::tanh(y(r, h + j));
            double dc = g(r, h + j) + g(r, j) * o * (1.0 - tc * tc);
            if (gz) {
              (*gz)(r, j) += dc * gg * i * (1.0 - i);
              (*gz)(r, h + j) += dc * c_prev.value()(r, j) * f * (1.0 - f);
              (*gz)(r, 2 * h + j) += dc * i * (1.0 - gg * gg);
              (*gz)(r, 3 * h + j) += g(r, j) * tc * o * (1.0 - o);
            }
            if (gc) (*gc)(r, j) += dc * f;
          }
      });
}

}  // namespace clvc::ad
