// nn.cpp

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

#include "clvc/nn.hpp"

#include <cmath>
#include <vector>

namespace clvc::nn {

Parameter &ParameterStore::Add(const std::string &name, Matrix init, bool trainable) {
  if (params_.count(name)) throw PreconditionError("duplicate parameter '" + name + "'");
  RoundToFloat(&init);
  Parameter p;
  p.name = name;
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  p.trainable = trainable;
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter &ParameterStore::Get(const std::string &name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw PreconditionError("unknown parameter '" + name + "'");
  return it->second;
}

const Parameter &ParameterStore::Get(const std::string &name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw PreconditionError("unknown parameter '" + name + "'");
  return it->second;
}

void ParameterStore::ZeroGrad() {
  for (auto &[name, p] : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

std::size_t ParameterStore::CountValues(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto &[name, p] : params_)
    if (!trainable_only || p.trainable) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterStore::RoundToStorage() {
  for (auto &[name, p] : params_) RoundToFloat(&p.value);
}

double Adam::Step(ParameterStore *store) {
  double sq = 0.0;
  for (auto &[name, p] : store->items())
    if (p.trainable && p.grad.size() == p.value.size()) sq += p.grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  const double clip =
      (options_.clip_norm > 0.0 && norm > options_.clip_norm) ? options_.clip_norm / norm : 1.0;

  ++steps_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (auto &[name, p] : store->items()) {
    if (!p.trainable || p.grad.size() != p.value.size()) continue;
    Moments &mo = moments_[name];
    if (mo.m.size() == 0) {
      mo.m = Matrix::Zero(p.value.rows(), p.value.cols());
      mo.v = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    Matrix g = p.grad * clip;
    mo.m = options_.beta1 * mo.m + (1.0 - options_.beta1) * g;
    mo.v = options_.beta2 * mo.v + (1.0 - options_.beta2) * g.cwiseProduct(g);
    p.value.array() -= options_.learning_rate * (mo.m.array() / bc1) /
                       ((mo.v.array() / bc2).sqrt() + options_.epsilon);
    RoundToFloat(&p.value);
  }
  store->ZeroGrad();
  return norm;
}

Matrix InitUniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng &rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = UniformRange(rng, -bound, bound);
  return m;
}

void AddLinear(ParameterStore *store, const std::string &prefix, int in, int out, Rng &rng,
               bool zero_init) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  store->Add(prefix + ".w", zero_init ? Matrix::Zero(in, out) : InitUniform(in, out, bound, rng));
  store->Add(prefix + ".b", zero_init ? Matrix::Zero(1, out) : InitUniform(1, out, bound, rng));
}

Var Linear(Tape &tape, const ParameterStore &store, const std::string &prefix, Var x) {
  return ad::AddBias(ad::MatMul(x, tape.Param(store.Get(prefix + ".w"))),
                     tape.Param(store.Get(prefix + ".b")));
}

void AddLstm(ParameterStore *store, const std::string &prefix, int in, int hidden, Rng &rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  store->Add(prefix + ".w_ih", InitUniform(in, 4 * hidden, bound, rng));
  store->Add(prefix + ".w_hh", InitUniform(hidden, 4 * hidden, bound, rng));
  Matrix b = InitUniform(1, 4 * hidden, bound, rng);
  b.middleCols(hidden, hidden).array() += 1.0;  // forget-gate bias
  store->Add(prefix + ".b", std::move(b));
}

int LstmHidden(const ParameterStore &store, const std::string &prefix) {
  return static_cast<int>(store.Get(prefix + ".w_hh").value.rows());
}

Var LstmStep(Tape &tape, const ParameterStore &store, const std::string &prefix, Var x, Var h,
             Var c) {
  Var gates = ad::AddBias(ad::MatMul(x, tape.Param(store.Get(prefix + ".w_ih"))),
                          tape.Param(store.Get(prefix + ".b")));
  gates = ad::Add(gates, ad::MatMul(h, tape.Param(store.Get(prefix + ".w_hh"))));
  return ad::LstmCell(gates, c);
}

Var RunLstm(Tape &tape, const ParameterStore &store, const std::string &prefix, Var x,
            Eigen::Index batch, bool reverse, Var *final_h) {
  const int hidden = LstmHidden(store, prefix);
  if (batch <= 0 || x.rows() % batch != 0) throw ShapeError("RunLstm: rows not a multiple of batch");
  const Eigen::Index steps = x.rows() / batch;
  Var proj = ad::AddBias(ad::MatMul(x, tape.Param(store.Get(prefix + ".w_ih"))),
                         tape.Param(store.Get(prefix + ".b")));
  Var w_hh = tape.Param(store.Get(prefix + ".w_hh"));
  Var h = tape.Constant(Matrix::Zero(batch, hidden));
  Var c = tape.Constant(Matrix::Zero(batch, hidden));
  std::vector<Var> outputs(static_cast<std::size_t>(steps));
  for (Eigen::Index s = 0; s < steps; ++s) {
    const Eigen::Index t = reverse ? steps - 1 - s : s;
    Var gates = ad::Add(ad::SliceRows(proj, t * batch, batch), ad::MatMul(h, w_hh));
    Var hc = ad::LstmCell(gates, c);
    h = ad::SliceCols(hc, 0, hidden);
    c = ad::SliceCols(hc, hidden, hidden);
    outputs[static_cast<std::size_t>(t)] = h;
  }
  if (final_h) *final_h = h;
  return ad::ConcatRows(outputs);
}

void AddConv1d(ParameterStore *store, const std::string &prefix, int in, int out, int kernel,
               Rng &rng, bool zero_init) {
  AddLinear(store, prefix, in * kernel, out, rng, zero_init);
}

Var Conv1d(Tape &tape, const ParameterStore &store, const std::string &prefix, Var x,
           int kernel) {
  return Linear(tape, store, prefix, ad::UnfoldRows(x, kernel));
}

void AddNormalizer(ParameterStore *store, const std::string &prefix, int dim) {
  store->Add(prefix + ".mean", Matrix::Zero(1, dim), false);
  store->Add(prefix + ".std", Matrix::Ones(1, dim), false);
}

void FitNormalizer(ParameterStore *store, const std::string &prefix, const Matrix &data) {
  Parameter &mean = store->Get(prefix + ".mean");
  Parameter &stdev = store->Get(prefix + ".std");
  if (data.cols() != mean.value.cols()) throw ShapeError("FitNormalizer: dimension mismatch");
  if (data.rows() == 0) throw PreconditionError("FitNormalizer: no data");
  RowVector mu = data.colwise().mean();
  RowVector var = (data.rowwise() - mu).array().square().colwise().mean();
  mean.value = mu;
  stdev.value = var.array().sqrt().max(1e-3).matrix();
  RoundToFloat(&mean.value);
  RoundToFloat(&stdev.value);
}

Matrix ApplyNormalizer(const ParameterStore &store, const std::string &prefix, const Matrix &x) {
  const Matrix &mean = store.Get(prefix + ".mean").value;
  const Matrix &stdev = store.Get(prefix + ".std").value;
  if (x.cols() != mean.cols())
    throw ShapeError("normalizer '" + prefix + "' expects " + std::to_string(mean.cols()) +
                     " columns, got " + std::to_string(x.cols()));
  return ((x.rowwise() - mean.row(0)).array().rowwise() / stdev.row(0).array()).matrix();
}

}  // namespace clvc::nn
