// clvc/nn.hpp

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

// Parameter storage, the Adam optimizer and the handful of layers shared by
// the models (affine, LSTM, 1-D convolution, feature normalization).

#ifndef CLVC_NN_HPP_
#define CLVC_NN_HPP_

#include <map>
#include <string>

#include "clvc/autodiff.hpp"
#include "clvc/common.hpp"

namespace clvc::nn {

using ad::Parameter;
using ad::Tape;
using ad::Var;

// Named parameters, iterated in name order. Stored values are always kept on
// the float32 grid so that a checkpoint round-trip is lossless.
class ParameterStore {
 public:
  Parameter &Add(const std::string &name, Matrix init, bool trainable = true);
  Parameter &Get(const std::string &name);
  const Parameter &Get(const std::string &name) const;
  bool Contains(const std::string &name) const { return params_.count(name) != 0; }

  std::map<std::string, Parameter> &items() { return params_; }
  const std::map<std::string, Parameter> &items() const { return params_; }

  void ZeroGrad();
  std::size_t CountValues(bool trainable_only = false) const;
  void RoundToStorage();

 private:
  std::map<std::string, Parameter> params_;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // global gradient-norm clip; <= 0 disables
};

class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  // Applies one update from the accumulated gradients, rounds the parameters
  // to storage precision and clears the gradients. Returns the pre-clip
  // global gradient norm.
  double Step(ParameterStore *store);

  std::int64_t steps() const { return steps_; }
  const AdamOptions &options() const { return options_; }

 private:
  struct Moments {
    Matrix m, v;
  };
  AdamOptions options_;
  std::int64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

Matrix InitUniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng &rng);

// ---- affine: prefix.w (in x out), prefix.b (1 x out)
void AddLinear(ParameterStore *store, const std::string &prefix, int in, int out, Rng &rng,
               bool zero_init = false);
Var Linear(Tape &tape, const ParameterStore &store, const std::string &prefix, Var x);

// ---- LSTM: prefix.w_ih (in x 4H), prefix.w_hh (H x 4H), prefix.b (1 x 4H)
void AddLstm(ParameterStore *store, const std::string &prefix, int in, int hidden, Rng &rng);
int LstmHidden(const ParameterStore &store, const std::string &prefix);

// Runs a single-direction LSTM over x, a (T*B) x in matrix laid out as T
// consecutive blocks of B rows. Returns the (T*B) x H hidden states in time
// order; the state after the last processed step goes to *final_h.
Var RunLstm(Tape &tape, const ParameterStore &store, const std::string &prefix, Var x,
            Eigen::Index batch, bool reverse, Var *final_h = nullptr);

// One LSTM step from explicit state. Returns [h | c].
Var LstmStep(Tape &tape, const ParameterStore &store, const std::string &prefix, Var x,
             Var h, Var c);

// ---- 1-D "same" convolution over rows: prefix.w (kernel*in x out), prefix.b
void AddConv1d(ParameterStore *store, const std::string &prefix, int in, int out, int kernel,
               Rng &rng, bool zero_init = false);
Var Conv1d(Tape &tape, const ParameterStore &store, const std::string &prefix, Var x,
           int kernel);

// ---- per-dimension mean/std normalization: prefix.mean, prefix.std (frozen)
void AddNormalizer(ParameterStore *store, const std::string &prefix, int dim);
// Sets the statistics from the rows of `data`; std is floored at 1e-3.
void FitNormalizer(ParameterStore *store, const std::string &prefix, const Matrix &data);
Matrix ApplyNormalizer(const ParameterStore &store, const std::string &prefix, const Matrix &x);

}  // namespace clvc::nn

#endif  // CLVC_NN_HPP_
