/* Copyright 2026 The mopred Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "mopred/autodiff.hpp"
#include "mopred/common.hpp"

namespace mopred::nn {

// All trainable weights of a model, each with a same-shaped gradient slot.
// Initialization is uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] and is fully
// determined by the seed plus the creation order.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : seed_(seed), rng_(seed) {}

  Eigen::MatrixXd& add(const std::string& name, int rows, int cols,
                       int fan_in = -1);
  // Adds with explicit content instead of random init (checkpoint load).
  Eigen::MatrixXd& add_raw(const std::string& name, Eigen::MatrixXd value);

  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  Eigen::MatrixXd& value(const std::string& name);
  const Eigen::MatrixXd& value(const std::string& name) const;
  Eigen::MatrixXd& grad(const std::string& name);

  void zero_grad();
  void set_all_zero();  // zeroes values; used to probe zero-weight behavior
  std::vector<std::string> names() const;

  std::uint64_t seed() const { return seed_; }
  long step = 0;  // optimizer step count, persisted with checkpoints

 private:
  struct Entry {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
  };
  std::uint64_t seed_;
  Rng rng_;
  std::map<std::string, Entry> params_;
};

// Adam state (first/second moments per parameter).
struct AdamState {
  std::map<std::string, Eigen::MatrixXd> m;
  std::map<std::string, Eigen::MatrixXd> v;
};

// Standard Adam with bias correction; increments store.step.
void adam_update(ParamStore& store, AdamState& state, double lr,
                 double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(ParamStore& store, double max_norm);

// Checkpoint document: parameter name -> shape -> row-major values, plus the
// RNG seed, the step count, and an arbitrary config block.
std::string checkpoint_to_json(const ParamStore& store,
                               const std::string& config_json);
void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& config_json);
// Returns the config block as a JSON string.
std::string load_checkpoint(const std::string& path, ParamStore& store);

// Stable content hash over names, shapes and values; used to pair dependent
// checkpoints (a sampler refuses to run against the wrong decoder).
std::uint64_t param_hash(const ParamStore& store);

// ---------------------------------------------------------------------------
// Evaluation backends. Model code is written once against this interface and
// instantiated either on the autodiff tape (training) or on plain Eigen
// matrices (inference); the two paths share every formula.

struct TapeBackend {
  using Vec = ad::Var;

  ad::Tape* tape;
  ParamStore* store;
  bool trainable = true;

  TapeBackend(ad::Tape* tape_in, ParamStore* store_in, bool trainable_in = true)
      : tape(tape_in), store(store_in), trainable(trainable_in) {}

  Vec param(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Vec v = trainable ? tape->leaf(store->value(name), &store->grad(name))
                      : tape->constant(store->value(name));
    bound_.emplace(name, v);
    return v;
  }
  Vec constant(const Eigen::MatrixXd& m) { return tape->constant(m); }
  Vec add(Vec a, Vec b) { return tape->add(a, b); }
  Vec sub(Vec a, Vec b) { return tape->sub(a, b); }
  Vec hadamard(Vec a, Vec b) { return tape->hadamard(a, b); }
  Vec matmul(Vec a, Vec b) { return tape->matmul(a, b); }
  Vec affine_scalar(Vec x, double s, double c) { return tape->affine_scalar(x, s, c); }
  Vec sigmoid(Vec x) { return tape->sigmoid(x); }
  Vec tanh(Vec x) { return tape->tanh(x); }
  Vec exp(Vec x) { return tape->exp(x); }
  Vec clamp(Vec x, double lo, double hi) { return tape->clamp(x, lo, hi); }
  Vec rows(Vec x, int r0, int nr) { return tape->rows(x, r0, nr); }
  Vec col(Vec x, int c) { return tape->col(x, c); }
  Vec concat_rows(Vec a, Vec b) { return tape->concat_rows(a, b); }
  Vec concat_cols(Vec a, Vec b) { return tape->concat_cols(a, b); }
  const Eigen::MatrixXd& eval(Vec v) const { return tape->value(v); }

 private:
  std::unordered_map<std::string, Vec> bound_;
};

struct PlainBackend {
  using Vec = Eigen::MatrixXd;

  const ParamStore* store;

  Vec param(const std::string& name) { return store->value(name); }
  Vec constant(const Eigen::MatrixXd& m) { return m; }
  Vec add(const Vec& a, const Vec& b) { return a + b; }
  Vec sub(const Vec& a, const Vec& b) { return a - b; }
  Vec hadamard(const Vec& a, const Vec& b) { return a.cwiseProduct(b); }
  Vec matmul(const Vec& a, const Vec& b) { return a * b; }
  Vec affine_scalar(const Vec& x, double s, double c) {
    return ((s * x).array() + c).matrix();
  }
  Vec sigmoid(const Vec& x) {
    return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  }
  Vec tanh(const Vec& x) { return x.array().tanh().matrix(); }
  Vec exp(const Vec& x) { return x.array().exp().matrix(); }
  Vec clamp(const Vec& x, double lo, double hi) {
    return x.array().max(lo).min(hi).matrix();
  }
  Vec rows(const Vec& x, int r0, int nr) { return x.middleRows(r0, nr); }
  Vec col(const Vec& x, int c) { return x.col(c); }
  Vec concat_rows(const Vec& a, const Vec& b) {
    Vec m(a.rows() + b.rows(), a.cols());
    m.topRows(a.rows()) = a;
    m.bottomRows(b.rows()) = b;
    return m;
  }
  Vec concat_cols(const Vec& a, const Vec& b) {
    Vec m(a.rows(), a.cols() + b.cols());
    m.leftCols(a.cols()) = a;
    m.rightCols(b.cols()) = b;
    return m;
  }
  const Eigen::MatrixXd& eval(const Vec& v) const { return v; }
};

// ---------------------------------------------------------------------------
// Building blocks.

// y = W x + b
struct AffineParams {
  std::string W;
  std::string b;
  int in = 0;
  int out = 0;

  static AffineParams create(ParamStore& store, const std::string& prefix,
                             int in, int out);
  // Creates when absent, verifies shapes when present (checkpoint loads).
  static AffineParams attach(ParamStore& store, const std::string& prefix,
                             int in, int out);

  template <class B>
  typename B::Vec apply(B& k, typename B::Vec x) const {
    return k.add(k.matmul(k.param(W), x), k.param(b));
  }
};

// Gated recurrent unit with fused reset/update gates:
//   [r; z] = sigmoid(Wg x + Ug h + bg)
//   c      = tanh(Wc x + Uc (r .* h) + bc)
//   h'     = (1 - z) .* h + z .* c
struct GruParams {
  std::string Wg, Ug, bg;
  std::string Wc, Uc, bc;
  int in = 0;
  int hidden = 0;

  static GruParams create(ParamStore& store, const std::string& prefix, int in,
                          int hidden);
  static GruParams attach(ParamStore& store, const std::string& prefix, int in,
                          int hidden);

  template <class B>
  typename B::Vec step(B& k, typename B::Vec h, typename B::Vec x) const {
    auto gates = k.sigmoid(k.add(
        k.add(k.matmul(k.param(Wg), x), k.matmul(k.param(Ug), h)), k.param(bg)));
    auto r = k.rows(gates, 0, hidden);
    auto z = k.rows(gates, hidden, hidden);
    auto cand = k.tanh(k.add(k.add(k.matmul(k.param(Wc), x),
                                   k.matmul(k.param(Uc), k.hadamard(r, h))),
                             k.param(bc)));
    return k.add(k.hadamard(k.affine_scalar(z, -1.0, 1.0), h),
                 k.hadamard(z, cand));
  }
};

// Single-op wrappers over raw tape nodes; convenient for direct use in tests
// and small compositions.
ad::Var affine(ad::Tape& t, ad::Var W, ad::Var b, ad::Var x);

}  // namespace mopred::nn
