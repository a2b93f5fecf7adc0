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
#include <cstdint>
#include <vector>

#include "mopred/common.hpp"

namespace mopred::ad {

class Tape;

// Handle to a tape node. Cheap to copy; only valid while its tape lives and
// has not been cleared.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Eigen::MatrixXd& value() const;
  int rows() const { return static_cast<int>(value().rows()); }
  int cols() const { return static_cast<int>(value().cols()); }
};

// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
// order, which is already a topological order, so the adjoint sweep is a
// single reverse pass visiting each reachable node exactly once.
class Tape {
 public:
  enum class Op : std::uint8_t {
    kLeaf,          // value only; optional external gradient sink
    kAdd,
    kSub,
    kHadamard,
    kMatMul,
    kAffineScalar,  // s0 * x + s1, elementwise
    kSigmoid,
    kTanh,
    kExp,
    kLog,
    kSqrt,
    kSquare,
    kAbs,
    kClamp,         // [s0, s1]; zero gradient outside
    kSum,           // 1x1 total
    kBlock,         // sub-matrix view
    kConcatRows,
    kConcatCols,
  };

  Tape() { nodes_.reserve(4096); }

  // Leaf with no gradient destination (treated as a constant).
  Var constant(const Eigen::MatrixXd& value);
  Var constant(double scalar);
  // Leaf whose gradient is accumulated into *grad_sink by backward().
  Var leaf(const Eigen::MatrixXd& value, Eigen::MatrixXd* grad_sink);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var matmul(Var a, Var b);
  Var affine_scalar(Var x, double scale, double shift);
  Var neg(Var x) { return affine_scalar(x, -1.0, 0.0); }
  Var scale(Var x, double s) { return affine_scalar(x, s, 0.0); }
  Var one_minus(Var x) { return affine_scalar(x, -1.0, 1.0); }
  Var sigmoid(Var x);
  Var tanh(Var x);
  Var exp(Var x);
  Var log(Var x);
  Var sqrt(Var x);
  Var square(Var x);
  Var abs(Var x);
  Var clamp(Var x, double lo, double hi);
  Var sum(Var x);
  Var mean(Var x);
  Var block(Var x, int r0, int nr, int c0, int nc);
  Var rows(Var x, int r0, int nr) { return block(x, r0, nr, 0, x.cols()); }
  Var col(Var x, int c) { return block(x, 0, x.rows(), c, 1); }
  Var concat_rows(Var a, Var b);
  Var concat_cols(Var a, Var b);

  // Convenience scalar reductions used by the losses.
  Var mean_abs(Var x) { return mean(abs(x)); }
  Var mean_square(Var x) { return mean(square(x)); }

  const Eigen::MatrixXd& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const;

  // Adjoint sweep from a 1x1 loss node. Node adjoints are reset first, so
  // repeated calls on the same recording produce identical results. Leaf
  // sinks receive "+=" so one sweep can extend an external accumulation.
  void backward(Var loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    double s0 = 0.0;
    double s1 = 0.0;
    int r0 = 0, nr = 0, c0 = 0, nc = 0;
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    Eigen::MatrixXd* sink = nullptr;
  };

  Var push(Node&& n);
  static void check_same_shape(const Eigen::MatrixXd& a,
                               const Eigen::MatrixXd& b, const char* what);

  std::vector<Node> nodes_;

  friend struct Var;
};

inline const Eigen::MatrixXd& Var::value() const { return tape->value(*this); }

inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->matmul(a, b); }

}  // namespace mopred::ad
