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

#include "mopred/autodiff.hpp"

#include <cmath>
#include <string>

namespace mopred::ad {

Var Tape::push(Node&& n) {
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                            const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError(std::string(what) + ": shape mismatch " +
                      std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                      " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()));
  }
}

Var Tape::constant(const Eigen::MatrixXd& value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = value;
  return push(std::move(n));
}

Var Tape::constant(double scalar) {
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = scalar;
  return constant(m);
}

Var Tape::leaf(const Eigen::MatrixXd& value, Eigen::MatrixXd* grad_sink) {
  Node n;
  n.op = Op::kLeaf;
  n.value = value;
  n.sink = grad_sink;
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_same_shape(value(a), value(b), "add");
  Node n;
  n.op = Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.value = value(a) + value(b);
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(value(a), value(b), "sub");
  Node n;
  n.op = Op::kSub;
  n.a = a.id;
  n.b = b.id;
  n.value = value(a) - value(b);
  return push(std::move(n));
}

Var Tape::hadamard(Var a, Var b) {
  check_same_shape(value(a), value(b), "hadamard");
  Node n;
  n.op = Op::kHadamard;
  n.a = a.id;
  n.b = b.id;
  n.value = value(a).cwiseProduct(value(b));
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) {
    throw ConfigError("matmul: inner dimensions disagree: " +
                      std::to_string(value(a).cols()) + " vs " +
                      std::to_string(value(b).rows()));
  }
  Node n;
  n.op = Op::kMatMul;
  n.a = a.id;
  n.b = b.id;
  n.value = value(a) * value(b);
  return push(std::move(n));
}

Var Tape::affine_scalar(Var x, double scale, double shift) {
  Node n;
  n.op = Op::kAffineScalar;
  n.a = x.id;
  n.s0 = scale;
  n.s1 = shift;
  n.value = (scale * value(x)).array() + shift;
  return push(std::move(n));
}

Var Tape::sigmoid(Var x) {
  Node n;
  n.op = Op::kSigmoid;
  n.a = x.id;
  n.value = value(x).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  return push(std::move(n));
}

Var Tape::tanh(Var x) {
  Node n;
  n.op = Op::kTanh;
  n.a = x.id;
  n.value = value(x).array().tanh();
  return push(std::move(n));
}

Var Tape::exp(Var x) {
  Node n;
  n.op = Op::kExp;
  n.a = x.id;
  n.value = value(x).array().exp();
  return push(std::move(n));
}

Var Tape::log(Var x) {
  Node n;
  n.op = Op::kLog;
  n.a = x.id;
  n.value = value(x).array().log();
  return push(std::move(n));
}

Var Tape::sqrt(Var x) {
  Node n;
  n.op = Op::kSqrt;
  n.a = x.id;
  n.value = value(x).array().sqrt();
  return push(std::move(n));
}

Var Tape::square(Var x) {
  Node n;
  n.op = Op::kSquare;
  n.a = x.id;
  n.value = value(x).array().square();
  return push(std::move(n));
}

Var Tape::abs(Var x) {
  Node n;
  n.op = Op::kAbs;
  n.a = x.id;
  n.value = value(x).array().abs();
  return push(std::move(n));
}

Var Tape::clamp(Var x, double lo, double hi) {
  Node n;
  n.op = Op::kClamp;
  n.a = x.id;
  n.s0 = lo;
  n.s1 = hi;
  n.value = value(x).array().max(lo).min(hi);
  return push(std::move(n));
}

Var Tape::sum(Var x) {
  Node n;
  n.op = Op::kSum;
  n.a = x.id;
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = value(x).sum();
  n.value = std::move(m);
  return push(std::move(n));
}

Var Tape::mean(Var x) {
  const double inv = 1.0 / static_cast<double>(value(x).size());
  return affine_scalar(sum(x), inv, 0.0);
}

Var Tape::block(Var x, int r0, int nr, int c0, int nc) {
  const auto& v = value(x);
  if (r0 < 0 || c0 < 0 || r0 + nr > v.rows() || c0 + nc > v.cols()) {
    throw ConfigError("block: extent out of range");
  }
  Node n;
  n.op = Op::kBlock;
  n.a = x.id;
  n.r0 = r0;
  n.nr = nr;
  n.c0 = c0;
  n.nc = nc;
  n.value = v.block(r0, c0, nr, nc);
  return push(std::move(n));
}

Var Tape::concat_rows(Var a, Var b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (va.cols() != vb.cols()) {
    throw ConfigError("concat_rows: column counts disagree");
  }
  Node n;
  n.op = Op::kConcatRows;
  n.a = a.id;
  n.b = b.id;
  Eigen::MatrixXd m(va.rows() + vb.rows(), va.cols());
  m.topRows(va.rows()) = va;
  m.bottomRows(vb.rows()) = vb;
  n.value = std::move(m);
  return push(std::move(n));
}

Var Tape::concat_cols(Var a, Var b) {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (va.rows() != vb.rows()) {
    throw ConfigError("concat_cols: row counts disagree");
  }
  Node n;
  n.op = Op::kConcatCols;
  n.a = a.id;
  n.b = b.id;
  Eigen::MatrixXd m(va.rows(), va.cols() + vb.cols());
  m.leftCols(va.cols()) = va;
  m.rightCols(vb.cols()) = vb;
  n.value = std::move(m);
  return push(std::move(n));
}

double Tape::scalar(Var v) const {
  const auto& m = value(v);
  if (m.size() != 1) {
    throw ConfigError("scalar: node is not 1x1");
  }
  return m(0, 0);
}

void Tape::backward(Var loss) {
  if (!loss.valid() || loss.tape != this) {
    throw ConfigError("backward: loss is not a node of this tape");
  }
  if (nodes_[loss.id].value.size() != 1) {
    throw ConfigError("backward: loss must be scalar");
  }

  // Mark reachability so unrelated recordings on the tape stay untouched.
  std::vector<char> needed(loss.id + 1, 0);
  needed[loss.id] = 1;
  for (int i = loss.id; i >= 0; --i) {
    if (!needed[i]) continue;
    const Node& n = nodes_[i];
    if (n.a >= 0) needed[n.a] = 1;
    if (n.b >= 0) needed[n.b] = 1;
  }

  for (int i = 0; i <= loss.id; ++i) {
    if (needed[i]) nodes_[i].grad.setZero(nodes_[i].value.rows(), nodes_[i].value.cols());
  }
  nodes_[loss.id].grad(0, 0) = 1.0;

  for (int i = loss.id; i >= 0; --i) {
    if (!needed[i]) continue;
    Node& n = nodes_[i];
    const Eigen::MatrixXd& g = n.grad;
    switch (n.op) {
      case Op::kLeaf:
        if (n.sink != nullptr) {
          if (n.sink->size() == 0) n.sink->setZero(n.value.rows(), n.value.cols());
          *n.sink += g;
        }
        break;
      case Op::kAdd:
        nodes_[n.a].grad += g;
        nodes_[n.b].grad += g;
        break;
      case Op::kSub:
        nodes_[n.a].grad += g;
        nodes_[n.b].grad -= g;
        break;
      case Op::kHadamard:
        nodes_[n.a].grad += g.cwiseProduct(nodes_[n.b].value);
        nodes_[n.b].grad += g.cwiseProduct(nodes_[n.a].value);
        break;
      case Op::kMatMul:
        nodes_[n.a].grad.noalias() += g * nodes_[n.b].value.transpose();
        nodes_[n.b].grad.noalias() += nodes_[n.a].value.transpose() * g;
        break;
      case Op::kAffineScalar:
        nodes_[n.a].grad += n.s0 * g;
        break;
      case Op::kSigmoid:
        nodes_[n.a].grad.array() +=
            g.array() * n.value.array() * (1.0 - n.value.array());
        break;
      case Op::kTanh:
        nodes_[n.a].grad.array() += g.array() * (1.0 - n.value.array().square());
        break;
      case Op::kExp:
        nodes_[n.a].grad.array() += g.array() * n.value.array();
        break;
      case Op::kLog:
        nodes_[n.a].grad.array() += g.array() / nodes_[n.a].value.array();
        break;
      case Op::kSqrt:
        nodes_[n.a].grad.array() += g.array() * 0.5 / n.value.array();
        break;
      case Op::kSquare:
        nodes_[n.a].grad.array() += g.array() * 2.0 * nodes_[n.a].value.array();
        break;
      case Op::kAbs:
        nodes_[n.a].grad.array() +=
            g.array() * nodes_[n.a].value.array().sign();
        break;
      case Op::kClamp:
        nodes_[n.a].grad.array() +=
            g.array() * ((nodes_[n.a].value.array() > n.s0) &&
                         (nodes_[n.a].value.array() < n.s1))
                            .cast<double>();
        break;
      case Op::kSum:
        nodes_[n.a].grad.array() += g(0, 0);
        break;
      case Op::kBlock:
        nodes_[n.a].grad.block(n.r0, n.c0, n.nr, n.nc) += g;
        break;
      case Op::kConcatRows: {
        const auto ra = nodes_[n.a].value.rows();
        nodes_[n.a].grad += g.topRows(ra);
        nodes_[n.b].grad += g.bottomRows(n.value.rows() - ra);
        break;
      }
      case Op::kConcatCols: {
        const auto ca = nodes_[n.a].value.cols();
        nodes_[n.a].grad += g.leftCols(ca);
        nodes_[n.b].grad += g.rightCols(n.value.cols() - ca);
        break;
      }
    }
  }
}

}  // namespace mopred::ad
