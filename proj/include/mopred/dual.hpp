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
#include <cmath>

namespace mopred {

// Forward-mode scalar carrying a dense tangent vector. An empty tangent means
// "identically zero", so constants cost nothing. Used to get exact Jacobians
// of the kinematic chain without taping it.
struct Dual {
  double v = 0.0;
  Eigen::VectorXd d;  // empty == zero tangent

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit for scalar mixing
  Dual(double value, Eigen::VectorXd tangent) : v(value), d(std::move(tangent)) {}

  static Dual seeded(double value, int dim, int index) {
    Dual out(value);
    out.d = Eigen::VectorXd::Zero(dim);
    out.d(index) = 1.0;
    return out;
  }

  bool has_d() const { return d.size() > 0; }
};

inline Dual operator+(const Dual& a, const Dual& b) {
  Dual out(a.v + b.v);
  if (a.has_d() && b.has_d()) out.d = a.d + b.d;
  else if (a.has_d()) out.d = a.d;
  else if (b.has_d()) out.d = b.d;
  return out;
}

inline Dual operator-(const Dual& a, const Dual& b) {
  Dual out(a.v - b.v);
  if (a.has_d() && b.has_d()) out.d = a.d - b.d;
  else if (a.has_d()) out.d = a.d;
  else if (b.has_d()) out.d = -b.d;
  return out;
}

inline Dual operator-(const Dual& a) {
  Dual out(-a.v);
  if (a.has_d()) out.d = -a.d;
  return out;
}

inline Dual operator*(const Dual& a, const Dual& b) {
  Dual out(a.v * b.v);
  if (a.has_d() && b.has_d()) out.d = b.v * a.d + a.v * b.d;
  else if (a.has_d()) out.d = b.v * a.d;
  else if (b.has_d()) out.d = a.v * b.d;
  return out;
}

inline Dual operator/(const Dual& a, const Dual& b) {
  Dual out(a.v / b.v);
  const double inv = 1.0 / b.v;
  if (a.has_d() && b.has_d()) out.d = inv * a.d - (a.v * inv * inv) * b.d;
  else if (a.has_d()) out.d = inv * a.d;
  else if (b.has_d()) out.d = -(a.v * inv * inv) * b.d;
  return out;
}

inline Dual& operator+=(Dual& a, const Dual& b) { a = a + b; return a; }
inline Dual& operator-=(Dual& a, const Dual& b) { a = a - b; return a; }

inline Dual sin(const Dual& a) {
  Dual out(std::sin(a.v));
  if (a.has_d()) out.d = std::cos(a.v) * a.d;
  return out;
}

inline Dual cos(const Dual& a) {
  Dual out(std::cos(a.v));
  if (a.has_d()) out.d = -std::sin(a.v) * a.d;
  return out;
}

inline Dual sqrt(const Dual& a) {
  const double s = std::sqrt(a.v);
  Dual out(s);
  if (a.has_d()) out.d = (0.5 / s) * a.d;
  return out;
}

// Scalar access that works for both double and Dual in templated code.
inline double scalar_value(double x) { return x; }
inline double scalar_value(const Dual& x) { return x.v; }

}  // namespace mopred
