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

#include "mopred/dct.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace mopred {

const Eigen::MatrixXd& dct_matrix(int T) {
  if (T < 1) throw DomainError("dct_matrix: T must be >= 1");
  static std::mutex mu;
  static std::map<int, Eigen::MatrixXd> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(T);
  if (it != cache.end()) return it->second;

  const double pi = 3.14159265358979323846;
  Eigen::MatrixXd C(T, T);
  for (int k = 0; k < T; ++k) {
    const double s = (k == 0) ? std::sqrt(1.0 / T) : std::sqrt(2.0 / T);
    for (int n = 0; n < T; ++n) {
      C(k, n) = s * std::cos(pi / T * (n + 0.5) * k);
    }
  }
  return cache.emplace(T, std::move(C)).first->second;
}

SpectralSequence dct_forward(const Eigen::MatrixXd& signal) {
  if (signal.rows() < 1 || signal.cols() < 1) {
    throw DomainError("dct_forward: empty signal");
  }
  SpectralSequence out;
  out.coeffs = dct_matrix(static_cast<int>(signal.rows())) * signal;
  return out;
}

Eigen::MatrixXd dct_inverse(const SpectralSequence& spectrum) {
  if (spectrum.coeffs.rows() < 1 || spectrum.coeffs.cols() < 1) {
    throw DomainError("dct_inverse: empty spectrum");
  }
  return dct_matrix(spectrum.bands()).transpose() * spectrum.coeffs;
}

}  // namespace mopred
