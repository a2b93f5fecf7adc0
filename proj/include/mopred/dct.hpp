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

#include "mopred/common.hpp"

namespace mopred {

// Frequency-domain view of a feature sequence. Row w holds band w of every
// feature column; band 0 is the DC component. The band count equals the
// temporal length of the transformed signal.
struct SpectralSequence {
  Eigen::MatrixXd coeffs;  // N_bands x d

  int bands() const { return static_cast<int>(coeffs.rows()); }
  int width() const { return static_cast<int>(coeffs.cols()); }
};

// Orthonormal DCT-II matrix for length T, cached per T. Row k is band k:
//   C(k, n) = s_k * cos(pi/T * (n + 1/2) * k),  s_0 = sqrt(1/T), s_k = sqrt(2/T)
// C is orthogonal, so the inverse transform is C^T and energy is preserved.
const Eigen::MatrixXd& dct_matrix(int T);

// Applies the transform independently to each column of a T x d signal.
SpectralSequence dct_forward(const Eigen::MatrixXd& signal);

// Exact inverse of dct_forward.
Eigen::MatrixXd dct_inverse(const SpectralSequence& spectrum);

}  // namespace mopred
