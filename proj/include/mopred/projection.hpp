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
#include <array>
#include <string>
#include <vector>

#include "mopred/body_model.hpp"
#include "mopred/cvae.hpp"
#include "mopred/motion.hpp"

namespace mopred {

struct FitConfig {
  double lambda1 = 0.0005;  // body pose regularizer
  double lambda2 = 0.01;    // hand pose regularizer
  std::array<int, 3> stage_caps = {20, 30, 10};
  double tol = 1e-8;             // stop a stage when the loss gain drops below
  std::string optimizer = "lm";  // "lm" (damped Gauss-Newton) or "gd"
  int shape_rounds = 3;          // alternations in the shape fit

  bool projection_enabled() const {
    return stage_caps[0] > 0 || stage_caps[1] > 0 || stage_caps[2] > 0;
  }
};

// Squared marker residual plus Tikhonov terms on the pose coefficients:
// |V(params) - y_pred|^2 + lambda1 |theta|^2 + lambda2 |theta_h|^2.
double fit_loss(const SkeletonDef& skel, const MarkerLayout& layout,
                const BodyParams& params, const Eigen::VectorXd& y_pred,
                const FitConfig& cfg);

// Gradient of fit_loss over the active blocks (exact, via the forward-mode
// Jacobian). Used by the gradient checks and the descent fallback.
Eigen::VectorXd fit_loss_gradient(const SkeletonDef& skel,
                                  const MarkerLayout& layout,
                                  const BodyParams& params,
                                  const Eigen::VectorXd& y_pred,
                                  const FitConfig& cfg,
                                  const ParamBlocks& blocks);

struct FitDiagnostics {
  int iterations = 0;      // accepted steps over all stages
  double initial_loss = 0.0;
  double final_loss = 0.0;
  // Accepted-loss trace per stage; non-increasing within each stage.
  std::array<std::vector<double>, 3> stage_losses;
};

struct FitResult {
  BodyParams params;
  FitDiagnostics diag;
};

// Three warm-started stages: (1) global translation and orientation,
// (2) plus body pose, (3) plus hand pose. The shape stays at init.beta.
// Throws DomainError carrying the stage index if the loss goes non-finite.
FitResult fit_frame(const SkeletonDef& skel, const MarkerLayout& layout,
                    const Eigen::VectorXd& y_pred, const BodyParams& init,
                    const FitConfig& cfg);

struct ShapeFit {
  Eigen::VectorXd beta;
  std::vector<BodyParams> frame_fits;  // per input frame, with beta applied
  bool converged = false;
  double final_loss = 0.0;
};

// Shape from the whole input sequence: alternates per-frame pose fits with an
// exact linear solve for beta (marker positions are affine in beta at fixed
// pose). Non-convergence returns the best iterate with converged = false.
ShapeFit fit_shape_from_input(const SkeletonDef& skel, const MarkerLayout& layout,
                              const MotionSequence& input, const FitConfig& cfg);

struct ProjectedFrame {
  Eigen::VectorXd raw;        // decoder output
  Eigen::VectorXd projected;  // markers_from_body(fitted)
  BodyParams fitted;
  int iterations = 0;
  double fit_loss = 0.0;
};

struct ProjectedRollout {
  std::vector<ProjectedFrame> frames;
  Eigen::VectorXd beta;
  double frame_rate = 0.0;
  std::string layout;
  double fit_seconds = 0.0;  // time spent inside the per-frame fits

  MotionSequence raw_sequence() const;
  MotionSequence projected_sequence() const;
  // Joint trajectory of the fitted bodies (T x 3J).
  Eigen::MatrixXd fitted_joint_track(const SkeletonDef& skel) const;
};

// Decodes the future for one latent while projecting every emitted frame onto
// the body and feeding the projected markers back into the decoder. With all
// stage caps zero the projection is disabled and the rollout equals plain
// decoding. Fit failures are rethrown with the frame index.
//
// The shape fit depends only on the condition; when several samples share a
// condition, compute it once and pass it as `input_shape`.
ProjectedRollout rollout_with_projection(const Cvae& cvae,
                                         const nn::ParamStore& cvae_store,
                                         const MotionSequence& condition,
                                         const Eigen::MatrixXd& z,
                                         const SkeletonDef& skel,
                                         const MarkerLayout& layout,
                                         const FitConfig& cfg,
                                         const ShapeFit* input_shape = nullptr);

std::string rollout_to_json(const ProjectedRollout& rollout);

}  // namespace mopred
