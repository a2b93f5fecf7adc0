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

#include "mopred/projection.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include <json.hpp>

namespace mopred {

using nlohmann::json;

namespace {

// Residual vector [markers - y_pred; sqrt(l1) theta; sqrt(l2) theta_h]; its
// squared norm is fit_loss.
Eigen::VectorXd fit_residual(const Eigen::VectorXd& markers,
                             const Eigen::VectorXd& y_pred,
                             const BodyParams& params, const FitConfig& cfg) {
  const int V3 = static_cast<int>(markers.size());
  Eigen::VectorXd r(V3 + 32 + 24);
  r.head(V3) = markers - y_pred;
  r.segment(V3, 32) = std::sqrt(cfg.lambda1) * params.theta;
  r.tail(24) = std::sqrt(cfg.lambda2) * params.theta_h;
  return r;
}

// Jacobian of the residual over the active blocks.
Eigen::MatrixXd fit_residual_jacobian(const Eigen::MatrixXd& marker_jac,
                                      const ParamBlocks& blocks,
                                      const FitConfig& cfg) {
  const int V3 = static_cast<int>(marker_jac.rows());
  const int A = static_cast<int>(marker_jac.cols());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(V3 + 32 + 24, A);
  J.topRows(V3) = marker_jac;
  int at = (blocks.t ? 3 : 0) + (blocks.r6 ? 6 : 0);
  if (blocks.theta) {
    J.block(V3, at, 32, 32) =
        std::sqrt(cfg.lambda1) * Eigen::MatrixXd::Identity(32, 32);
    at += 32;
  }
  if (blocks.theta_h) {
    J.block(V3 + 32, at, 24, 24) =
        std::sqrt(cfg.lambda2) * Eigen::MatrixXd::Identity(24, 24);
  }
  return J;
}

double loss_of(const SkeletonDef& skel, const MarkerLayout& layout,
               const BodyParams& params, const Eigen::VectorXd& y_pred,
               const FitConfig& cfg) {
  return fit_residual(markers_from_body(skel, layout, params), y_pred, params, cfg)
      .squaredNorm();
}

// Rewrites a drifted 6-value orientation as the first two columns of its
// rotation matrix. The rotation is unchanged; the representation returns to
// orthonormal, so chained warm starts cannot creep toward degeneracy. Healthy
// representations are left bit-identical.
void canonicalize_r6(BodyParams& params) {
  const Eigen::Vector3d a1 = params.r6.head<3>();
  const Eigen::Vector3d a2 = params.r6.tail<3>();
  const bool healthy = std::abs(a1.norm() - 1.0) < 1e-6 &&
                       std::abs(a2.norm() - 1.0) < 1e-6 &&
                       std::abs(a1.dot(a2)) < 1e-6;
  if (healthy) return;
  const Eigen::Matrix3d R = rot6d_to_matrix(params.r6);
  params.r6.head<3>() = R.col(0);
  params.r6.tail<3>() = R.col(1);
}

// One damped Gauss-Newton stage over the given blocks. The trace records the
// loss after every outer iteration (one Jacobian evaluation each), so it is
// non-increasing and its length measures the work spent. `params` is updated
// in place.
std::vector<double> run_stage_lm(const SkeletonDef& skel,
                                 const MarkerLayout& layout,
                                 const Eigen::VectorXd& y_pred,
                                 BodyParams& params, const ParamBlocks& blocks,
                                 const FitConfig& cfg, int cap, int stage,
                                 int& accepted_total) {
  std::vector<double> trace;
  double loss = loss_of(skel, layout, params, y_pred, cfg);
  trace.push_back(loss);
  if (!std::isfinite(loss)) {
    throw DomainError("fit_frame: non-finite loss entering stage " +
                      std::to_string(stage));
  }
  double mu = 1e-3;
  for (int it = 0; it < cap; ++it) {
    const MarkersJacobian mj = markers_with_jacobian(skel, layout, params, blocks);
    const Eigen::VectorXd r = fit_residual(mj.markers, y_pred, params, cfg);
    const Eigen::MatrixXd J = fit_residual_jacobian(mj.jac, blocks, cfg);
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    // Marquardt scaling: damp each direction relative to its curvature.
    const Eigen::VectorXd damping = JtJ.diagonal().cwiseMax(1e-12);

    bool accepted = false;
    double gain = 0.0;
    while (mu < 1e8) {
      const Eigen::VectorXd delta =
          (JtJ + mu * damping.asDiagonal().toDenseMatrix()).ldlt().solve(-g);
      BodyParams candidate = params;
      unpack_params(pack_params(params, blocks) + delta, blocks, candidate);
      // A candidate that degenerates the orientation counts as rejected.
      double candidate_loss;
      try {
        canonicalize_r6(candidate);
        candidate_loss = loss_of(skel, layout, candidate, y_pred, cfg);
      } catch (const DomainError&) {
        candidate_loss = std::numeric_limits<double>::infinity();
      }
      if (std::isnan(candidate_loss)) {
        throw DomainError("fit_frame: loss went NaN in stage " +
                          std::to_string(stage));
      }
      if (candidate_loss < loss) {
        params = candidate;
        gain = loss - candidate_loss;
        loss = candidate_loss;
        ++accepted_total;
        mu = std::max(mu / 3.0, 1e-12);
        accepted = true;
        break;
      }
      mu *= 10.0;
    }
    trace.push_back(loss);
    if (!accepted) break;  // damping exhausted
    if (gain < cfg.tol) break;
  }
  return trace;
}

std::vector<double> run_stage_gd(const SkeletonDef& skel,
                                 const MarkerLayout& layout,
                                 const Eigen::VectorXd& y_pred,
                                 BodyParams& params, const ParamBlocks& blocks,
                                 const FitConfig& cfg, int cap, int stage,
                                 int& accepted_total) {
  std::vector<double> trace;
  double loss = loss_of(skel, layout, params, y_pred, cfg);
  trace.push_back(loss);
  double step = 1e-2;
  for (int it = 0; it < cap; ++it) {
    const Eigen::VectorXd g =
        fit_loss_gradient(skel, layout, params, y_pred, cfg, blocks);
    bool accepted = false;
    double gain = 0.0;
    while (step > 1e-14) {
      BodyParams candidate = params;
      unpack_params(pack_params(params, blocks) - step * g, blocks, candidate);
      // A candidate that degenerates the orientation counts as rejected.
      double candidate_loss;
      try {
        canonicalize_r6(candidate);
        candidate_loss = loss_of(skel, layout, candidate, y_pred, cfg);
      } catch (const DomainError&) {
        candidate_loss = std::numeric_limits<double>::infinity();
      }
      if (std::isnan(candidate_loss)) {
        throw DomainError("fit_frame: loss went NaN in stage " +
                          std::to_string(stage));
      }
      if (candidate_loss < loss) {
        params = candidate;
        gain = loss - candidate_loss;
        loss = candidate_loss;
        ++accepted_total;
        step *= 1.5;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    trace.push_back(loss);
    if (!accepted) break;
    if (gain < cfg.tol) break;
  }
  return trace;
}

}  // namespace

double fit_loss(const SkeletonDef& skel, const MarkerLayout& layout,
                const BodyParams& params, const Eigen::VectorXd& y_pred,
                const FitConfig& cfg) {
  if (y_pred.size() != layout.dim()) {
    throw ConfigError("fit_loss: prediction width disagrees with layout");
  }
  return loss_of(skel, layout, params, y_pred, cfg);
}

Eigen::VectorXd fit_loss_gradient(const SkeletonDef& skel,
                                  const MarkerLayout& layout,
                                  const BodyParams& params,
                                  const Eigen::VectorXd& y_pred,
                                  const FitConfig& cfg,
                                  const ParamBlocks& blocks) {
  const MarkersJacobian mj = markers_with_jacobian(skel, layout, params, blocks);
  const Eigen::VectorXd r = fit_residual(mj.markers, y_pred, params, cfg);
  const Eigen::MatrixXd J = fit_residual_jacobian(mj.jac, blocks, cfg);
  return 2.0 * J.transpose() * r;
}

FitResult fit_frame(const SkeletonDef& skel, const MarkerLayout& layout,
                    const Eigen::VectorXd& y_pred, const BodyParams& init,
                    const FitConfig& cfg) {
  if (y_pred.size() != layout.dim()) {
    throw ConfigError("fit_frame: prediction width disagrees with layout");
  }
  FitResult result;
  result.params = init;
  result.diag.initial_loss = loss_of(skel, layout, init, y_pred, cfg);

  const ParamBlocks stages[3] = {
      {true, true, false, false, false},
      {true, true, true, false, false},
      {true, true, true, true, false},
  };
  for (int stage = 0; stage < 3; ++stage) {
    if (cfg.stage_caps[stage] <= 0) continue;
    auto runner = (cfg.optimizer == "gd") ? run_stage_gd : run_stage_lm;
    result.diag.stage_losses[stage] =
        runner(skel, layout, y_pred, result.params, stages[stage], cfg,
               cfg.stage_caps[stage], stage, result.diag.iterations);
  }
  canonicalize_r6(result.params);
  result.diag.final_loss = loss_of(skel, layout, result.params, y_pred, cfg);
  return result;
}

ShapeFit fit_shape_from_input(const SkeletonDef& skel, const MarkerLayout& layout,
                              const MotionSequence& input, const FitConfig& cfg) {
  if (input.frame_count() < 1) {
    throw DomainError("fit_shape_from_input: empty input sequence");
  }
  const int T = input.frame_count();
  const int V3 = layout.dim();
  const int rows_per_frame = V3 + 32 + 24;
  constexpr int kPose = 65;  // t + r6 + theta + theta_h per frame

  ShapeFit fit;
  fit.beta = Eigen::VectorXd::Zero(10);
  fit.frame_fits.assign(T, BodyParams::rest());

  // Rough global init: put the root under the marker centroid, then a
  // warm-started pose pass at beta = 0 to get near the joint optimum.
  const Eigen::VectorXd rest_markers =
      markers_from_body(skel, layout, BodyParams::rest());
  Eigen::Vector3d rest_centroid = Eigen::Vector3d::Zero();
  Eigen::Vector3d first_centroid = Eigen::Vector3d::Zero();
  for (int i = 0; i < layout.count(); ++i) {
    rest_centroid += rest_markers.segment<3>(3 * i);
    first_centroid += input.frames.block<1, 3>(0, 3 * i).transpose();
  }
  for (int f = 0; f < T; ++f) {
    BodyParams init = (f == 0) ? BodyParams::rest() : fit.frame_fits[f - 1];
    if (f == 0) init.t = (first_centroid - rest_centroid) / layout.count();
    fit.frame_fits[f] =
        fit_frame(skel, layout, input.frames.row(f).transpose(), init, cfg).params;
  }

  // Joint damped Gauss-Newton over every frame's pose plus the shared shape.
  // Residuals stack per frame: markers and the two pose priors.
  const ParamBlocks all = ParamBlocks::all();
  const int n_params = kPose * T + 10;
  const int iterations = std::max(10 * cfg.shape_rounds, 10);

  auto total_loss = [&](const std::vector<BodyParams>& frames) {
    double acc = 0.0;
    for (int f = 0; f < T; ++f) {
      acc += loss_of(skel, layout, frames[f], input.frames.row(f).transpose(), cfg);
    }
    return acc;
  };

  double loss = total_loss(fit.frame_fits);
  double mu = 1e-3;
  for (int it = 0; it < iterations; ++it) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(rows_per_frame * T, n_params);
    Eigen::VectorXd r(rows_per_frame * T);
    for (int f = 0; f < T; ++f) {
      const MarkersJacobian mj =
          markers_with_jacobian(skel, layout, fit.frame_fits[f], all);
      const Eigen::VectorXd rf = fit_residual(
          mj.markers, input.frames.row(f).transpose(), fit.frame_fits[f], cfg);
      r.segment(rows_per_frame * f, rows_per_frame) = rf;
      // Marker rows: pose columns per frame, shape columns shared.
      J.block(rows_per_frame * f, kPose * f, V3, kPose) = mj.jac.leftCols(kPose);
      J.block(rows_per_frame * f, kPose * T, V3, 10) = mj.jac.rightCols(10);
      // Prior rows touch only this frame's pose coefficients.
      J.block(rows_per_frame * f + V3, kPose * f + 9, 32, 32) =
          std::sqrt(cfg.lambda1) * Eigen::MatrixXd::Identity(32, 32);
      J.block(rows_per_frame * f + V3 + 32, kPose * f + 41, 24, 24) =
          std::sqrt(cfg.lambda2) * Eigen::MatrixXd::Identity(24, 24);
    }
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    const Eigen::VectorXd damping = JtJ.diagonal().cwiseMax(1e-12);

    bool accepted = false;
    while (mu < 1e8) {
      const Eigen::VectorXd delta =
          (JtJ + mu * damping.asDiagonal().toDenseMatrix()).ldlt().solve(-g);
      std::vector<BodyParams> candidate = fit.frame_fits;
      const Eigen::VectorXd beta_candidate =
          fit.beta + delta.segment(kPose * T, 10);
      double candidate_loss;
      try {
        for (int f = 0; f < T; ++f) {
          const ParamBlocks pose = ParamBlocks::pose_all();
          unpack_params(
              pack_params(candidate[f], pose) + delta.segment(kPose * f, kPose),
              pose, candidate[f]);
          candidate[f].beta = beta_candidate;
          canonicalize_r6(candidate[f]);
        }
        candidate_loss = total_loss(candidate);
      } catch (const DomainError&) {
        candidate_loss = std::numeric_limits<double>::infinity();
      }
      if (std::isnan(candidate_loss)) {
        throw DomainError("fit_shape_from_input: loss went NaN");
      }
      if (candidate_loss < loss) {
        fit.frame_fits = std::move(candidate);
        fit.beta = beta_candidate;
        const double gain = loss - candidate_loss;
        loss = candidate_loss;
        mu = std::max(mu / 3.0, 1e-12);
        accepted = true;
        if (gain < cfg.tol) {
          fit.converged = true;
          it = iterations;
        }
        break;
      }
      mu *= 10.0;
    }
    if (!accepted) {
      fit.converged = true;  // damping exhausted at a stationary point
      break;
    }
  }
  for (auto& p : fit.frame_fits) canonicalize_r6(p);
  fit.final_loss = loss;
  return fit;
}

MotionSequence ProjectedRollout::raw_sequence() const {
  MotionSequence out;
  out.frame_rate = frame_rate;
  out.layout = layout;
  out.frames.resize(frames.size(), frames.empty() ? 0 : frames[0].raw.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    out.frames.row(t) = frames[t].raw.transpose();
  }
  return out;
}

MotionSequence ProjectedRollout::projected_sequence() const {
  MotionSequence out;
  out.frame_rate = frame_rate;
  out.layout = layout;
  out.frames.resize(frames.size(), frames.empty() ? 0 : frames[0].projected.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    out.frames.row(t) = frames[t].projected.transpose();
  }
  return out;
}

Eigen::MatrixXd ProjectedRollout::fitted_joint_track(const SkeletonDef& skel) const {
  Eigen::MatrixXd track(frames.size(), 3 * skel.joint_count());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const Eigen::MatrixXd joints = forward_kinematics(skel, frames[t].fitted);
    for (int j = 0; j < skel.joint_count(); ++j) {
      track.block<1, 3>(t, 3 * j) = joints.row(j);
    }
  }
  return track;
}

ProjectedRollout rollout_with_projection(const Cvae& cvae,
                                         const nn::ParamStore& cvae_store,
                                         const MotionSequence& condition,
                                         const Eigen::MatrixXd& z,
                                         const SkeletonDef& skel,
                                         const MarkerLayout& layout,
                                         const FitConfig& cfg,
                                         const ShapeFit* input_shape) {
  if (condition.dim() != layout.dim()) {
    throw ConfigError("rollout_with_projection: condition width disagrees with layout");
  }
  const bool project = cfg.projection_enabled();

  ProjectedRollout rollout;
  rollout.frame_rate = condition.frame_rate;
  rollout.layout = condition.layout;

  BodyParams warm = BodyParams::rest();
  if (project) {
    // Body shape comes from the input sequence and stays frozen; the last
    // input fit warm-starts frame 0.
    ShapeFit local;
    if (input_shape == nullptr) {
      local = fit_shape_from_input(skel, layout, condition, cfg);
      input_shape = &local;
    }
    rollout.beta = input_shape->beta;
    warm = input_shape->frame_fits.back();
  } else {
    rollout.beta = Eigen::VectorXd::Zero(10);
  }

  nn::PlainBackend backend{&cvae_store};
  auto roll = cvae.begin_decode(backend, condition, z);
  double fit_seconds = 0.0;
  for (int t = 0; t < cvae.config().n_future; ++t) {
    ProjectedFrame frame;
    frame.raw = roll.step();
    if (project) {
      const auto fit_start = std::chrono::steady_clock::now();
      FitResult fitted;
      try {
        fitted = fit_frame(skel, layout, frame.raw, warm, cfg);
      } catch (const DomainError& e) {
        throw DomainError("frame " + std::to_string(t) + ": " + e.what());
      }
      fit_seconds += std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - fit_start)
                         .count();
      warm = fitted.params;
      frame.fitted = fitted.params;
      frame.projected = markers_from_body(skel, layout, fitted.params);
      frame.iterations = fitted.diag.iterations;
      frame.fit_loss = fitted.diag.final_loss;
      roll.override_prev(frame.projected);
    } else {
      frame.fitted = warm;
      frame.projected = frame.raw;
    }
    rollout.frames.push_back(std::move(frame));
  }
  rollout.fit_seconds = fit_seconds;
  return rollout;
}

std::string rollout_to_json(const ProjectedRollout& rollout) {
  json doc;
  doc["frame_rate"] = rollout.frame_rate;
  doc["layout"] = rollout.layout;
  doc["beta"] = std::vector<double>(rollout.beta.data(),
                                    rollout.beta.data() + rollout.beta.size());
  doc["fit_seconds"] = rollout.fit_seconds;
  json frames = json::array();
  for (const auto& f : rollout.frames) {
    json fr;
    fr["raw"] = std::vector<double>(f.raw.data(), f.raw.data() + f.raw.size());
    fr["projected"] = std::vector<double>(f.projected.data(),
                                          f.projected.data() + f.projected.size());
    fr["iterations"] = f.iterations;
    fr["fit_loss"] = f.fit_loss;
    json p;
    p["t"] = {f.fitted.t.x(), f.fitted.t.y(), f.fitted.t.z()};
    p["r6"] = std::vector<double>(f.fitted.r6.data(), f.fitted.r6.data() + 6);
    p["theta"] = std::vector<double>(f.fitted.theta.data(),
                                     f.fitted.theta.data() + f.fitted.theta.size());
    p["theta_h"] = std::vector<double>(
        f.fitted.theta_h.data(), f.fitted.theta_h.data() + f.fitted.theta_h.size());
    fr["params"] = std::move(p);
    frames.push_back(std::move(fr));
  }
  doc["frames"] = std::move(frames);
  return doc.dump();
}

}  // namespace mopred
