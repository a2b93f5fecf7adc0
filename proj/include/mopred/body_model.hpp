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
#include <string>
#include <utility>
#include <vector>

#include "mopred/common.hpp"
#include "mopred/motion.hpp"

namespace mopred {

// Parametric body state for one frame: global translation, global orientation
// as a continuous 6-value rotation, shape coefficients, and pose coefficients
// for the body and the hands.
struct BodyParams {
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  Eigen::Matrix<double, 6, 1> r6;
  Eigen::VectorXd beta;     // 10
  Eigen::VectorXd theta;    // 32
  Eigen::VectorXd theta_h;  // 24

  static BodyParams rest();
};

// Which parameter blocks are free; the rest are held fixed. Active blocks are
// packed in the order t, r6, theta, theta_h, beta.
struct ParamBlocks {
  bool t = false;
  bool r6 = false;
  bool theta = false;
  bool theta_h = false;
  bool beta = false;

  int active_count() const {
    return (t ? 3 : 0) + (r6 ? 6 : 0) + (theta ? 32 : 0) + (theta_h ? 24 : 0) +
           (beta ? 10 : 0);
  }
  static ParamBlocks all() { return {true, true, true, true, true}; }
  static ParamBlocks pose_all() { return {true, true, true, true, false}; }
};

Eigen::VectorXd pack_params(const BodyParams& p, const ParamBlocks& blocks);
void unpack_params(const Eigen::VectorXd& x, const ParamBlocks& blocks,
                   BodyParams& p);

struct JointDef {
  std::string name;
  int parent = -1;  // must be < own index; -1 for the root
  Eigen::Vector3d offset;
};

// Desk-scale articulated skeleton. Pose coefficients drive per-joint Euler
// angles through fixed linear embeddings; shape coefficients shift the rest
// offsets through a blend matrix, so joint positions are affine in beta at a
// fixed pose.
struct SkeletonDef {
  std::string name;
  std::vector<JointDef> joints;
  std::vector<int> hand_joints;     // indices driven by theta_h
  Eigen::MatrixXd pose_embed;       // (3 * body_rotating_joints) x 32
  Eigen::MatrixXd hand_embed;       // (3 * hand_joints) x 24
  Eigen::MatrixXd shape_blend;      // (3 * joints) x 10

  int joint_count() const { return static_cast<int>(joints.size()); }
  int joint_index(const std::string& joint_name) const;
  bool is_hand_joint(int j) const;
};

std::string skeleton_to_json(const SkeletonDef& skel);
SkeletonDef skeleton_from_json(const std::string& text);
SkeletonDef load_skeleton(const std::string& path);
void save_skeleton(const std::string& path, const SkeletonDef& skel);

// Built-in rig and marker placements.
SkeletonDef desk_skeleton();
MarkerLayout cmu41_layout();
MarkerLayout ssm2_67_layout();
MarkerLayout toy10_layout();   // reduced debug layout
MarkerLayout eval26_layout();  // rigid groups + heels + joint echoes
MarkerLayout builtin_layout(const std::string& name);
std::vector<std::string> builtin_layout_names();

// Maps the continuous 6-value representation to a rotation matrix via
// Gram-Schmidt on the two embedded columns plus a cross product. Throws
// DomainError when either direction degenerates.
Eigen::Matrix3d rot6d_to_matrix(const Eigen::Matrix<double, 6, 1>& r6);

// Global joint positions (J x 3 matrix, row per joint).
Eigen::MatrixXd forward_kinematics(const SkeletonDef& skel,
                                   const BodyParams& params);

// Marker coordinates as one flat vector [x0 y0 z0 x1 y1 z1 ...] following the
// layout order.
Eigen::VectorXd markers_from_body(const SkeletonDef& skel,
                                  const MarkerLayout& layout,
                                  const BodyParams& params);

// Markers plus the exact Jacobian with respect to the active blocks,
// evaluated by forward-mode differentiation through the kinematic chain.
struct MarkersJacobian {
  Eigen::VectorXd markers;  // 3V
  Eigen::MatrixXd jac;      // 3V x active_count
};
MarkersJacobian markers_with_jacobian(const SkeletonDef& skel,
                                      const MarkerLayout& layout,
                                      const BodyParams& params,
                                      const ParamBlocks& blocks);

// Same forward-mode machinery for joints; used by gradient checks.
struct JointsJacobian {
  Eigen::MatrixXd joints;  // J x 3
  Eigen::MatrixXd jac;     // 3J x active_count (rows grouped per joint)
};
JointsJacobian joints_with_jacobian(const SkeletonDef& skel,
                                    const BodyParams& params,
                                    const ParamBlocks& blocks);

// The eight limb bones as joint index pairs (upper/lower arm and leg, both
// sides), in skeleton order.
std::vector<std::pair<int, int>> limb_bone_pairs(const SkeletonDef& skel);

}  // namespace mopred
