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

#include "mopred/body_model.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mopred/dual.hpp"

namespace mopred {

using nlohmann::json;

BodyParams BodyParams::rest() {
  BodyParams p;
  p.r6 << 1, 0, 0, 0, 1, 0;
  p.beta = Eigen::VectorXd::Zero(10);
  p.theta = Eigen::VectorXd::Zero(32);
  p.theta_h = Eigen::VectorXd::Zero(24);
  return p;
}

Eigen::VectorXd pack_params(const BodyParams& p, const ParamBlocks& blocks) {
  Eigen::VectorXd x(blocks.active_count());
  int at = 0;
  if (blocks.t) { x.segment<3>(at) = p.t; at += 3; }
  if (blocks.r6) { x.segment<6>(at) = p.r6; at += 6; }
  if (blocks.theta) { x.segment(at, 32) = p.theta; at += 32; }
  if (blocks.theta_h) { x.segment(at, 24) = p.theta_h; at += 24; }
  if (blocks.beta) { x.segment(at, 10) = p.beta; at += 10; }
  return x;
}

void unpack_params(const Eigen::VectorXd& x, const ParamBlocks& blocks,
                   BodyParams& p) {
  if (x.size() != blocks.active_count()) {
    throw ConfigError("unpack_params: size disagrees with active blocks");
  }
  int at = 0;
  if (blocks.t) { p.t = x.segment<3>(at); at += 3; }
  if (blocks.r6) { p.r6 = x.segment<6>(at); at += 6; }
  if (blocks.theta) { p.theta = x.segment(at, 32); at += 32; }
  if (blocks.theta_h) { p.theta_h = x.segment(at, 24); at += 24; }
  if (blocks.beta) { p.beta = x.segment(at, 10); at += 10; }
}

int SkeletonDef::joint_index(const std::string& joint_name) const {
  for (std::size_t i = 0; i < joints.size(); ++i) {
    if (joints[i].name == joint_name) return static_cast<int>(i);
  }
  throw ConfigError("skeleton '" + name + "' has no joint '" + joint_name + "'");
}

bool SkeletonDef::is_hand_joint(int j) const {
  for (const int h : hand_joints) {
    if (h == j) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Generic kinematics over a scalar type (double or Dual).

namespace {

template <class T>
using Vec3T = std::array<T, 3>;

template <class T>
struct Mat3T {
  std::array<T, 9> m;  // row-major
  const T& operator()(int r, int c) const { return m[3 * r + c]; }
  T& operator()(int r, int c) { return m[3 * r + c]; }
};

template <class T>
Mat3T<T> mat_identity() {
  Mat3T<T> out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out(r, c) = T(r == c ? 1.0 : 0.0);
  }
  return out;
}

template <class T>
Mat3T<T> mat_mul(const Mat3T<T>& a, const Mat3T<T>& b) {
  Mat3T<T> out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      out(r, c) = a(r, 0) * b(0, c) + a(r, 1) * b(1, c) + a(r, 2) * b(2, c);
    }
  }
  return out;
}

template <class T>
Vec3T<T> mat_vec(const Mat3T<T>& a, const Vec3T<T>& v) {
  Vec3T<T> out;
  for (int r = 0; r < 3; ++r) {
    out[r] = a(r, 0) * v[0] + a(r, 1) * v[1] + a(r, 2) * v[2];
  }
  return out;
}

template <class T>
Vec3T<T> vec_add(const Vec3T<T>& a, const Vec3T<T>& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

template <class T>
T vec_dot(const Vec3T<T>& a, const Vec3T<T>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

template <class T>
Vec3T<T> vec_cross(const Vec3T<T>& a, const Vec3T<T>& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}

// Gram-Schmidt of the two embedded columns; third column by cross product.
template <class T>
Mat3T<T> rot6d_generic(const std::array<T, 6>& r6) {
  using std::sqrt;
  Vec3T<T> a1 = {r6[0], r6[1], r6[2]};
  Vec3T<T> a2 = {r6[3], r6[4], r6[5]};
  T n1sq = vec_dot(a1, a1);
  if (scalar_value(n1sq) < 1e-16) {
    throw DomainError("rot6d: first column is degenerate");
  }
  T inv1 = T(1.0) / sqrt(n1sq);
  Vec3T<T> b1 = {a1[0] * inv1, a1[1] * inv1, a1[2] * inv1};
  T proj = vec_dot(b1, a2);
  Vec3T<T> r = {a2[0] - proj * b1[0], a2[1] - proj * b1[1], a2[2] - proj * b1[2]};
  T n2sq = vec_dot(r, r);
  if (scalar_value(n2sq) < 1e-16) {
    throw DomainError("rot6d: second column is degenerate after projection");
  }
  T inv2 = T(1.0) / sqrt(n2sq);
  Vec3T<T> b2 = {r[0] * inv2, r[1] * inv2, r[2] * inv2};
  Vec3T<T> b3 = vec_cross(b1, b2);
  Mat3T<T> out;
  for (int i = 0; i < 3; ++i) {
    out(i, 0) = b1[i];
    out(i, 1) = b2[i];
    out(i, 2) = b3[i];
  }
  return out;
}

// R = Rz(az) * Ry(ay) * Rx(ax)
template <class T>
Mat3T<T> euler_zyx(const T& ax, const T& ay, const T& az) {
  using std::cos;
  using std::sin;
  const T cx = cos(ax), sx = sin(ax);
  const T cy = cos(ay), sy = sin(ay);
  const T cz = cos(az), sz = sin(az);
  Mat3T<T> out;
  out(0, 0) = cz * cy;
  out(0, 1) = cz * sy * sx - sz * cx;
  out(0, 2) = cz * sy * cx + sz * sx;
  out(1, 0) = sz * cy;
  out(1, 1) = sz * sy * sx + cz * cx;
  out(1, 2) = sz * sy * cx - cz * sx;
  out(2, 0) = -sy;
  out(2, 1) = cy * sx;
  out(2, 2) = cy * cx;
  return out;
}

template <class T>
struct PoseSnapshot {
  std::vector<Mat3T<T>> rot;
  std::vector<Vec3T<T>> pos;
};

// Lifts the packed parameter vector to scalars of type T, seeding tangents
// for active entries when T == Dual.
struct LiftedParams {
  std::vector<Dual> t, r6, theta, theta_h, beta;
};

std::vector<Dual> lift_block(const Eigen::VectorXd& values, bool active,
                             int dim, int& cursor) {
  std::vector<Dual> out(values.size());
  for (int i = 0; i < values.size(); ++i) {
    out[i] = active ? Dual::seeded(values(i), dim, cursor++) : Dual(values(i));
  }
  return out;
}

LiftedParams lift_params(const BodyParams& p, const ParamBlocks& blocks) {
  LiftedParams out;
  const int dim = blocks.active_count();
  int cursor = 0;
  out.t = lift_block(p.t, blocks.t, dim, cursor);
  out.r6 = lift_block(p.r6, blocks.r6, dim, cursor);
  out.theta = lift_block(p.theta, blocks.theta, dim, cursor);
  out.theta_h = lift_block(p.theta_h, blocks.theta_h, dim, cursor);
  out.beta = lift_block(p.beta, blocks.beta, dim, cursor);
  return out;
}

template <class T>
struct ScalarParams {
  std::vector<T> t, r6, theta, theta_h, beta;
};

ScalarParams<double> to_scalar_params(const BodyParams& p) {
  ScalarParams<double> out;
  auto fill = [](const auto& src, std::vector<double>& dst) {
    dst.assign(src.data(), src.data() + src.size());
  };
  fill(p.t, out.t);
  fill(p.r6, out.r6);
  fill(p.theta, out.theta);
  fill(p.theta_h, out.theta_h);
  fill(p.beta, out.beta);
  return out;
}

ScalarParams<Dual> to_scalar_params(const LiftedParams& p) {
  return {p.t, p.r6, p.theta, p.theta_h, p.beta};
}

template <class T>
PoseSnapshot<T> fk_generic(const SkeletonDef& skel, const ScalarParams<T>& p) {
  const int J = skel.joint_count();
  PoseSnapshot<T> snap;
  snap.rot.resize(J);
  snap.pos.resize(J);

  // Per-joint Euler angles from the pose embeddings.
  std::vector<std::array<T, 3>> angles(J, {T(0.0), T(0.0), T(0.0)});
  int body_row = 0;
  int hand_row = 0;
  for (int j = 1; j < J; ++j) {
    if (skel.is_hand_joint(j)) {
      for (int a = 0; a < 3; ++a) {
        T acc(0.0);
        for (int c = 0; c < skel.hand_embed.cols(); ++c) {
          const double w = skel.hand_embed(hand_row + a, c);
          if (w != 0.0) acc += T(w) * p.theta_h[c];
        }
        angles[j][a] = acc;
      }
      hand_row += 3;
    } else {
      for (int a = 0; a < 3; ++a) {
        T acc(0.0);
        for (int c = 0; c < skel.pose_embed.cols(); ++c) {
          const double w = skel.pose_embed(body_row + a, c);
          if (w != 0.0) acc += T(w) * p.theta[c];
        }
        angles[j][a] = acc;
      }
      body_row += 3;
    }
  }

  for (int j = 0; j < J; ++j) {
    // Rest offset shifted by the shape blend.
    Vec3T<T> offset;
    for (int a = 0; a < 3; ++a) {
      T acc(skel.joints[j].offset(a));
      for (int c = 0; c < skel.shape_blend.cols(); ++c) {
        const double w = skel.shape_blend(3 * j + a, c);
        if (w != 0.0) acc += T(w) * p.beta[c];
      }
      offset[a] = acc;
    }

    if (j == 0) {
      std::array<T, 6> r6;
      for (int i = 0; i < 6; ++i) r6[i] = p.r6[i];
      snap.rot[0] = rot6d_generic(r6);
      snap.pos[0] = {p.t[0] + offset[0], p.t[1] + offset[1], p.t[2] + offset[2]};
      continue;
    }
    const int parent = skel.joints[j].parent;
    const Mat3T<T> local = euler_zyx(angles[j][0], angles[j][1], angles[j][2]);
    snap.rot[j] = mat_mul(snap.rot[parent], local);
    snap.pos[j] = vec_add(snap.pos[parent], mat_vec(snap.rot[parent], offset));
  }
  return snap;
}

template <class T>
Vec3T<T> marker_point(const PoseSnapshot<T>& snap, int parent,
                      const Eigen::Vector3d& offset) {
  Vec3T<T> local = {T(offset.x()), T(offset.y()), T(offset.z())};
  return vec_add(snap.pos[parent], mat_vec(snap.rot[parent], local));
}

std::vector<int> resolve_marker_parents(const SkeletonDef& skel,
                                        const MarkerLayout& layout) {
  std::vector<int> parents;
  parents.reserve(layout.markers.size());
  for (const auto& m : layout.markers) {
    parents.push_back(skel.joint_index(m.parent));
  }
  return parents;
}

void validate_skeleton(const SkeletonDef& skel) {
  for (std::size_t j = 0; j < skel.joints.size(); ++j) {
    const int parent = skel.joints[j].parent;
    if (j == 0) {
      if (parent != -1) throw ConfigError("skeleton root must have parent -1");
    } else if (parent < 0 || parent >= static_cast<int>(j)) {
      throw ConfigError("skeleton joint '" + skel.joints[j].name +
                        "' breaks topological order");
    }
  }
}

}  // namespace

Eigen::Matrix3d rot6d_to_matrix(const Eigen::Matrix<double, 6, 1>& r6) {
  std::array<double, 6> a;
  for (int i = 0; i < 6; ++i) a[i] = r6(i);
  const Mat3T<double> m = rot6d_generic(a);
  Eigen::Matrix3d out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out(r, c) = m(r, c);
  }
  return out;
}

Eigen::MatrixXd forward_kinematics(const SkeletonDef& skel,
                                   const BodyParams& params) {
  validate_skeleton(skel);
  const auto snap = fk_generic(skel, to_scalar_params(params));
  Eigen::MatrixXd joints(skel.joint_count(), 3);
  for (int j = 0; j < skel.joint_count(); ++j) {
    for (int a = 0; a < 3; ++a) joints(j, a) = snap.pos[j][a];
  }
  return joints;
}

Eigen::VectorXd markers_from_body(const SkeletonDef& skel,
                                  const MarkerLayout& layout,
                                  const BodyParams& params) {
  validate_skeleton(skel);
  const auto parents = resolve_marker_parents(skel, layout);
  const auto snap = fk_generic(skel, to_scalar_params(params));
  Eigen::VectorXd out(layout.dim());
  for (int i = 0; i < layout.count(); ++i) {
    const auto p = marker_point(snap, parents[i], layout.markers[i].offset);
    for (int a = 0; a < 3; ++a) out(3 * i + a) = p[a];
  }
  return out;
}

MarkersJacobian markers_with_jacobian(const SkeletonDef& skel,
                                      const MarkerLayout& layout,
                                      const BodyParams& params,
                                      const ParamBlocks& blocks) {
  validate_skeleton(skel);
  const auto parents = resolve_marker_parents(skel, layout);
  const int dim = blocks.active_count();
  const auto snap = fk_generic(skel, to_scalar_params(lift_params(params, blocks)));
  MarkersJacobian out;
  out.markers.resize(layout.dim());
  out.jac = Eigen::MatrixXd::Zero(layout.dim(), dim);
  for (int i = 0; i < layout.count(); ++i) {
    const auto p = marker_point(snap, parents[i], layout.markers[i].offset);
    for (int a = 0; a < 3; ++a) {
      out.markers(3 * i + a) = p[a].v;
      if (p[a].has_d()) out.jac.row(3 * i + a) = p[a].d.transpose();
    }
  }
  return out;
}

JointsJacobian joints_with_jacobian(const SkeletonDef& skel,
                                    const BodyParams& params,
                                    const ParamBlocks& blocks) {
  validate_skeleton(skel);
  const int dim = blocks.active_count();
  const auto snap = fk_generic(skel, to_scalar_params(lift_params(params, blocks)));
  JointsJacobian out;
  out.joints.resize(skel.joint_count(), 3);
  out.jac = Eigen::MatrixXd::Zero(3 * skel.joint_count(), dim);
  for (int j = 0; j < skel.joint_count(); ++j) {
    for (int a = 0; a < 3; ++a) {
      out.joints(j, a) = snap.pos[j][a].v;
      if (snap.pos[j][a].has_d()) out.jac.row(3 * j + a) = snap.pos[j][a].d.transpose();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Built-in rig.

namespace {

struct JointSpec {
  const char* name;
  const char* parent;
  double x, y, z;
};

// +X right (left hip to right hip), +Y forward, +Z up. Pelvis local origin;
// standing height is supplied through the global translation.
constexpr JointSpec kJointSpecs[] = {
    {"pelvis", "", 0, 0, 0},
    {"l_hip", "pelvis", -0.09, 0.0, -0.05},
    {"r_hip", "pelvis", 0.09, 0.0, -0.05},
    {"spine1", "pelvis", 0.0, 0.01, 0.11},
    {"l_knee", "l_hip", 0.0, 0.0, -0.40},
    {"r_knee", "r_hip", 0.0, 0.0, -0.40},
    {"spine2", "spine1", 0.0, 0.01, 0.13},
    {"l_ankle", "l_knee", 0.0, 0.0, -0.42},
    {"r_ankle", "r_knee", 0.0, 0.0, -0.42},
    {"spine3", "spine2", 0.0, 0.005, 0.13},
    {"l_foot", "l_ankle", 0.0, 0.12, -0.06},
    {"r_foot", "r_ankle", 0.0, 0.12, -0.06},
    {"neck", "spine3", 0.0, -0.01, 0.15},
    {"l_collar", "spine3", -0.05, 0.02, 0.10},
    {"r_collar", "spine3", 0.05, 0.02, 0.10},
    {"head", "neck", 0.0, 0.02, 0.12},
    {"l_shoulder", "l_collar", -0.12, 0.0, 0.02},
    {"r_shoulder", "r_collar", 0.12, 0.0, 0.02},
    {"l_elbow", "l_shoulder", -0.10, 0.0, -0.25},
    {"r_elbow", "r_shoulder", 0.10, 0.0, -0.25},
    {"l_wrist", "l_elbow", -0.06, 0.0, -0.24},
    {"r_wrist", "r_elbow", 0.06, 0.0, -0.24},
    {"l_hand", "l_wrist", -0.02, 0.0, -0.08},
    {"r_hand", "r_wrist", 0.02, 0.0, -0.08},
};

struct EmbedSpec {
  const char* joint;
  int axis;  // 0=x 1=y 2=z
  double gain;
};

// Interpretable pose directions occupy the leading coefficients; the rest are
// small dense mixtures so the coefficient space stays 32-dimensional.
constexpr EmbedSpec kPoseDofs[] = {
    {"l_hip", 0, 1.0},      {"r_hip", 0, 1.0},      {"l_knee", 0, 1.0},
    {"r_knee", 0, 1.0},     {"l_shoulder", 0, 1.0}, {"r_shoulder", 0, 1.0},
    {"l_elbow", 0, 1.0},    {"r_elbow", 0, 1.0},    {"spine1", 0, 0.5},
    {"spine1", 2, 0.5},     {"neck", 0, 0.5},       {"l_ankle", 0, 0.5},
    {"r_ankle", 0, 0.5},    {"l_shoulder", 1, 1.0}, {"r_shoulder", 1, 1.0},
    {"l_hip", 2, 0.5},      {"r_hip", 2, 0.5},
};

constexpr EmbedSpec kHandDofs[] = {
    {"l_hand", 0, 1.0},
    {"r_hand", 0, 1.0},
    {"l_hand", 2, 0.5},
    {"r_hand", 2, 0.5},
};

int body_angle_row(const SkeletonDef& skel, int joint) {
  // Rotating body joints are everything except the root and the hand joints,
  // in index order.
  int row = 0;
  for (int j = 1; j < joint; ++j) {
    if (!skel.is_hand_joint(j)) row += 3;
  }
  return row;
}

}  // namespace

SkeletonDef desk_skeleton() {
  SkeletonDef skel;
  skel.name = "desk24";
  for (const auto& spec : kJointSpecs) {
    JointDef j;
    j.name = spec.name;
    j.parent = std::string(spec.parent).empty() ? -1 : skel.joint_index(spec.parent);
    j.offset = Eigen::Vector3d(spec.x, spec.y, spec.z);
    skel.joints.push_back(std::move(j));
  }
  skel.hand_joints = {skel.joint_index("l_hand"), skel.joint_index("r_hand")};

  const int J = skel.joint_count();
  const int body_rot = J - 1 - static_cast<int>(skel.hand_joints.size());
  skel.pose_embed = Eigen::MatrixXd::Zero(3 * body_rot, 32);
  skel.hand_embed = Eigen::MatrixXd::Zero(3 * skel.hand_joints.size(), 24);
  skel.shape_blend = Eigen::MatrixXd::Zero(3 * J, 10);

  int col = 0;
  for (const auto& dof : kPoseDofs) {
    const int j = skel.joint_index(dof.joint);
    skel.pose_embed(body_angle_row(skel, j) + dof.axis, col++) = dof.gain;
  }
  Rng rng(0x6d6f707265640001ull);
  for (; col < 32; ++col) {
    for (int r = 0; r < skel.pose_embed.rows(); ++r) {
      skel.pose_embed(r, col) = 0.08 * rng.normal();
    }
  }

  int hcol = 0;
  for (const auto& dof : kHandDofs) {
    int hand_row = 0;
    for (std::size_t h = 0; h < skel.hand_joints.size(); ++h) {
      if (skel.hand_joints[h] == skel.joint_index(dof.joint)) hand_row = 3 * static_cast<int>(h);
    }
    skel.hand_embed(hand_row + dof.axis, hcol++) = dof.gain;
  }
  for (; hcol < 24; ++hcol) {
    for (int r = 0; r < skel.hand_embed.rows(); ++r) {
      skel.hand_embed(r, hcol) = 0.05 * rng.normal();
    }
  }

  // Shape directions: overall bone scale, leg length, arm length, then small
  // dense perturbations.
  for (int j = 1; j < J; ++j) {
    for (int a = 0; a < 3; ++a) {
      skel.shape_blend(3 * j + a, 0) = 0.08 * skel.joints[j].offset(a);
    }
  }
  for (const char* name : {"l_knee", "r_knee", "l_ankle", "r_ankle"}) {
    const int j = skel.joint_index(name);
    for (int a = 0; a < 3; ++a) {
      skel.shape_blend(3 * j + a, 1) = 0.10 * skel.joints[j].offset(a);
    }
  }
  for (const char* name : {"l_elbow", "r_elbow", "l_wrist", "r_wrist"}) {
    const int j = skel.joint_index(name);
    for (int a = 0; a < 3; ++a) {
      skel.shape_blend(3 * j + a, 2) = 0.10 * skel.joints[j].offset(a);
    }
  }
  for (int c = 3; c < 10; ++c) {
    for (int j = 1; j < J; ++j) {
      for (int a = 0; a < 3; ++a) {
        skel.shape_blend(3 * j + a, c) = 0.015 * rng.normal();
      }
    }
  }
  return skel;
}

namespace {

struct MarkerSpec {
  const char* name;
  const char* parent;
  double x, y, z;
};

// CMU-style 41 marker placement. Head and torso groups attach to single
// joints so their pairwise distances are pose-invariant.
constexpr MarkerSpec kCmu41[] = {
    {"LFHD", "head", -0.065, 0.075, 0.09},
    {"RFHD", "head", 0.065, 0.075, 0.09},
    {"LBHD", "head", -0.065, -0.075, 0.09},
    {"RBHD", "head", 0.065, -0.075, 0.09},
    {"C7", "spine3", 0.0, -0.07, 0.12},
    {"T10", "spine2", 0.0, -0.09, 0.0},
    {"CLAV", "spine3", 0.0, 0.08, 0.10},
    {"STRN", "spine2", 0.0, 0.10, 0.02},
    {"RBAC", "spine2", 0.07, -0.09, 0.05},
    {"LSHO", "spine3", -0.16, 0.0, 0.11},
    {"RSHO", "spine3", 0.16, 0.0, 0.11},
    {"LUPA", "l_shoulder", -0.06, 0.01, -0.12},
    {"RUPA", "r_shoulder", 0.06, 0.01, -0.12},
    {"LELB", "l_elbow", -0.035, 0.0, 0.01},
    {"RELB", "r_elbow", 0.035, 0.0, 0.01},
    {"LFRM", "l_elbow", -0.04, 0.01, -0.12},
    {"RFRM", "r_elbow", 0.04, 0.01, -0.12},
    {"LWRA", "l_wrist", -0.03, 0.025, 0.0},
    {"LWRB", "l_wrist", -0.03, -0.025, 0.0},
    {"RWRA", "r_wrist", 0.03, 0.025, 0.0},
    {"RWRB", "r_wrist", 0.03, -0.025, 0.0},
    {"LFIN", "l_hand", -0.03, 0.0, -0.06},
    {"RFIN", "r_hand", 0.03, 0.0, -0.06},
    {"LFWT", "pelvis", -0.11, 0.10, 0.02},
    {"RFWT", "pelvis", 0.11, 0.10, 0.02},
    {"LBWT", "pelvis", -0.09, -0.10, 0.03},
    {"RBWT", "pelvis", 0.09, -0.10, 0.03},
    {"LTHI", "l_hip", -0.06, 0.04, -0.20},
    {"RTHI", "r_hip", 0.06, 0.04, -0.20},
    {"LKNE", "l_knee", -0.05, 0.0, 0.01},
    {"RKNE", "r_knee", 0.05, 0.0, 0.01},
    {"LSHN", "l_knee", -0.04, 0.03, -0.20},
    {"RSHN", "r_knee", 0.04, 0.03, -0.20},
    {"LANK", "l_ankle", -0.04, 0.0, 0.0},
    {"RANK", "r_ankle", 0.04, 0.0, 0.0},
    {"LHEE", "l_ankle", 0.0, -0.06, -0.05},
    {"RHEE", "r_ankle", 0.0, -0.06, -0.05},
    {"LTOE", "l_foot", 0.0, 0.07, -0.02},
    {"RTOE", "r_foot", 0.0, 0.07, -0.02},
    {"LMT5", "l_foot", -0.04, 0.03, -0.02},
    {"RMT5", "r_foot", 0.04, 0.03, -0.02},
};

// Densified 67-marker placement: the 41 above plus extra markers per segment.
constexpr MarkerSpec kSsm2Extra[] = {
    {"LFSH", "spine3", -0.10, 0.07, 0.08},
    {"RFSH", "spine3", 0.10, 0.07, 0.08},
    {"LBSH", "spine3", -0.10, -0.07, 0.09},
    {"RBSH", "spine3", 0.10, -0.07, 0.09},
    {"LRIB", "spine2", -0.11, 0.02, 0.01},
    {"RRIB", "spine2", 0.11, 0.02, 0.01},
    {"LPSI", "pelvis", -0.05, -0.11, 0.04},
    {"RPSI", "pelvis", 0.05, -0.11, 0.04},
    {"LTHI2", "l_hip", -0.065, -0.03, -0.28},
    {"RTHI2", "r_hip", 0.065, -0.03, -0.28},
    {"LKNI", "l_knee", 0.045, 0.0, 0.01},
    {"RKNI", "r_knee", -0.045, 0.0, 0.01},
    {"LSHN2", "l_knee", -0.035, 0.04, -0.30},
    {"RSHN2", "r_knee", 0.035, 0.04, -0.30},
    {"LANI", "l_ankle", 0.035, 0.0, 0.0},
    {"RANI", "r_ankle", -0.035, 0.0, 0.0},
    {"LUPA2", "l_shoulder", -0.055, -0.02, -0.18},
    {"RUPA2", "r_shoulder", 0.055, -0.02, -0.18},
    {"LELBI", "l_elbow", 0.03, 0.0, 0.01},
    {"RELBI", "r_elbow", -0.03, 0.0, 0.01},
    {"LFRM2", "l_elbow", -0.035, -0.02, -0.17},
    {"RFRM2", "r_elbow", 0.035, -0.02, -0.17},
    {"LHND", "l_hand", -0.025, 0.02, -0.03},
    {"RHND", "r_hand", 0.025, 0.02, -0.03},
    {"LTHD", "head", -0.075, 0.0, 0.05},
    {"RTHD", "head", 0.075, 0.0, 0.05},
};

constexpr const char* kToy10[] = {"LFHD", "RFHD", "C7",   "CLAV", "LFWT",
                                  "RFWT", "LWRA", "RWRA", "LHEE", "RHEE"};

// Zero-offset markers that echo limb joints, for joint-level statistics on
// predicted clouds.
constexpr MarkerSpec kJointEchoes[] = {
    {"JLSH", "l_shoulder", 0, 0, 0}, {"JLEL", "l_elbow", 0, 0, 0},
    {"JLWR", "l_wrist", 0, 0, 0},    {"JRSH", "r_shoulder", 0, 0, 0},
    {"JREL", "r_elbow", 0, 0, 0},    {"JRWR", "r_wrist", 0, 0, 0},
    {"JLHP", "l_hip", 0, 0, 0},      {"JLKN", "l_knee", 0, 0, 0},
    {"JLAK", "l_ankle", 0, 0, 0},    {"JRHP", "r_hip", 0, 0, 0},
    {"JRKN", "r_knee", 0, 0, 0},     {"JRAK", "r_ankle", 0, 0, 0},
};

constexpr const char* kEval26Groups[] = {"LFHD", "RFHD", "LBHD", "RBHD",
                                         "LSHO", "RSHO", "CLAV", "C7",
                                         "LFWT", "RFWT", "LBWT", "RBWT",
                                         "LHEE", "RHEE"};

MarkerDef from_spec(const MarkerSpec& s) {
  return {s.name, s.parent, Eigen::Vector3d(s.x, s.y, s.z)};
}

}  // namespace

MarkerLayout cmu41_layout() {
  MarkerLayout layout;
  layout.name = "cmu41";
  for (const auto& s : kCmu41) layout.markers.push_back(from_spec(s));
  return layout;
}

MarkerLayout ssm2_67_layout() {
  MarkerLayout layout = cmu41_layout();
  layout.name = "ssm2_67";
  for (const auto& s : kSsm2Extra) layout.markers.push_back(from_spec(s));
  return layout;
}

MarkerLayout toy10_layout() {
  const MarkerLayout full = cmu41_layout();
  MarkerLayout layout;
  layout.name = "toy10";
  for (const char* name : kToy10) {
    layout.markers.push_back(full.markers[full.index_of(name)]);
  }
  return layout;
}

MarkerLayout eval26_layout() {
  const MarkerLayout full = cmu41_layout();
  MarkerLayout layout;
  layout.name = "eval26";
  for (const char* name : kEval26Groups) {
    layout.markers.push_back(full.markers[full.index_of(name)]);
  }
  for (const auto& s : kJointEchoes) layout.markers.push_back(from_spec(s));
  return layout;
}

MarkerLayout builtin_layout(const std::string& name) {
  if (name == "cmu41") return cmu41_layout();
  if (name == "ssm2_67") return ssm2_67_layout();
  if (name == "toy10") return toy10_layout();
  if (name == "eval26") return eval26_layout();
  throw ConfigError("unknown built-in layout '" + name + "'");
}

std::vector<std::string> builtin_layout_names() {
  return {"cmu41", "ssm2_67", "toy10", "eval26"};
}

std::vector<std::pair<int, int>> limb_bone_pairs(const SkeletonDef& skel) {
  const std::pair<const char*, const char*> bones[] = {
      {"l_shoulder", "l_elbow"}, {"l_elbow", "l_wrist"},
      {"r_shoulder", "r_elbow"}, {"r_elbow", "r_wrist"},
      {"l_hip", "l_knee"},       {"l_knee", "l_ankle"},
      {"r_hip", "r_knee"},       {"r_knee", "r_ankle"},
  };
  std::vector<std::pair<int, int>> out;
  for (const auto& [a, b] : bones) {
    out.emplace_back(skel.joint_index(a), skel.joint_index(b));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Skeleton JSON round trip.

std::string skeleton_to_json(const SkeletonDef& skel) {
  json doc;
  doc["name"] = skel.name;
  json joints = json::array();
  for (const auto& j : skel.joints) {
    joints.push_back({{"name", j.name},
                      {"parent", j.parent < 0 ? "" : skel.joints[j.parent].name},
                      {"offset", {j.offset.x(), j.offset.y(), j.offset.z()}}});
  }
  doc["joints"] = std::move(joints);
  json hands = json::array();
  for (const int h : skel.hand_joints) hands.push_back(skel.joints[h].name);
  doc["hand_joints"] = std::move(hands);
  auto dump_matrix = [](const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) {
      json row = json::array();
      for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  doc["pose_embed"] = dump_matrix(skel.pose_embed);
  doc["hand_embed"] = dump_matrix(skel.hand_embed);
  doc["shape_blend"] = dump_matrix(skel.shape_blend);
  return doc.dump();
}

SkeletonDef skeleton_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed skeleton JSON: ") + e.what());
  }
  SkeletonDef skel;
  skel.name = doc.at("name").get<std::string>();
  for (const auto& j : doc.at("joints")) {
    JointDef def;
    def.name = j.at("name").get<std::string>();
    const std::string parent = j.at("parent").get<std::string>();
    def.parent = parent.empty() ? -1 : skel.joint_index(parent);
    const auto off = j.at("offset");
    def.offset = Eigen::Vector3d(off.at(0).get<double>(), off.at(1).get<double>(),
                                 off.at(2).get<double>());
    skel.joints.push_back(std::move(def));
  }
  for (const auto& h : doc.at("hand_joints")) {
    skel.hand_joints.push_back(skel.joint_index(h.get<std::string>()));
  }
  auto parse_matrix = [](const json& rows) {
    const int R = static_cast<int>(rows.size());
    const int C = R > 0 ? static_cast<int>(rows.at(0).size()) : 0;
    Eigen::MatrixXd m(R, C);
    for (int r = 0; r < R; ++r) {
      for (int c = 0; c < C; ++c) m(r, c) = rows.at(r).at(c).get<double>();
    }
    return m;
  };
  skel.pose_embed = parse_matrix(doc.at("pose_embed"));
  skel.hand_embed = parse_matrix(doc.at("hand_embed"));
  skel.shape_blend = parse_matrix(doc.at("shape_blend"));
  validate_skeleton(skel);
  return skel;
}

SkeletonDef load_skeleton(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open skeleton: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return skeleton_from_json(ss.str());
}

void save_skeleton(const std::string& path, const SkeletonDef& skel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open skeleton for writing: " + path);
  out << skeleton_to_json(skel) << "\n";
}

}  // namespace mopred
