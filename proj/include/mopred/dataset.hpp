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
#include <vector>

#include "mopred/body_model.hpp"
#include "mopred/motion.hpp"

namespace mopred {

enum class MotionFamily { kWalk, kWave, kCircle, kSwing };

MotionFamily family_from_string(const std::string& name);
std::string family_to_string(MotionFamily family);

// Recipe for one synthetic capture. All draws come from the seed, so a spec
// pins its sequence exactly.
struct SynthSpec {
  MotionFamily family = MotionFamily::kWalk;
  double speed_min = 0.8;  // m/s, walk and circle
  double speed_max = 1.2;
  double amp_min = 0.25;  // rad, principal joint amplitude
  double amp_max = 0.45;
  double duration_s = 4.0;
  std::uint64_t seed = 0;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(10);
};

// Raw generator output at 120 Hz: markers plus the joint anchors the world
// reset needs later.
struct RawSequence {
  MotionSequence markers;
  Eigen::MatrixXd hip_l;  // T x 3
  Eigen::MatrixXd hip_r;  // T x 3
  Eigen::MatrixXd root;   // T x 3
};

// Renders body-parameter oscillator trajectories to markers. Walking gaits
// pin the stance heel so the output carries almost no foot skating.
RawSequence synth_generate(const SynthSpec& spec, const SkeletonDef& skel,
                           const MarkerLayout& layout);

// Rigid world re-expression anchored at one frame's hips and root: X from the
// left hip to the right hip (horizontal projection), Z up, Y forward, origin
// at the root's horizontal position with height kept.
struct WorldReset {
  Eigen::Matrix3d rot;     // rows are the canonical axes in world coords
  Eigen::Vector3d origin;  // (root_x, root_y, 0)
};
WorldReset compute_world_reset(const Eigen::Vector3d& hip_l,
                               const Eigen::Vector3d& hip_r,
                               const Eigen::Vector3d& root);
// Applies p' = rot * (p - origin) to every 3-column group of every row.
Eigen::MatrixXd apply_world_reset(const WorldReset& reset,
                                  const Eigen::MatrixXd& frames);

// One canonical condition/future pair, with the frame-0 anchors expressed in
// the canonical frame (so a second reset is the identity).
struct CanonicalClip {
  MotionSequence condition;  // 15 frames @ 15 Hz
  MotionSequence future;     // 45 frames @ 15 Hz
  Eigen::Vector3d hip_l0, hip_r0, root0;
};

struct CanonicalizeConfig {
  int window = 480;          // frames per subsequence at the input rate
  int decimate = 8;          // keep every decimate-th frame (120 -> 15 Hz)
  int condition_frames = 15; // split of the 60-frame clip
};

// Trims non-overlapping windows, decimates, resets the world frame at each
// window's first frame, and splits condition/future. Too-short inputs yield
// an empty list with a warning on stderr.
std::vector<CanonicalClip> canonicalize(const RawSequence& raw,
                                        const CanonicalizeConfig& cfg = {});

// Reassembles a clip into one contiguous sequence (condition then future).
MotionSequence combine_clip(const CanonicalClip& clip);
// Splits a stored sequence back at condition_frames.
void split_clip(const MotionSequence& combined, int condition_frames,
                MotionSequence& condition, MotionSequence& future);

struct SequenceRecord {
  std::string id;
  std::string file;  // relative to the manifest
  long frames = 0;
  double frame_rate = 0.0;
  std::string layout;
  std::string split;      // "train" or "test"
  std::string generator;  // free-form provenance note
  int condition_frames = 0;
};

struct DatasetManifest {
  std::vector<SequenceRecord> records;
};

struct DatasetBundle {
  DatasetManifest manifest;
  std::vector<MotionSequence> sequences;  // parallel to manifest.records
};

// Writes every sequence next to the manifest and the manifest itself.
void save_dataset(const std::string& manifest_path, const DatasetBundle& bundle);
// Loads a manifest plus all referenced sequences; a missing or malformed file
// raises ConfigError naming the record id.
DatasetBundle load_dataset(const std::string& manifest_path);

// Condition/future views over the records of one split ("" = all).
struct ClipView {
  std::string id;
  MotionSequence condition;
  MotionSequence future;
};
std::vector<ClipView> clips_of_split(const DatasetBundle& bundle,
                                     const std::string& split);

}  // namespace mopred
