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

#include "mopred/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mopred {

namespace fs = std::filesystem;
using nlohmann::json;

MotionFamily family_from_string(const std::string& name) {
  if (name == "walk") return MotionFamily::kWalk;
  if (name == "wave") return MotionFamily::kWave;
  if (name == "circle") return MotionFamily::kCircle;
  if (name == "swing") return MotionFamily::kSwing;
  throw ConfigError("unknown motion family '" + name + "'");
}

std::string family_to_string(MotionFamily family) {
  switch (family) {
    case MotionFamily::kWalk: return "walk";
    case MotionFamily::kWave: return "wave";
    case MotionFamily::kCircle: return "circle";
    case MotionFamily::kSwing: return "swing";
  }
  return "unknown";
}

namespace {

constexpr double kRate = 120.0;
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kHeelClearance = 0.02;

// Heel probes used for stance handling, independent of the output layout.
MarkerLayout heel_probe_layout() {
  MarkerLayout layout;
  layout.name = "heel_probe";
  layout.markers.push_back({"L", "l_ankle", Eigen::Vector3d(0.0, -0.06, -0.05)});
  layout.markers.push_back({"R", "r_ankle", Eigen::Vector3d(0.0, -0.06, -0.05)});
  return layout;
}

// Pose coefficient slots with interpretable directions (see the skeleton's
// pose embedding).
enum PoseSlot {
  kLHipX = 0,
  kRHipX = 1,
  kLKneeX = 2,
  kRKneeX = 3,
  kLShoX = 4,
  kRShoX = 5,
  kLElbX = 6,
  kRElbX = 7,
  kSpineX = 8,
  kSpineZ = 9,
  kNeckX = 10,
  kLAnkX = 11,
  kRAnkX = 12,
  kLShoY = 13,
  kRShoY = 14,
};

Eigen::Matrix<double, 6, 1> yaw_to_r6(double yaw) {
  Eigen::Matrix<double, 6, 1> r6;
  r6 << std::cos(yaw), std::sin(yaw), 0.0, -std::sin(yaw), std::cos(yaw), 0.0;
  return r6;
}

}  // namespace

RawSequence synth_generate(const SynthSpec& spec, const SkeletonDef& skel,
                           const MarkerLayout& layout) {
  if (spec.duration_s < 4.0) {
    throw DomainError("synth_generate: duration must be at least 4 s");
  }
  Rng rng(spec.seed);
  const double speed = rng.uniform(spec.speed_min, spec.speed_max);
  const double amp = rng.uniform(spec.amp_min, spec.amp_max);
  const double arm_phase = rng.uniform(0.0, kTwoPi);

  const int T = static_cast<int>(std::llround(spec.duration_s * kRate));
  const int lhip = skel.joint_index("l_hip");
  const int rhip = skel.joint_index("r_hip");

  BodyParams base = BodyParams::rest();
  base.beta = spec.beta;

  // Stand the rest body so its heels sit just above the ground plane.
  const MarkerLayout probes = heel_probe_layout();
  const Eigen::VectorXd rest_heels = markers_from_body(skel, probes, base);
  const double base_z = kHeelClearance - std::min(rest_heels(2), rest_heels(5));

  const bool travels = spec.family == MotionFamily::kWalk ||
                       spec.family == MotionFamily::kCircle;
  const double leg = 0.82;  // hip-to-ankle at rest
  double cycle_hz = 0.0;
  if (travels && speed > 1e-9 && std::sin(amp) > 1e-9) {
    cycle_hz = speed / (4.0 * leg * std::sin(amp));
  }
  // Strong knee flexion so the swinging heel clears the stance heel.
  const double knee_amp = 2.5 * amp;
  const double wave_hz = 1.2;

  std::vector<BodyParams> frames_params(T);
  for (int i = 0; i < T; ++i) {
    const double t = i / kRate;
    BodyParams p = base;
    const double gait = kTwoPi * cycle_hz * t;
    double yaw = 0.0;
    Eigen::Vector2d xy = Eigen::Vector2d::Zero();

    switch (spec.family) {
      case MotionFamily::kWalk:
      case MotionFamily::kCircle: {
        if (spec.family == MotionFamily::kCircle) {
          // Heading completes one lap; radius follows from the path length.
          yaw = kTwoPi * t / spec.duration_s;
          const double radius = speed * spec.duration_s / kTwoPi;
          xy = radius * Eigen::Vector2d(1.0 - std::cos(yaw), std::sin(yaw));
        } else {
          xy = Eigen::Vector2d(0.0, speed * t);
        }
        const double swing_l = amp * std::sin(gait);
        const double swing_r = amp * std::sin(gait + 3.14159265358979323846);
        p.theta(kLHipX) = swing_l;
        p.theta(kRHipX) = swing_r;
        // Knee bends while its leg swings forward, lifting the heel.
        const double lift_l = std::max(0.0, std::cos(gait));
        const double lift_r = std::max(0.0, -std::cos(gait));
        p.theta(kLKneeX) = -knee_amp * lift_l * lift_l;
        p.theta(kRKneeX) = -knee_amp * lift_r * lift_r;
        p.theta(kLShoX) = -0.5 * swing_l;
        p.theta(kRShoX) = -0.5 * swing_r;
        p.theta(kLElbX) = 0.3 * amp;
        p.theta(kRElbX) = 0.3 * amp;
        p.theta(kSpineZ) = 0.1 * amp * std::sin(gait);
        p.t.z() = base_z + 0.01 * amp * std::sin(2.0 * gait);
        break;
      }
      case MotionFamily::kWave: {
        const double w = kTwoPi * wave_hz * t + arm_phase;
        p.theta(kRShoY) = 1.2 + 0.5 * amp * std::sin(w);
        p.theta(kRElbX) = 0.8 * amp * std::sin(w * 1.5);
        p.theta(kLShoX) = 0.1 * amp * std::sin(w * 0.5);
        p.theta(kSpineX) = 0.05 * amp * std::sin(w * 0.5);
        p.t.z() = base_z;
        break;
      }
      case MotionFamily::kSwing: {
        const double w = kTwoPi * wave_hz * t + arm_phase;
        p.theta(kSpineZ) = 0.5 * amp * std::sin(w);
        p.theta(kLShoX) = amp * std::sin(w);
        p.theta(kRShoX) = amp * std::sin(w + 0.6);
        p.theta(kLElbX) = 0.6 * amp * std::sin(w + 0.3);
        p.theta(kRElbX) = 0.6 * amp * std::sin(w + 0.9);
        p.theta(kNeckX) = 0.1 * amp * std::sin(w);
        p.theta_h(0) = 0.4 * amp * std::sin(w + 1.0);
        p.theta_h(1) = 0.4 * amp * std::sin(w + 2.0);
        p.t.z() = base_z + 0.005 * amp * std::sin(2.0 * w);
        break;
      }
    }

    p.t.x() = xy.x();
    p.t.y() = xy.y();
    p.r6 = yaw_to_r6(yaw);
    frames_params[i] = std::move(p);
  }

  // Pin the stance heel: remove its frame-to-frame horizontal drift by
  // shifting the root, so planted feet do not skate. The stance side follows
  // the gait phase (a leg stands while it swings backward).
  if (travels && cycle_hz > 0.0) {
    Eigen::MatrixXd heels(T, 6);
    for (int i = 0; i < T; ++i) {
      heels.row(i) = markers_from_body(skel, probes, frames_params[i]).transpose();
    }
    auto stance_of = [&](int i) {
      return std::cos(kTwoPi * cycle_hz * (i / kRate)) <= 0.0 ? 0 : 1;
    };
    Eigen::Vector2d offset = Eigen::Vector2d::Zero();
    int prev_stance = stance_of(0);
    for (int i = 1; i < T; ++i) {
      const int stance = stance_of(i);
      if (stance == prev_stance) {
        const int c = 3 * stance;
        offset.x() -= heels(i, c + 0) - heels(i - 1, c + 0);
        offset.y() -= heels(i, c + 1) - heels(i - 1, c + 1);
      }
      prev_stance = stance;
      frames_params[i].t.x() += offset.x();
      frames_params[i].t.y() += offset.y();
    }
  }

  RawSequence out;
  out.markers.frames.resize(T, layout.dim());
  out.markers.frame_rate = kRate;
  out.markers.layout = layout.name;
  out.hip_l.resize(T, 3);
  out.hip_r.resize(T, 3);
  out.root.resize(T, 3);
  for (int i = 0; i < T; ++i) {
    out.markers.frames.row(i) =
        markers_from_body(skel, layout, frames_params[i]).transpose();
    const Eigen::MatrixXd joints = forward_kinematics(skel, frames_params[i]);
    out.hip_l.row(i) = joints.row(lhip);
    out.hip_r.row(i) = joints.row(rhip);
    out.root.row(i) = joints.row(0);
  }
  return out;
}

WorldReset compute_world_reset(const Eigen::Vector3d& hip_l,
                               const Eigen::Vector3d& hip_r,
                               const Eigen::Vector3d& root) {
  Eigen::Vector3d across = hip_r - hip_l;
  across.z() = 0.0;  // axes are built from the horizontal projection
  if (across.norm() < 1e-12) {
    throw DomainError("world reset: hips are vertically aligned");
  }
  WorldReset reset;
  const Eigen::Vector3d x = across.normalized();
  const Eigen::Vector3d z(0.0, 0.0, 1.0);
  const Eigen::Vector3d y = z.cross(x);
  reset.rot.row(0) = x;
  reset.rot.row(1) = y;
  reset.rot.row(2) = z;
  reset.origin = Eigen::Vector3d(root.x(), root.y(), 0.0);
  return reset;
}

Eigen::MatrixXd apply_world_reset(const WorldReset& reset,
                                  const Eigen::MatrixXd& frames) {
  if (frames.cols() % 3 != 0) {
    throw DomainError("apply_world_reset: width is not a multiple of 3");
  }
  Eigen::MatrixXd out(frames.rows(), frames.cols());
  for (int r = 0; r < frames.rows(); ++r) {
    for (int c = 0; c < frames.cols(); c += 3) {
      const Eigen::Vector3d p = frames.block<1, 3>(r, c).transpose();
      out.block<1, 3>(r, c) = (reset.rot * (p - reset.origin)).transpose();
    }
  }
  return out;
}

std::vector<CanonicalClip> canonicalize(const RawSequence& raw,
                                        const CanonicalizeConfig& cfg) {
  const int T = raw.markers.frame_count();
  std::vector<CanonicalClip> clips;
  if (T < cfg.window) {
    std::cerr << "canonicalize: input of " << T << " frames is shorter than "
              << cfg.window << "; skipped\n";
    return clips;
  }
  const int out_rate_frames = cfg.window / cfg.decimate;
  const double out_rate = raw.markers.frame_rate / cfg.decimate;

  for (int w0 = 0; w0 + cfg.window <= T; w0 += cfg.window) {
    Eigen::MatrixXd frames(out_rate_frames, raw.markers.dim());
    for (int k = 0; k < out_rate_frames; ++k) {
      frames.row(k) = raw.markers.frames.row(w0 + k * cfg.decimate);
    }
    const WorldReset reset = compute_world_reset(
        raw.hip_l.row(w0).transpose(), raw.hip_r.row(w0).transpose(),
        raw.root.row(w0).transpose());
    frames = apply_world_reset(reset, frames);

    CanonicalClip clip;
    const auto xf = [&reset](const Eigen::Vector3d& p) {
      return (reset.rot * (p - reset.origin)).eval();
    };
    clip.hip_l0 = xf(raw.hip_l.row(w0).transpose());
    clip.hip_r0 = xf(raw.hip_r.row(w0).transpose());
    clip.root0 = xf(raw.root.row(w0).transpose());

    clip.condition.frames = frames.topRows(cfg.condition_frames);
    clip.condition.frame_rate = out_rate;
    clip.condition.layout = raw.markers.layout;
    clip.future.frames = frames.bottomRows(out_rate_frames - cfg.condition_frames);
    clip.future.frame_rate = out_rate;
    clip.future.layout = raw.markers.layout;
    clips.push_back(std::move(clip));
  }
  return clips;
}

MotionSequence combine_clip(const CanonicalClip& clip) {
  MotionSequence out;
  out.frame_rate = clip.condition.frame_rate;
  out.layout = clip.condition.layout;
  out.frames.resize(clip.condition.frame_count() + clip.future.frame_count(),
                    clip.condition.dim());
  out.frames.topRows(clip.condition.frame_count()) = clip.condition.frames;
  out.frames.bottomRows(clip.future.frame_count()) = clip.future.frames;
  return out;
}

void split_clip(const MotionSequence& combined, int condition_frames,
                MotionSequence& condition, MotionSequence& future) {
  if (condition_frames <= 0 || condition_frames >= combined.frame_count()) {
    throw DomainError("split_clip: condition frame count out of range");
  }
  condition.frames = combined.frames.topRows(condition_frames);
  condition.frame_rate = combined.frame_rate;
  condition.layout = combined.layout;
  future.frames = combined.frames.bottomRows(combined.frame_count() - condition_frames);
  future.frame_rate = combined.frame_rate;
  future.layout = combined.layout;
}

void save_dataset(const std::string& manifest_path, const DatasetBundle& bundle) {
  if (bundle.manifest.records.size() != bundle.sequences.size()) {
    throw ConfigError("save_dataset: records and sequences disagree in count");
  }
  const fs::path dir = fs::path(manifest_path).parent_path();
  std::set<std::string> ids;
  json records = json::array();
  for (std::size_t i = 0; i < bundle.sequences.size(); ++i) {
    const SequenceRecord& rec = bundle.manifest.records[i];
    if (!ids.insert(rec.id).second) {
      throw ConfigError("save_dataset: duplicate id '" + rec.id + "'");
    }
    save_sequence((dir / rec.file).string(), bundle.sequences[i]);
    records.push_back({{"id", rec.id},
                       {"file", rec.file},
                       {"frames", bundle.sequences[i].frame_count()},
                       {"frame_rate", bundle.sequences[i].frame_rate},
                       {"layout", bundle.sequences[i].layout},
                       {"split", rec.split},
                       {"generator", rec.generator},
                       {"condition_frames", rec.condition_frames}});
  }
  json doc;
  doc["format"] = "mopred-dataset-v1";
  doc["records"] = std::move(records);
  std::ofstream out(manifest_path, std::ios::binary);
  if (!out) throw ConfigError("cannot open manifest for writing: " + manifest_path);
  out << doc.dump(2) << "\n";
}

DatasetBundle load_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw ConfigError("cannot open manifest: " + manifest_path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("malformed manifest " + manifest_path + ": " + e.what());
  }
  if (doc.value("format", "") != "mopred-dataset-v1") {
    throw ConfigError("unrecognized manifest format in " + manifest_path);
  }
  const fs::path dir = fs::path(manifest_path).parent_path();
  DatasetBundle bundle;
  std::set<std::string> ids;
  for (const auto& r : doc.at("records")) {
    SequenceRecord rec;
    rec.id = r.at("id").get<std::string>();
    rec.file = r.at("file").get<std::string>();
    rec.frames = r.at("frames").get<long>();
    rec.frame_rate = r.at("frame_rate").get<double>();
    rec.layout = r.at("layout").get<std::string>();
    rec.split = r.value("split", "");
    rec.generator = r.value("generator", "");
    rec.condition_frames = r.value("condition_frames", 0);
    if (!ids.insert(rec.id).second) {
      throw ConfigError("manifest repeats id '" + rec.id + "'");
    }
    const fs::path file = dir / rec.file;
    if (!fs::exists(file)) {
      throw ConfigError("record '" + rec.id + "' references missing file " +
                        file.string());
    }
    MotionSequence seq;
    try {
      seq = load_sequence(file.string());
    } catch (const std::exception& e) {
      throw ConfigError("record '" + rec.id + "': " + e.what());
    }
    if (seq.frame_count() != rec.frames) {
      throw ConfigError("record '" + rec.id + "' frame count disagrees with manifest");
    }
    bundle.manifest.records.push_back(std::move(rec));
    bundle.sequences.push_back(std::move(seq));
  }
  return bundle;
}

std::vector<ClipView> clips_of_split(const DatasetBundle& bundle,
                                     const std::string& split) {
  std::vector<ClipView> out;
  for (std::size_t i = 0; i < bundle.sequences.size(); ++i) {
    const SequenceRecord& rec = bundle.manifest.records[i];
    if (!split.empty() && rec.split != split) continue;
    if (rec.condition_frames <= 0) continue;
    ClipView view;
    view.id = rec.id;
    split_clip(bundle.sequences[i], rec.condition_frames, view.condition,
               view.future);
    out.push_back(std::move(view));
  }
  return out;
}

}  // namespace mopred
