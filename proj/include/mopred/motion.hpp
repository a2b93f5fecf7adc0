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

#include "mopred/common.hpp"

namespace mopred {

// One named marker rigidly attached to a skeleton joint.
struct MarkerDef {
  std::string name;
  std::string parent;      // joint name
  Eigen::Vector3d offset;  // meters, in the parent joint frame
};

// A named marker placement. Marker order fixes the column layout of frames:
// marker i occupies columns [3i, 3i+3).
struct MarkerLayout {
  std::string name;
  std::vector<MarkerDef> markers;

  int count() const { return static_cast<int>(markers.size()); }
  int dim() const { return 3 * count(); }
  // Index of a marker by name; throws ConfigError if absent.
  int index_of(const std::string& marker_name) const;
  bool contains(const std::string& marker_name) const;
};

std::string layout_to_json(const MarkerLayout& layout);
MarkerLayout layout_from_json(const std::string& text);
MarkerLayout load_layout(const std::string& path);
void save_layout(const std::string& path, const MarkerLayout& layout);

// Time-ordered marker frames. Row t is frame t; columns follow the layout.
struct MotionSequence {
  Eigen::MatrixXd frames;  // T x 3V, meters
  double frame_rate = 0.0;
  std::string layout;  // layout name this sequence was produced with

  int frame_count() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }
  Eigen::Vector3d marker(int frame, int marker_index) const {
    return frames.block<1, 3>(frame, 3 * marker_index).transpose();
  }

  // Throws DomainError on empty frames or non-finite coordinates.
  void validate() const;
};

// Binary sequence container (preferred): magic "MSEQ", version, layout name,
// frame rate, frame count, row width, then row-major float64 frames. Values
// round-trip bit-exactly.
void save_sequence(const std::string& path, const MotionSequence& seq);
MotionSequence load_sequence(const std::string& path);

// CSV alternative with a one-line header; readable anywhere, round-trips
// through shortest-representation formatting.
void save_sequence_csv(const std::string& path, const MotionSequence& seq);
MotionSequence load_sequence_csv(const std::string& path);

}  // namespace mopred
