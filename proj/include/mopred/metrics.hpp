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
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mopred/motion.hpp"

namespace mopred {

// Evaluation knobs. `squared_error` switches ADE/FDE (and their multi-modal
// variants) to the squared-distance reading; the plain time-averaged
// Euclidean distance is the default.
struct MetricsConfig {
  bool squared_error = false;
  double eta = 0.5;  // multi-modal past-similarity threshold, meters
};

// A ground-truth condition/future pair, the pool entry for the multi-modal
// accuracy metrics.
struct GtPair {
  MotionSequence past;
  MotionSequence future;
};

// Average pairwise L2 distance between the flattened sample sequences.
// Throws DomainError for fewer than two samples.
double diversity(const std::vector<MotionSequence>& samples);

// Best-of-set accuracy against one ground truth future.
double ade(const std::vector<MotionSequence>& samples, const MotionSequence& gt,
           const MetricsConfig& cfg = {});
double fde(const std::vector<MotionSequence>& samples, const MotionSequence& gt,
           const MetricsConfig& cfg = {});

// Multi-modal accuracy: the same best-of-set errors, averaged over every
// ground-truth future whose past ends near the query past (last-frame L2
// within eta). Throws DomainError when the similarity set is empty.
double mmade(const std::vector<MotionSequence>& samples,
             const std::vector<GtPair>& gt_pool, const MotionSequence& x_gt,
             const MetricsConfig& cfg = {});
double mmfde(const std::vector<MotionSequence>& samples,
             const std::vector<GtPair>& gt_pool, const MotionSequence& x_gt,
             const MetricsConfig& cfg = {});

// Frequency spectra entropy of the samples minus the ground truth's.
// Per coordinate: orthonormal DCT power spectrum with the DC band excluded,
// normalized and scored by Shannon entropy; all-zero spectra are skipped.
double fse(const std::vector<MotionSequence>& samples, const MotionSequence& gt);

// Fraction of frame transitions where both heel markers sit below 5 cm and
// both travel faster than 75 mm/s. Requires LHEE/RHEE in the layout.
double foot_skate_ratio(const MotionSequence& seq, const MarkerLayout& layout);

// Summed temporal standard deviation (population) of pairwise marker
// distances inside one nominally rigid group, for a single sequence.
double deformation_score(const MotionSequence& seq, const MarkerLayout& layout,
                         const std::vector<std::string>& group);
// Mean of the single-sequence score over a set of predictions.
double deformation_score(const std::vector<MotionSequence>& seqs,
                         const MarkerLayout& layout,
                         const std::vector<std::string>& group);

// The deformation statistic on joint trajectories (T x 3J matrices) over
// bone index pairs.
double bone_deformation(const Eigen::MatrixXd& joint_seq,
                        const std::vector<std::pair<int, int>>& bones);
double bone_deformation(const std::vector<Eigen::MatrixXd>& joint_seqs,
                        const std::vector<std::pair<int, int>>& bones);

// The marker groups the deformation metric scores.
const std::vector<std::string>& head_group();
const std::vector<std::string>& upper_torso_group();
const std::vector<std::string>& lower_torso_group();

// Aggregate results of one evaluation run.
struct MetricsReport {
  double diversity = 0.0;
  double ade = 0.0;
  double fde = 0.0;
  double mmade = 0.0;
  double mmfde = 0.0;
  double fse = 0.0;
  std::optional<double> foot_skate_ratio;
  std::map<std::string, double> deformation;  // group name -> meters
  std::optional<double> bdf;

  std::string to_json() const;
  static std::string csv_header();
  std::string to_csv_row() const;
};

}  // namespace mopred
