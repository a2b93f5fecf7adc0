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

#include "mopred/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "mopred/dct.hpp"

namespace mopred {

namespace {

void check_shapes(const std::vector<MotionSequence>& samples,
                  const MotionSequence& gt, const char* what) {
  if (samples.empty()) throw DomainError(std::string(what) + ": empty sample set");
  for (const auto& s : samples) {
    if (s.frames.rows() != gt.frames.rows() || s.frames.cols() != gt.frames.cols()) {
      throw DomainError(std::string(what) + ": sample/gt shapes disagree");
    }
  }
}

// Time-averaged per-frame Euclidean distance; or, with squared_error, the
// squared Frobenius distance divided by T.
double ade_one(const MotionSequence& sample, const MotionSequence& gt,
               bool squared) {
  const int T = static_cast<int>(gt.frames.rows());
  if (squared) {
    return (sample.frames - gt.frames).squaredNorm() / T;
  }
  double acc = 0.0;
  for (int t = 0; t < T; ++t) {
    acc += (sample.frames.row(t) - gt.frames.row(t)).norm();
  }
  return acc / T;
}

double fde_one(const MotionSequence& sample, const MotionSequence& gt,
               bool squared) {
  const auto diff = sample.frames.bottomRows(1) - gt.frames.bottomRows(1);
  return squared ? diff.squaredNorm() : diff.norm();
}

double best_of(const std::vector<MotionSequence>& samples,
               const MotionSequence& gt, bool squared, bool final_only) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : samples) {
    const double e = final_only ? fde_one(s, gt, squared) : ade_one(s, gt, squared);
    if (e < best) best = e;
  }
  return best;
}

double multi_modal(const std::vector<MotionSequence>& samples,
                   const std::vector<GtPair>& gt_pool, const MotionSequence& x_gt,
                   const MetricsConfig& cfg, bool final_only) {
  if (gt_pool.empty()) throw DomainError("multi-modal metric: empty ground-truth pool");
  const Eigen::RowVectorXd query = x_gt.frames.bottomRows(1);
  double acc = 0.0;
  int used = 0;
  for (const auto& pair : gt_pool) {
    const double d = (pair.past.frames.bottomRows(1) - query).norm();
    if (d < cfg.eta) {
      acc += best_of(samples, pair.future, cfg.squared_error, final_only);
      ++used;
    }
  }
  if (used == 0) {
    throw DomainError("multi-modal metric: similarity set is empty (eta too small)");
  }
  return acc / used;
}

double spectra_entropy_mean(const Eigen::MatrixXd& future) {
  const SpectralSequence spec = dct_forward(future);
  double acc = 0.0;
  int used = 0;
  for (int c = 0; c < spec.width(); ++c) {
    // Squared coefficients, DC excluded.
    const Eigen::VectorXd power =
        spec.coeffs.col(c).tail(spec.bands() - 1).array().square();
    const double total = power.sum();
    if (total <= 0.0) continue;  // flat coordinate carries no spectrum
    double h = 0.0;
    for (int w = 0; w < power.size(); ++w) {
      const double p = power(w) / total;
      if (p > 0.0) h -= p * std::log(p);
    }
    acc += h;
    ++used;
  }
  return used > 0 ? acc / used : 0.0;
}

double pair_distance_std(const MotionSequence& seq, int i, int j) {
  const int T = seq.frame_count();
  Eigen::VectorXd dist(T);
  for (int t = 0; t < T; ++t) {
    dist(t) = (seq.marker(t, i) - seq.marker(t, j)).norm();
  }
  const double mean = dist.mean();
  return std::sqrt((dist.array() - mean).square().mean());
}

}  // namespace

double diversity(const std::vector<MotionSequence>& samples) {
  if (samples.size() < 2) throw DomainError("diversity needs at least two samples");
  double acc = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      acc += (samples[i].frames - samples[j].frames).norm();
      ++pairs;
    }
  }
  return acc / pairs;
}

double ade(const std::vector<MotionSequence>& samples, const MotionSequence& gt,
           const MetricsConfig& cfg) {
  check_shapes(samples, gt, "ade");
  return best_of(samples, gt, cfg.squared_error, false);
}

double fde(const std::vector<MotionSequence>& samples, const MotionSequence& gt,
           const MetricsConfig& cfg) {
  check_shapes(samples, gt, "fde");
  return best_of(samples, gt, cfg.squared_error, true);
}

double mmade(const std::vector<MotionSequence>& samples,
             const std::vector<GtPair>& gt_pool, const MotionSequence& x_gt,
             const MetricsConfig& cfg) {
  if (samples.empty()) throw DomainError("mmade: empty sample set");
  return multi_modal(samples, gt_pool, x_gt, cfg, false);
}

double mmfde(const std::vector<MotionSequence>& samples,
             const std::vector<GtPair>& gt_pool, const MotionSequence& x_gt,
             const MetricsConfig& cfg) {
  if (samples.empty()) throw DomainError("mmfde: empty sample set");
  return multi_modal(samples, gt_pool, x_gt, cfg, true);
}

double fse(const std::vector<MotionSequence>& samples, const MotionSequence& gt) {
  check_shapes(samples, gt, "fse");
  if (gt.frame_count() < 2) throw DomainError("fse needs at least two frames");
  double acc = 0.0;
  for (const auto& s : samples) acc += spectra_entropy_mean(s.frames);
  return acc / samples.size() - spectra_entropy_mean(gt.frames);
}

double foot_skate_ratio(const MotionSequence& seq, const MarkerLayout& layout) {
  const int lhee = layout.index_of("LHEE");
  const int rhee = layout.index_of("RHEE");
  if (seq.frame_rate <= 0.0) throw ConfigError("foot_skate_ratio: unknown frame rate");
  const int T = seq.frame_count();
  if (T < 2) return 0.0;
  // 75 mm/s speed limit expressed as displacement between consecutive frames.
  const double step_limit = 0.075 / seq.frame_rate;
  const double ground_limit = 0.05;
  int skating = 0;
  for (int t = 1; t < T; ++t) {
    const Eigen::Vector3d l = seq.marker(t, lhee);
    const Eigen::Vector3d r = seq.marker(t, rhee);
    const bool grounded = l.z() < ground_limit && r.z() < ground_limit;
    if (!grounded) continue;
    const double lmove = (l - seq.marker(t - 1, lhee)).norm();
    const double rmove = (r - seq.marker(t - 1, rhee)).norm();
    if (lmove > step_limit && rmove > step_limit) ++skating;
  }
  return static_cast<double>(skating) / (T - 1);
}

double deformation_score(const MotionSequence& seq, const MarkerLayout& layout,
                         const std::vector<std::string>& group) {
  if (seq.frame_count() < 2) throw DomainError("deformation_score needs >= 2 frames");
  std::vector<int> idx;
  idx.reserve(group.size());
  for (const auto& name : group) idx.push_back(layout.index_of(name));
  double acc = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = i + 1; j < idx.size(); ++j) {
      acc += pair_distance_std(seq, idx[i], idx[j]);
    }
  }
  return acc;
}

double deformation_score(const std::vector<MotionSequence>& seqs,
                         const MarkerLayout& layout,
                         const std::vector<std::string>& group) {
  if (seqs.empty()) throw DomainError("deformation_score: empty sequence set");
  double acc = 0.0;
  for (const auto& s : seqs) acc += deformation_score(s, layout, group);
  return acc / seqs.size();
}

double bone_deformation(const Eigen::MatrixXd& joint_seq,
                        const std::vector<std::pair<int, int>>& bones) {
  const int T = static_cast<int>(joint_seq.rows());
  if (T < 2) throw DomainError("bone_deformation needs >= 2 frames");
  const int J = static_cast<int>(joint_seq.cols()) / 3;
  double acc = 0.0;
  for (const auto& [a, b] : bones) {
    if (a < 0 || b < 0 || a >= J || b >= J) {
      throw ConfigError("bone_deformation: joint index out of range");
    }
    Eigen::VectorXd dist(T);
    for (int t = 0; t < T; ++t) {
      const Eigen::Vector3d pa = joint_seq.block<1, 3>(t, 3 * a).transpose();
      const Eigen::Vector3d pb = joint_seq.block<1, 3>(t, 3 * b).transpose();
      dist(t) = (pa - pb).norm();
    }
    const double mean = dist.mean();
    acc += std::sqrt((dist.array() - mean).square().mean());
  }
  return acc;
}

double bone_deformation(const std::vector<Eigen::MatrixXd>& joint_seqs,
                        const std::vector<std::pair<int, int>>& bones) {
  if (joint_seqs.empty()) throw DomainError("bone_deformation: empty sequence set");
  double acc = 0.0;
  for (const auto& s : joint_seqs) acc += bone_deformation(s, bones);
  return acc / joint_seqs.size();
}

const std::vector<std::string>& head_group() {
  static const std::vector<std::string> g = {"LFHD", "RFHD", "RBHD", "LBHD"};
  return g;
}

const std::vector<std::string>& upper_torso_group() {
  static const std::vector<std::string> g = {"RSHO", "LSHO", "CLAV", "C7"};
  return g;
}

const std::vector<std::string>& lower_torso_group() {
  static const std::vector<std::string> g = {"RFWT", "LFWT", "LBWT", "RBWT"};
  return g;
}

std::string MetricsReport::to_json() const {
  nlohmann::json doc;
  doc["diversity"] = diversity;
  doc["ade"] = ade;
  doc["fde"] = fde;
  doc["mmade"] = mmade;
  doc["mmfde"] = mmfde;
  doc["fse"] = fse;
  if (foot_skate_ratio) doc["foot_skate_ratio"] = *foot_skate_ratio;
  if (!deformation.empty()) doc["deformation"] = deformation;
  if (bdf) doc["bdf"] = *bdf;
  return doc.dump(2);
}

std::string MetricsReport::csv_header() {
  return "diversity,ade,fde,mmade,mmfde,fse,foot_skate_ratio,"
         "deformation_head,deformation_upper_torso,deformation_lower_torso,bdf";
}

std::string MetricsReport::to_csv_row() const {
  std::ostringstream out;
  out.precision(17);
  auto opt = [&out](const std::optional<double>& v) {
    if (v) out << *v;
  };
  auto group = [this, &out](const char* key) {
    auto it = deformation.find(key);
    if (it != deformation.end()) out << it->second;
  };
  out << diversity << ',' << ade << ',' << fde << ',' << mmade << ',' << mmfde
      << ',' << fse << ',';
  opt(foot_skate_ratio);
  out << ',';
  group("head");
  out << ',';
  group("upper_torso");
  out << ',';
  group("lower_torso");
  out << ',';
  opt(bdf);
  return out.str();
}

}  // namespace mopred
