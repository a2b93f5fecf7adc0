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
#include <functional>
#include <string>
#include <vector>

#include "mopred/cvae.hpp"

namespace mopred {

// Band-wise diverse sampling: per-band networks map one shared noise draw to
// K latent codes on the lowest L frequency bands; bands above L stay white
// noise. The per-band networks do not share parameters.
struct DlowConfig {
  int K = 50;          // samples per condition
  int L = 9;           // bands routed through learned transforms
  int d_q = 64;        // hidden width of each band network
  double lambda_rec = 2.0;   // best-of-K reconstruction weight
  double lambda_kl = 1.0;    // transform-distribution regularizer weight
  double lambda_div = 10.0;  // pairwise diversity energy weight
  double sigma_div = 10.0;   // diversity energy bandwidth

  // The 20%-of-bands rule used when L is not given explicitly.
  static int default_band_count(int n_future) {
    return std::max(1, n_future / 5);
  }

  std::string to_json() const;
  static DlowConfig from_json(const std::string& text);
};

// Elementwise affine transform of one band's noise for one sample index:
// z = scale .* eps + offset, distributed as N(offset, diag(scale^2)).
struct BandTransform {
  Eigen::VectorXd scale;   // positive after the exp parameterization
  Eigen::VectorXd offset;
};

class DlowSampler {
 public:
  // Registers (or verifies) the per-band network parameters in q_store.
  DlowSampler(const DlowConfig& cfg, const CvaeConfig& cvae_cfg,
              nn::ParamStore& q_store);

  const DlowConfig& config() const { return cfg_; }

  // Transforms for every sample and band: result[k][w], w < L. Deterministic
  // in the condition feature.
  std::vector<std::vector<BandTransform>> transforms(
      const nn::ParamStore& q_store, const Eigen::VectorXd& cond_feature) const;
  std::vector<BandTransform> transforms_for_sample(
      const nn::ParamStore& q_store, const Eigen::VectorXd& cond_feature,
      int k) const;

  // Tape path: per band, the clamped log-scales and offsets for all samples,
  // each d_z x K.
  struct BandHeads {
    ad::Var log_scale;
    ad::Var offset;
  };
  std::vector<BandHeads> heads_t(nn::TapeBackend& k, ad::Var cond_feature) const;

 private:
  DlowConfig cfg_;
  int d_z_ = 0;
  std::vector<nn::AffineParams> q1_;  // per band
  std::vector<nn::AffineParams> q2_;
};

struct DiverseSampleSet {
  std::vector<MotionSequence> sequences;   // K decoded futures
  std::vector<Eigen::MatrixXd> latents;    // K latents, each N x d_z
  int L = 0;
  std::uint64_t seed = 0;
};

// Latent codes only: one shared draw per low band mapped through each of the
// K transforms, independent standard-normal draws above L. A null sampler (or
// L == 0) yields plain prior sampling.
std::vector<Eigen::MatrixXd> sample_latents(const Cvae& cvae,
                                            const nn::ParamStore& cvae_store,
                                            const DlowSampler* sampler,
                                            const nn::ParamStore* q_store,
                                            const MotionSequence& condition,
                                            int K, int L, Rng& rng);

// Latents decoded to K future sequences.
DiverseSampleSet sample_diverse(const Cvae& cvae, const nn::ParamStore& cvae_store,
                                const DlowSampler* sampler,
                                const nn::ParamStore* q_store,
                                const MotionSequence& condition, int K, int L,
                                std::uint64_t seed);

struct DlowLossParts {
  double total = 0.0;
  double rec = 0.0;  // best-of-K reconstruction
  double kl = 0.0;   // sum over samples and low bands
  double div = 0.0;  // mean pairwise energy (1 for coincident samples)
};

// Reference form of the sampling loss on decoded motions; the training path
// computes the same expression on the tape. Throws DomainError for K < 2.
DlowLossParts dlow_loss(const std::vector<MotionSequence>& samples,
                        const std::vector<std::vector<BandTransform>>& transforms,
                        const MotionSequence& y_gt, const DlowConfig& cfg);

struct DlowTrainConfig {
  int epochs = 10;
  double lr = 1e-3;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  std::function<void(int, const DlowLossParts&)> on_epoch;
};

// Trains the band networks against a frozen decoder; cvae_store is never
// written. Requires K >= 2 and L >= 1.
std::vector<DlowLossParts> train_dlow(const Cvae& cvae,
                                      const nn::ParamStore& cvae_store,
                                      const DlowSampler& sampler,
                                      nn::ParamStore& q_store,
                                      const std::vector<ClipView>& data,
                                      const DlowTrainConfig& tc);

}  // namespace mopred
