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

#include "mopred/dataset.hpp"
#include "mopred/motion.hpp"
#include "mopred/nn.hpp"

namespace mopred {

// Conditional sequence VAE with a frequency-indexed latent space: a GRU
// encoder keeps one hidden state per future frame, those states are carried
// to the frequency domain, every band owns a Gaussian posterior, and the
// decoder maps sampled bands back to the time domain before an autoregressive
// GRU emits per-frame marker deltas.
struct CvaeConfig {
  int input_dim = 0;   // 3V marker coordinates per frame
  int n_future = 45;   // predicted frames == latent band count
  int d_hidden = 64;   // GRU width
  int d_z = 16;        // per-band latent width (128 for the wide ablation)
  bool residual_output = true;  // deltas on the previous frame; off = plain output
  bool robust_kld = true;
  double alpha = 3.0;       // velocity term weight
  double kld_weight = 1.0;  // 0.1 is the usual choice with robust_kld off
  double logvar_min = -20.0;
  double logvar_max = 10.0;
  std::string layout;  // marker layout name, for checkpoint compatibility

  std::string to_json() const;
  static CvaeConfig from_json(const std::string& text);
};

// Per-band Gaussian parameters over the latent bands (rows are bands).
struct FrequencyPosterior {
  Eigen::MatrixXd mean;     // N x d_z
  Eigen::MatrixXd log_var;  // N x d_z
};

// Charbonnier penalty and its derivative; flattens near zero so a small
// divergence stops pulling the posterior toward the prior.
double robust_psi(double s);
double robust_psi_deriv(double s);

// Sum over bands and dims of 0.5 (mu^2 + sigma^2 - 1 - log sigma^2).
double kld_standard_normal(const FrequencyPosterior& post);

struct LossParts {
  double total = 0.0;
  double recon = 0.0;
  double velocity = 0.0;  // first-frame match term when residual output is off
  double kld = 0.0;       // raw divergence
  double reg = 0.0;       // the regularizer as added to the total
};

class Cvae;

// Tape handles for one training forward pass.
struct CvaeForward {
  ad::Var y_rec;     // input_dim x N, columns are frames
  ad::Var mu;        // d_z x N, columns are bands
  ad::Var log_var;   // d_z x N
  ad::Var total;
  ad::Var recon;
  ad::Var velocity;
  ad::Var kld;
  ad::Var reg;

  LossParts parts(const ad::Tape& tape) const;
};

// Incremental decoder rollout; lets a caller substitute each emitted frame
// (e.g. with its projection onto the body manifold) before the next step.
template <class B>
struct DecodeRollout {
  B* k = nullptr;
  const Cvae* model = nullptr;
  typename B::Vec feats;  // d_hidden x N time-domain features
  typename B::Vec cond;   // condition vector
  typename B::Vec h;      // decoder hidden state
  typename B::Vec prev;   // previous output frame (starts at x_M)
  int t = 0;

  bool done() const;
  // Emits frame t, advances the hidden state, and sets prev to the emitted
  // frame. Returns the emitted frame.
  typename B::Vec step();
  // Replaces the autoregressive input with an externally fixed frame.
  void override_prev(const Eigen::VectorXd& frame);
};

class Cvae {
 public:
  // Registers parameters when the store lacks them, otherwise verifies shapes.
  Cvae(const CvaeConfig& cfg, nn::ParamStore& store);

  const CvaeConfig& config() const { return cfg_; }

  // --- plain inference -----------------------------------------------------
  Eigen::VectorXd condition_feature(const nn::ParamStore& store,
                                    const MotionSequence& condition) const;
  FrequencyPosterior encode(const nn::ParamStore& store,
                            const MotionSequence& condition,
                            const MotionSequence& future) const;
  // Z = mu + exp(0.5 log_var) .* eps with eps ~ N(0, I); log_var is clamped.
  static Eigen::MatrixXd reparameterize(const FrequencyPosterior& post,
                                        const CvaeConfig& cfg, Rng& rng);
  // Full deterministic rollout for a latent (N x d_z, rows are bands).
  MotionSequence decode(const nn::ParamStore& store,
                        const MotionSequence& condition,
                        const Eigen::MatrixXd& z) const;
  DecodeRollout<nn::PlainBackend> begin_decode(nn::PlainBackend& k,
                                               const MotionSequence& condition,
                                               const Eigen::MatrixXd& z) const;

  // --- training-path pieces (templated over the backend) --------------------
  template <class B>
  typename B::Vec cond_feature_t(B& k, const Eigen::MatrixXd& condition) const;
  // Returns (mu, log_var) as d_z x N matrices.
  template <class B>
  std::pair<typename B::Vec, typename B::Vec> encode_t(
      B& k, const Eigen::MatrixXd& condition, const Eigen::MatrixXd& future) const;
  template <class B>
  DecodeRollout<B> begin_decode_t(B& k, const Eigen::MatrixXd& condition,
                                  typename B::Vec z_cols) const;
  // z_cols is d_z x N (bands are columns). Returns input_dim x N.
  template <class B>
  typename B::Vec decode_t(B& k, const Eigen::MatrixXd& condition,
                           typename B::Vec z_cols) const;

  // Composite loss on the tape: encode, reparameterize with the given noise
  // (d_z x N), decode, and assemble the three loss terms.
  CvaeForward forward_train(nn::TapeBackend& k, const Eigen::MatrixXd& condition,
                            const Eigen::MatrixXd& future,
                            const Eigen::MatrixXd& eps_cols) const;

  // Loss over precomputed pieces; exposed separately so the terms can be
  // checked in isolation.
  CvaeForward elbo_loss(nn::TapeBackend& k, const Eigen::MatrixXd& future,
                        ad::Var y_rec, ad::Var mu, ad::Var log_var,
                        const Eigen::VectorXd& last_condition_frame) const;

 private:
  void register_params(nn::ParamStore& store);

  CvaeConfig cfg_;
  nn::GruParams enc_gru_;
  nn::GruParams cond_gru_;
  nn::GruParams dec_gru_;
  std::vector<nn::AffineParams> head_mu_;   // per band
  std::vector<nn::AffineParams> head_lv_;   // per band
  std::vector<nn::AffineParams> head_dec_;  // per band
  nn::AffineParams out_;

  template <class B>
  friend struct DecodeRollout;
};

struct TrainConfig {
  int epochs = 50;
  double lr = 1e-3;
  int batch_size = 8;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  // Called after each epoch with the epoch's mean loss parts.
  std::function<void(int, const LossParts&)> on_epoch;
};

struct TrainHistory {
  std::vector<LossParts> epochs;
};

// Adam minimization of the composite loss over condition/future pairs.
// Aborts with DomainError naming the offending term if the loss goes
// non-finite. Deterministic for a fixed seed on a single thread.
TrainHistory train_cvae(const Cvae& model, nn::ParamStore& store,
                        const std::vector<ClipView>& data,
                        const TrainConfig& tc);

}  // namespace mopred
