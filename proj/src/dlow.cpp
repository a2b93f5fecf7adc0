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

#include "mopred/dlow.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace mopred {

using nlohmann::json;

namespace {
// Keeps exp(log_scale) away from overflow and exact zero.
constexpr double kLogScaleMin = -10.0;
constexpr double kLogScaleMax = 10.0;

std::string band_name(int w) {
  std::ostringstream out;
  out << "q.w" << std::setw(2) << std::setfill('0') << w;
  return out.str();
}
}  // namespace

std::string DlowConfig::to_json() const {
  json doc;
  doc["K"] = K;
  doc["L"] = L;
  doc["d_q"] = d_q;
  doc["lambda_rec"] = lambda_rec;
  doc["lambda_kl"] = lambda_kl;
  doc["lambda_div"] = lambda_div;
  doc["sigma_div"] = sigma_div;
  return doc.dump();
}

DlowConfig DlowConfig::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed sampler config: ") + e.what());
  }
  DlowConfig cfg;
  cfg.K = doc.at("K").get<int>();
  cfg.L = doc.at("L").get<int>();
  cfg.d_q = doc.at("d_q").get<int>();
  cfg.lambda_rec = doc.at("lambda_rec").get<double>();
  cfg.lambda_kl = doc.at("lambda_kl").get<double>();
  cfg.lambda_div = doc.at("lambda_div").get<double>();
  cfg.sigma_div = doc.at("sigma_div").get<double>();
  return cfg;
}

DlowSampler::DlowSampler(const DlowConfig& cfg, const CvaeConfig& cvae_cfg,
                         nn::ParamStore& q_store)
    : cfg_(cfg), d_z_(cvae_cfg.d_z) {
  if (cfg_.K < 1) throw ConfigError("dlow: K must be at least 1");
  if (cfg_.L < 0 || cfg_.L > cvae_cfg.n_future) {
    throw ConfigError("dlow: L out of range for " +
                      std::to_string(cvae_cfg.n_future) + " bands");
  }
  for (int w = 0; w < cfg_.L; ++w) {
    const std::string prefix = band_name(w);
    q1_.push_back(nn::AffineParams::attach(q_store, prefix + ".l1",
                                           cvae_cfg.d_hidden, cfg_.d_q));
    q2_.push_back(nn::AffineParams::attach(q_store, prefix + ".l2", cfg_.d_q,
                                           2 * cfg_.K * d_z_));
  }
}

std::vector<DlowSampler::BandHeads> DlowSampler::heads_t(
    nn::TapeBackend& k, ad::Var cond_feature) const {
  ad::Tape& t = *k.tape;
  std::vector<BandHeads> out;
  out.reserve(cfg_.L);
  for (int w = 0; w < cfg_.L; ++w) {
    ad::Var hidden = t.tanh(q1_[w].apply(k, cond_feature));
    ad::Var raw = q2_[w].apply(k, hidden);  // 2*K*d_z x 1
    // First half log-scales, second half offsets; reshape to d_z x K.
    ad::Var log_scale, offset;
    for (int s = 0; s < cfg_.K; ++s) {
      ad::Var ls = t.clamp(t.rows(raw, s * d_z_, d_z_), kLogScaleMin, kLogScaleMax);
      ad::Var of = t.rows(raw, (cfg_.K + s) * d_z_, d_z_);
      log_scale = (s == 0) ? ls : t.concat_cols(log_scale, ls);
      offset = (s == 0) ? of : t.concat_cols(offset, of);
    }
    out.push_back({log_scale, offset});
  }
  return out;
}

std::vector<std::vector<BandTransform>> DlowSampler::transforms(
    const nn::ParamStore& q_store, const Eigen::VectorXd& cond_feature) const {
  nn::PlainBackend k{&q_store};
  std::vector<std::vector<BandTransform>> out(cfg_.K);
  for (auto& per_band : out) per_band.resize(cfg_.L);
  for (int w = 0; w < cfg_.L; ++w) {
    const Eigen::MatrixXd hidden = k.tanh(q1_[w].apply(k, cond_feature));
    const Eigen::MatrixXd raw = q2_[w].apply(k, hidden);
    for (int s = 0; s < cfg_.K; ++s) {
      BandTransform& tr = out[s][w];
      tr.scale = raw.col(0)
                     .segment(s * d_z_, d_z_)
                     .array()
                     .max(kLogScaleMin)
                     .min(kLogScaleMax)
                     .exp();
      tr.offset = raw.col(0).segment((cfg_.K + s) * d_z_, d_z_);
    }
  }
  return out;
}

std::vector<BandTransform> DlowSampler::transforms_for_sample(
    const nn::ParamStore& q_store, const Eigen::VectorXd& cond_feature,
    int k) const {
  if (k < 0 || k >= cfg_.K) throw DomainError("dlow: sample index out of range");
  return transforms(q_store, cond_feature)[k];
}

std::vector<Eigen::MatrixXd> sample_latents(const Cvae& cvae,
                                            const nn::ParamStore& cvae_store,
                                            const DlowSampler* sampler,
                                            const nn::ParamStore* q_store,
                                            const MotionSequence& condition,
                                            int K, int L, Rng& rng) {
  if (K < 1) throw DomainError("sample_latents: K must be at least 1");
  const CvaeConfig& cfg = cvae.config();
  const int N = cfg.n_future;
  if (L < 0 || L > N) throw DomainError("sample_latents: L out of range");
  if (L > 0 && (sampler == nullptr || q_store == nullptr)) {
    throw ConfigError("sample_latents: L > 0 requires trained band networks");
  }
  if (sampler != nullptr && L > sampler->config().L) {
    throw ConfigError("sample_latents: requested L=" + std::to_string(L) +
                      " exceeds the trained band count " +
                      std::to_string(sampler->config().L));
  }

  // One shared draw for the low bands; every sample sees the same noise there.
  Eigen::MatrixXd shared(L, cfg.d_z);
  for (int w = 0; w < L; ++w) {
    for (int j = 0; j < cfg.d_z; ++j) shared(w, j) = rng.normal();
  }

  std::vector<std::vector<BandTransform>> transforms;
  if (L > 0) {
    const Eigen::VectorXd feature = cvae.condition_feature(cvae_store, condition);
    transforms = sampler->transforms(*q_store, feature);
    if (static_cast<int>(transforms.size()) < K) {
      throw ConfigError("sample_latents: sampler was built for K=" +
                        std::to_string(transforms.size()) +
                        ", requested K=" + std::to_string(K));
    }
  }

  std::vector<Eigen::MatrixXd> latents;
  latents.reserve(K);
  for (int s = 0; s < K; ++s) {
    Eigen::MatrixXd z(N, cfg.d_z);
    for (int w = 0; w < L; ++w) {
      const BandTransform& tr = transforms[s][w];
      z.row(w) = (tr.scale.array() * shared.row(w).transpose().array() +
                  tr.offset.array())
                     .transpose();
    }
    for (int w = L; w < N; ++w) {
      for (int j = 0; j < cfg.d_z; ++j) z(w, j) = rng.normal();
    }
    latents.push_back(std::move(z));
  }
  return latents;
}

DiverseSampleSet sample_diverse(const Cvae& cvae, const nn::ParamStore& cvae_store,
                                const DlowSampler* sampler,
                                const nn::ParamStore* q_store,
                                const MotionSequence& condition, int K, int L,
                                std::uint64_t seed) {
  Rng rng(seed);
  DiverseSampleSet out;
  out.L = L;
  out.seed = seed;
  out.latents =
      sample_latents(cvae, cvae_store, sampler, q_store, condition, K, L, rng);
  out.sequences.reserve(out.latents.size());
  for (const auto& z : out.latents) {
    out.sequences.push_back(cvae.decode(cvae_store, condition, z));
  }
  return out;
}

DlowLossParts dlow_loss(const std::vector<MotionSequence>& samples,
                        const std::vector<std::vector<BandTransform>>& transforms,
                        const MotionSequence& y_gt, const DlowConfig& cfg) {
  const int K = static_cast<int>(samples.size());
  if (K < 2) throw DomainError("dlow_loss needs at least two samples");

  DlowLossParts parts;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : samples) {
    const double e =
        (s.frames - y_gt.frames).squaredNorm() / y_gt.frames.size();
    best = std::min(best, e);
  }
  parts.rec = best;

  for (const auto& per_sample : transforms) {
    for (const auto& tr : per_sample) {
      const auto a2 = tr.scale.array().square();
      parts.kl +=
          0.5 * (tr.offset.array().square() + a2 - 1.0 - a2.log()).sum();
    }
  }

  int pairs = 0;
  for (int i = 0; i < K; ++i) {
    for (int j = i + 1; j < K; ++j) {
      const double d2 = (samples[i].frames - samples[j].frames).squaredNorm();
      parts.div += std::exp(-d2 / cfg.sigma_div);
      ++pairs;
    }
  }
  parts.div /= pairs;

  parts.total = cfg.lambda_rec * parts.rec + cfg.lambda_kl * parts.kl +
                cfg.lambda_div * parts.div;
  return parts;
}

std::vector<DlowLossParts> train_dlow(const Cvae& cvae,
                                      const nn::ParamStore& cvae_store,
                                      const DlowSampler& sampler,
                                      nn::ParamStore& q_store,
                                      const std::vector<ClipView>& data,
                                      const DlowTrainConfig& tc) {
  if (data.empty()) throw DomainError("train_dlow: empty dataset");
  const DlowConfig& cfg = sampler.config();
  if (cfg.K < 2) throw DomainError("train_dlow: K must be at least 2");
  if (cfg.L < 1) throw DomainError("train_dlow: L must be at least 1");
  const CvaeConfig& ccfg = cvae.config();
  const int N = ccfg.n_future;

  Rng rng(tc.seed);
  nn::AdamState adam;
  ad::Tape tape;
  std::vector<DlowLossParts> history;

  std::vector<int> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform() * i);
      std::swap(order[i - 1], order[j]);
    }

    DlowLossParts epoch_parts;
    for (const int idx : order) {
      const ClipView& clip = data[idx];
      tape.clear();
      // The decoder and condition encoder stay constants on the tape; only
      // the band networks receive gradients.
      nn::TapeBackend frozen(&tape, const_cast<nn::ParamStore*>(&cvae_store), false);
      nn::TapeBackend trainable(&tape, &q_store, true);

      ad::Var feature = cvae.cond_feature_t(frozen, clip.condition.frames);
      const auto heads = sampler.heads_t(trainable, feature);

      Eigen::MatrixXd shared(cfg.L, ccfg.d_z);
      for (int w = 0; w < cfg.L; ++w) {
        for (int j = 0; j < ccfg.d_z; ++j) shared(w, j) = rng.normal();
      }

      ad::Var kl_sum = tape.constant(0.0);
      std::vector<ad::Var> decoded(cfg.K);
      for (int s = 0; s < cfg.K; ++s) {
        ad::Var z;
        for (int w = 0; w < cfg.L; ++w) {
          ad::Var ls = tape.col(heads[w].log_scale, s);
          ad::Var of = tape.col(heads[w].offset, s);
          ad::Var zw = tape.add(
              tape.hadamard(tape.exp(ls),
                            tape.constant(shared.row(w).transpose())),
              of);
          z = (w == 0) ? zw : tape.concat_cols(z, zw);

          ad::Var a2 = tape.exp(tape.scale(ls, 2.0));
          ad::Var inner = tape.affine_scalar(tape.add(tape.square(of), a2), 1.0, -1.0);
          ad::Var kl = tape.scale(tape.sum(tape.sub(inner, tape.scale(ls, 2.0))), 0.5);
          kl_sum = tape.add(kl_sum, kl);
        }
        if (N > cfg.L) {
          Eigen::MatrixXd high(ccfg.d_z, N - cfg.L);
          for (int w = 0; w < N - cfg.L; ++w) {
            for (int j = 0; j < ccfg.d_z; ++j) high(j, w) = rng.normal();
          }
          ad::Var high_var = tape.constant(high);
          z = (cfg.L == 0) ? high_var : tape.concat_cols(z, high_var);
        }
        decoded[s] = cvae.decode_t(frozen, clip.condition.frames, z);
      }

      const Eigen::MatrixXd gt_cols = clip.future.frames.transpose();
      ad::Var gt = tape.constant(gt_cols);
      ad::Var best_rec;
      double best_value = std::numeric_limits<double>::infinity();
      for (int s = 0; s < cfg.K; ++s) {
        ad::Var e = tape.mean_square(tape.sub(decoded[s], gt));
        if (tape.value(e)(0, 0) < best_value) {
          best_value = tape.value(e)(0, 0);
          best_rec = e;
        }
      }

      ad::Var div_sum = tape.constant(0.0);
      int pairs = 0;
      for (int i = 0; i < cfg.K; ++i) {
        for (int j = i + 1; j < cfg.K; ++j) {
          ad::Var d2 = tape.sum(tape.square(tape.sub(decoded[i], decoded[j])));
          div_sum = tape.add(div_sum, tape.exp(tape.scale(d2, -1.0 / cfg.sigma_div)));
          ++pairs;
        }
      }
      ad::Var div = tape.scale(div_sum, 1.0 / pairs);

      ad::Var total = tape.add(
          tape.add(tape.scale(best_rec, cfg.lambda_rec),
                   tape.scale(kl_sum, cfg.lambda_kl)),
          tape.scale(div, cfg.lambda_div));

      DlowLossParts parts;
      parts.total = tape.value(total)(0, 0);
      parts.rec = best_value;
      parts.kl = tape.value(kl_sum)(0, 0);
      parts.div = tape.value(div)(0, 0);
      if (!std::isfinite(parts.total)) {
        throw DomainError("train_dlow: loss went non-finite at epoch " +
                          std::to_string(epoch));
      }
      epoch_parts.total += parts.total;
      epoch_parts.rec += parts.rec;
      epoch_parts.kl += parts.kl;
      epoch_parts.div += parts.div;

      q_store.zero_grad();
      tape.backward(total);
      nn::clip_global_norm(q_store, tc.clip_norm);
      nn::adam_update(q_store, adam, tc.lr);
    }

    const double inv = 1.0 / static_cast<double>(data.size());
    epoch_parts.total *= inv;
    epoch_parts.rec *= inv;
    epoch_parts.kl *= inv;
    epoch_parts.div *= inv;
    history.push_back(epoch_parts);
    if (tc.on_epoch) tc.on_epoch(epoch, epoch_parts);
  }
  return history;
}

}  // namespace mopred
