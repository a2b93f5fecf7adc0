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

#include "mopred/cvae.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "mopred/dct.hpp"

namespace mopred {

using nlohmann::json;

std::string CvaeConfig::to_json() const {
  json doc;
  doc["input_dim"] = input_dim;
  doc["n_future"] = n_future;
  doc["d_hidden"] = d_hidden;
  doc["d_z"] = d_z;
  doc["residual_output"] = residual_output;
  doc["robust_kld"] = robust_kld;
  doc["alpha"] = alpha;
  doc["kld_weight"] = kld_weight;
  doc["logvar_min"] = logvar_min;
  doc["logvar_max"] = logvar_max;
  doc["layout"] = layout;
  return doc.dump();
}

CvaeConfig CvaeConfig::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  CvaeConfig cfg;
  cfg.input_dim = doc.at("input_dim").get<int>();
  cfg.n_future = doc.at("n_future").get<int>();
  cfg.d_hidden = doc.at("d_hidden").get<int>();
  cfg.d_z = doc.at("d_z").get<int>();
  cfg.residual_output = doc.at("residual_output").get<bool>();
  cfg.robust_kld = doc.at("robust_kld").get<bool>();
  cfg.alpha = doc.at("alpha").get<double>();
  cfg.kld_weight = doc.at("kld_weight").get<double>();
  cfg.logvar_min = doc.value("logvar_min", -20.0);
  cfg.logvar_max = doc.value("logvar_max", 10.0);
  cfg.layout = doc.value("layout", "");
  return cfg;
}

double robust_psi(double s) { return std::sqrt(1.0 + s * s) - 1.0; }

double robust_psi_deriv(double s) { return s / std::sqrt(1.0 + s * s); }

double kld_standard_normal(const FrequencyPosterior& post) {
  const auto& mu = post.mean.array();
  const auto& lv = post.log_var.array();
  return 0.5 * (mu.square() + lv.exp() - 1.0 - lv).sum();
}

LossParts CvaeForward::parts(const ad::Tape& tape) const {
  LossParts p;
  p.total = tape.value(total)(0, 0);
  p.recon = tape.value(recon)(0, 0);
  p.velocity = tape.value(velocity)(0, 0);
  p.kld = tape.value(kld)(0, 0);
  p.reg = tape.value(reg)(0, 0);
  return p;
}

namespace {
std::string band_name(const char* prefix, int w) {
  std::ostringstream out;
  out << prefix << ".w" << std::setw(2) << std::setfill('0') << w;
  return out.str();
}
}  // namespace

Cvae::Cvae(const CvaeConfig& cfg, nn::ParamStore& store) : cfg_(cfg) {
  if (cfg_.input_dim <= 0) throw ConfigError("cvae: input_dim must be set");
  if (cfg_.n_future <= 0) throw ConfigError("cvae: n_future must be positive");
  if (cfg_.alpha <= 0.0) throw ConfigError("cvae: alpha must be positive");
  register_params(store);
}

void Cvae::register_params(nn::ParamStore& store) {
  const int D = cfg_.input_dim;
  const int H = cfg_.d_hidden;
  enc_gru_ = nn::GruParams::attach(store, "enc_gru", D, H);
  cond_gru_ = nn::GruParams::attach(store, "cond_gru", D, H);
  dec_gru_ = nn::GruParams::attach(store, "dec_gru", 2 * H + D, H);
  head_mu_.clear();
  head_lv_.clear();
  head_dec_.clear();
  for (int w = 0; w < cfg_.n_future; ++w) {
    head_mu_.push_back(nn::AffineParams::attach(store, band_name("head_mu", w), H, cfg_.d_z));
    head_lv_.push_back(nn::AffineParams::attach(store, band_name("head_lv", w), H, cfg_.d_z));
    head_dec_.push_back(nn::AffineParams::attach(store, band_name("head_dec", w), cfg_.d_z, H));
  }
  out_ = nn::AffineParams::attach(store, "out", H, D);
}

template <class B>
typename B::Vec Cvae::cond_feature_t(B& k, const Eigen::MatrixXd& condition) const {
  if (condition.cols() != cfg_.input_dim) {
    throw DomainError("cvae: condition width disagrees with the model layout");
  }
  typename B::Vec h = k.constant(Eigen::MatrixXd::Zero(cfg_.d_hidden, 1));
  for (int t = 0; t < condition.rows(); ++t) {
    h = cond_gru_.step(k, h, k.constant(condition.row(t).transpose()));
  }
  return h;
}

template <class B>
std::pair<typename B::Vec, typename B::Vec> Cvae::encode_t(
    B& k, const Eigen::MatrixXd& condition, const Eigen::MatrixXd& future) const {
  if (condition.cols() != cfg_.input_dim || future.cols() != cfg_.input_dim) {
    throw DomainError("cvae: sequence width disagrees with the model layout");
  }
  if (future.rows() != cfg_.n_future) {
    throw DomainError("cvae: future length disagrees with n_future");
  }
  const int N = cfg_.n_future;

  // One pass over condition-then-future, keeping the future-step states.
  typename B::Vec h = k.constant(Eigen::MatrixXd::Zero(cfg_.d_hidden, 1));
  for (int t = 0; t < condition.rows(); ++t) {
    h = enc_gru_.step(k, h, k.constant(condition.row(t).transpose()));
  }
  typename B::Vec states;
  for (int t = 0; t < N; ++t) {
    h = enc_gru_.step(k, h, k.constant(future.row(t).transpose()));
    states = (t == 0) ? h : k.concat_cols(states, h);
  }

  // To the frequency domain along time, then one head pair per band.
  const Eigen::MatrixXd& C = dct_matrix(N);
  typename B::Vec spectrum = k.matmul(states, k.constant(C.transpose()));
  typename B::Vec mu, lv;
  for (int w = 0; w < N; ++w) {
    typename B::Vec band = k.col(spectrum, w);
    typename B::Vec m = head_mu_[w].apply(k, band);
    typename B::Vec v =
        k.clamp(head_lv_[w].apply(k, band), cfg_.logvar_min, cfg_.logvar_max);
    mu = (w == 0) ? m : k.concat_cols(mu, m);
    lv = (w == 0) ? v : k.concat_cols(lv, v);
  }
  return {mu, lv};
}

template <class B>
DecodeRollout<B> Cvae::begin_decode_t(B& k, const Eigen::MatrixXd& condition,
                                      typename B::Vec z_cols) const {
  if (k.eval(z_cols).cols() != cfg_.n_future) {
    throw DomainError("cvae: latent band count disagrees with n_future");
  }
  const int N = cfg_.n_future;
  typename B::Vec bands;
  for (int w = 0; w < N; ++w) {
    typename B::Vec f = head_dec_[w].apply(k, k.col(z_cols, w));
    bands = (w == 0) ? f : k.concat_cols(bands, f);
  }
  DecodeRollout<B> roll;
  roll.k = &k;
  roll.model = this;
  // Back to the time domain along the band axis.
  roll.feats = k.matmul(bands, k.constant(dct_matrix(N)));
  roll.cond = cond_feature_t(k, condition);
  roll.h = roll.cond;
  roll.prev = k.constant(condition.row(condition.rows() - 1).transpose());
  return roll;
}

template <class B>
bool DecodeRollout<B>::done() const {
  return t >= model->cfg_.n_future;
}

template <class B>
typename B::Vec DecodeRollout<B>::step() {
  if (done()) throw DomainError("decode rollout stepped past the last frame");
  typename B::Vec in =
      k->concat_rows(k->concat_rows(k->col(feats, t), cond), prev);
  h = model->dec_gru_.step(*k, h, in);
  typename B::Vec delta = model->out_.apply(*k, h);
  typename B::Vec y = model->cfg_.residual_output ? k->add(prev, delta) : delta;
  prev = y;
  ++t;
  return y;
}

template <class B>
void DecodeRollout<B>::override_prev(const Eigen::VectorXd& frame) {
  prev = k->constant(frame);
}

template <class B>
typename B::Vec Cvae::decode_t(B& k, const Eigen::MatrixXd& condition,
                               typename B::Vec z_cols) const {
  DecodeRollout<B> roll = begin_decode_t(k, condition, z_cols);
  typename B::Vec out;
  for (int t = 0; t < cfg_.n_future; ++t) {
    typename B::Vec y = roll.step();
    out = (t == 0) ? y : k.concat_cols(out, y);
  }
  return out;
}

Eigen::VectorXd Cvae::condition_feature(const nn::ParamStore& store,
                                        const MotionSequence& condition) const {
  nn::PlainBackend k{&store};
  return cond_feature_t(k, condition.frames);
}

FrequencyPosterior Cvae::encode(const nn::ParamStore& store,
                                const MotionSequence& condition,
                                const MotionSequence& future) const {
  if (condition.layout != future.layout) {
    throw DomainError("cvae: condition and future use different layouts");
  }
  nn::PlainBackend k{&store};
  auto [mu, lv] = encode_t(k, condition.frames, future.frames);
  FrequencyPosterior post;
  post.mean = mu.transpose();
  post.log_var = lv.transpose();
  return post;
}

Eigen::MatrixXd Cvae::reparameterize(const FrequencyPosterior& post,
                                     const CvaeConfig& cfg, Rng& rng) {
  const int N = static_cast<int>(post.mean.rows());
  const int dz = static_cast<int>(post.mean.cols());
  Eigen::MatrixXd z(N, dz);
  for (int w = 0; w < N; ++w) {
    for (int j = 0; j < dz; ++j) {
      const double lv =
          std::clamp(post.log_var(w, j), cfg.logvar_min, cfg.logvar_max);
      z(w, j) = post.mean(w, j) + std::exp(0.5 * lv) * rng.normal();
    }
  }
  return z;
}

MotionSequence Cvae::decode(const nn::ParamStore& store,
                            const MotionSequence& condition,
                            const Eigen::MatrixXd& z) const {
  nn::PlainBackend k{&store};
  const Eigen::MatrixXd y = decode_t(k, condition.frames, Eigen::MatrixXd(z.transpose()));
  MotionSequence out;
  out.frames = y.transpose();
  out.frame_rate = condition.frame_rate;
  out.layout = condition.layout;
  return out;
}

DecodeRollout<nn::PlainBackend> Cvae::begin_decode(
    nn::PlainBackend& k, const MotionSequence& condition,
    const Eigen::MatrixXd& z) const {
  return begin_decode_t(k, condition.frames, Eigen::MatrixXd(z.transpose()));
}

CvaeForward Cvae::forward_train(nn::TapeBackend& k,
                                const Eigen::MatrixXd& condition,
                                const Eigen::MatrixXd& future,
                                const Eigen::MatrixXd& eps_cols) const {
  auto [mu, lv] = encode_t(k, condition, future);
  ad::Tape& t = *k.tape;
  ad::Var sigma = t.exp(t.scale(lv, 0.5));
  ad::Var z = t.add(mu, t.hadamard(sigma, t.constant(eps_cols)));
  ad::Var y_rec = decode_t(k, condition, z);
  CvaeForward fwd = elbo_loss(k, future, y_rec, mu, lv,
                              condition.row(condition.rows() - 1).transpose());
  return fwd;
}

CvaeForward Cvae::elbo_loss(nn::TapeBackend& k, const Eigen::MatrixXd& future,
                            ad::Var y_rec, ad::Var mu, ad::Var log_var,
                            const Eigen::VectorXd& last_condition_frame) const {
  ad::Tape& t = *k.tape;
  const int N = static_cast<int>(future.rows());
  const int D = static_cast<int>(future.cols());

  CvaeForward fwd;
  fwd.y_rec = y_rec;
  fwd.mu = mu;
  fwd.log_var = log_var;

  const Eigen::MatrixXd gt_cols = future.transpose();  // D x N
  fwd.recon = t.mean_abs(t.sub(y_rec, t.constant(gt_cols)));

  if (cfg_.residual_output) {
    if (N >= 2) {
      // Forward time difference within the future window.
      ad::Var d_rec = t.sub(t.block(y_rec, 0, D, 1, N - 1),
                            t.block(y_rec, 0, D, 0, N - 1));
      const Eigen::MatrixXd d_gt =
          gt_cols.rightCols(N - 1) - gt_cols.leftCols(N - 1);
      fwd.velocity = t.mean_abs(t.sub(d_rec, t.constant(d_gt)));
    } else {
      fwd.velocity = t.constant(0.0);
    }
  } else {
    // Baseline variant: match the first output to the last input frame.
    ad::Var y0 = t.col(y_rec, 0);
    fwd.velocity = t.mean_square(t.sub(y0, t.constant(last_condition_frame)));
  }

  ad::Var inner = t.affine_scalar(t.add(t.square(mu), t.exp(log_var)), 1.0, -1.0);
  fwd.kld = t.scale(t.sum(t.sub(inner, log_var)), 0.5);
  if (cfg_.robust_kld) {
    ad::Var psi = t.affine_scalar(
        t.sqrt(t.affine_scalar(t.square(fwd.kld), 1.0, 1.0)), 1.0, -1.0);
    fwd.reg = t.scale(psi, cfg_.kld_weight);
  } else {
    fwd.reg = t.scale(fwd.kld, cfg_.kld_weight);
  }

  fwd.total = t.add(t.add(fwd.recon, t.scale(fwd.velocity, cfg_.alpha)), fwd.reg);
  return fwd;
}

TrainHistory train_cvae(const Cvae& model, nn::ParamStore& store,
                        const std::vector<ClipView>& data,
                        const TrainConfig& tc) {
  if (data.empty()) throw DomainError("train_cvae: empty dataset");
  const CvaeConfig& cfg = model.config();
  Rng rng(tc.seed);
  nn::AdamState adam;
  ad::Tape tape;
  TrainHistory history;

  std::vector<int> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform() * i);
      std::swap(order[i - 1], order[j]);
    }

    LossParts epoch_parts;
    for (std::size_t at = 0; at < order.size(); at += tc.batch_size) {
      const std::size_t end = std::min(at + tc.batch_size, order.size());
      tape.clear();
      nn::TapeBackend k{&tape, &store, true};
      ad::Var batch_total;
      for (std::size_t b = at; b < end; ++b) {
        const ClipView& clip = data[order[b]];
        Eigen::MatrixXd eps(cfg.d_z, cfg.n_future);
        for (int w = 0; w < cfg.n_future; ++w) {
          for (int j = 0; j < cfg.d_z; ++j) eps(j, w) = rng.normal();
        }
        const CvaeForward fwd =
            model.forward_train(k, clip.condition.frames, clip.future.frames, eps);
        const LossParts parts = fwd.parts(tape);
        for (const auto& [value, name] :
             {std::pair{parts.recon, "reconstruction"},
              std::pair{parts.velocity, "velocity"},
              std::pair{parts.reg, "regularizer"}}) {
          if (!std::isfinite(value)) {
            throw DomainError("train_cvae: " + std::string(name) +
                              " term went non-finite at epoch " +
                              std::to_string(epoch));
          }
        }
        epoch_parts.total += parts.total;
        epoch_parts.recon += parts.recon;
        epoch_parts.velocity += parts.velocity;
        epoch_parts.kld += parts.kld;
        epoch_parts.reg += parts.reg;
        batch_total = (b == at) ? fwd.total : tape.add(batch_total, fwd.total);
      }
      ad::Var batch_loss =
          tape.affine_scalar(batch_total, 1.0 / static_cast<double>(end - at), 0.0);
      store.zero_grad();
      tape.backward(batch_loss);
      nn::clip_global_norm(store, tc.clip_norm);
      nn::adam_update(store, adam, tc.lr);
    }

    const double inv = 1.0 / static_cast<double>(data.size());
    epoch_parts.total *= inv;
    epoch_parts.recon *= inv;
    epoch_parts.velocity *= inv;
    epoch_parts.kld *= inv;
    epoch_parts.reg *= inv;
    history.epochs.push_back(epoch_parts);
    if (tc.on_epoch) tc.on_epoch(epoch, epoch_parts);
  }
  return history;
}

// The two backends every model path runs on.
template ad::Var Cvae::cond_feature_t<nn::TapeBackend>(nn::TapeBackend&,
                                                       const Eigen::MatrixXd&) const;
template Eigen::MatrixXd Cvae::cond_feature_t<nn::PlainBackend>(
    nn::PlainBackend&, const Eigen::MatrixXd&) const;
template std::pair<ad::Var, ad::Var> Cvae::encode_t<nn::TapeBackend>(
    nn::TapeBackend&, const Eigen::MatrixXd&, const Eigen::MatrixXd&) const;
template std::pair<Eigen::MatrixXd, Eigen::MatrixXd>
Cvae::encode_t<nn::PlainBackend>(nn::PlainBackend&, const Eigen::MatrixXd&,
                                 const Eigen::MatrixXd&) const;
template DecodeRollout<nn::TapeBackend> Cvae::begin_decode_t<nn::TapeBackend>(
    nn::TapeBackend&, const Eigen::MatrixXd&, ad::Var) const;
template DecodeRollout<nn::PlainBackend> Cvae::begin_decode_t<nn::PlainBackend>(
    nn::PlainBackend&, const Eigen::MatrixXd&, Eigen::MatrixXd) const;
template ad::Var Cvae::decode_t<nn::TapeBackend>(nn::TapeBackend&,
                                                 const Eigen::MatrixXd&,
                                                 ad::Var) const;
template Eigen::MatrixXd Cvae::decode_t<nn::PlainBackend>(nn::PlainBackend&,
                                                          const Eigen::MatrixXd&,
                                                          Eigen::MatrixXd) const;
template struct DecodeRollout<nn::TapeBackend>;
template struct DecodeRollout<nn::PlainBackend>;

}  // namespace mopred
