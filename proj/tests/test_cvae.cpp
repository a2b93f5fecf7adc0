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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mopred/cvae.hpp"
#include "test_util.hpp"

using namespace mopred;
using testutil::fd_max_rel_error;

namespace {

CvaeConfig toy_config(int dim = 6, int n_future = 4, int d_hidden = 3, int d_z = 2) {
  CvaeConfig cfg;
  cfg.input_dim = dim;
  cfg.n_future = n_future;
  cfg.d_hidden = d_hidden;
  cfg.d_z = d_z;
  cfg.layout = "toy";
  return cfg;
}

MotionSequence make_seq(const Eigen::MatrixXd& frames) {
  MotionSequence s;
  s.frames = frames;
  s.frame_rate = 15.0;
  s.layout = "toy";
  return s;
}

MotionSequence random_seq(Rng& rng, int T, int dim) {
  Eigen::MatrixXd f(T, dim);
  for (int r = 0; r < T; ++r) {
    for (int c = 0; c < dim; ++c) f(r, c) = rng.uniform(-1, 1);
  }
  return make_seq(f);
}

// Tiny sinusoid clips for training checks.
std::vector<ClipView> sinusoid_clips(int count, int dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ClipView> clips;
  for (int i = 0; i < count; ++i) {
    const double freq = rng.uniform(0.5, 1.5);
    const double phase = rng.uniform(0, 6.28);
    const double amp = rng.uniform(0.3, 0.8);
    Eigen::MatrixXd frames(8 + 4, dim);
    for (int t = 0; t < frames.rows(); ++t) {
      for (int c = 0; c < dim; ++c) {
        frames(t, c) = amp * std::sin(freq * t * 0.4 + phase + 0.3 * c);
      }
    }
    ClipView clip;
    clip.id = "toy" + std::to_string(i);
    clip.condition = make_seq(frames.topRows(8));
    clip.future = make_seq(frames.bottomRows(4));
    clips.push_back(std::move(clip));
  }
  return clips;
}

}  // namespace

TEST_CASE("robust penalty closed forms") {
  CHECK(robust_psi(0.0) == 0.0);
  CHECK(robust_psi(1.0) == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-12));
  // Vanishing gradient near zero divergence.
  CHECK(robust_psi_deriv(0.01) < 0.011);
  CHECK(robust_psi_deriv(0.01) == doctest::Approx(0.01).epsilon(1e-3));
}

TEST_CASE("kld against the standard normal") {
  FrequencyPosterior post;
  post.mean = Eigen::MatrixXd::Zero(3, 2);
  post.log_var = Eigen::MatrixXd::Zero(3, 2);
  CHECK(kld_standard_normal(post) == 0.0);

  post.mean = Eigen::MatrixXd::Zero(1, 1);
  post.log_var = Eigen::MatrixXd::Zero(1, 1);
  post.mean(0, 0) = 1.0;
  CHECK(kld_standard_normal(post) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("kld matches a Monte-Carlo estimate within 1%") {
  Rng rng(17);
  FrequencyPosterior post;
  post.mean.resize(2, 2);
  post.log_var.resize(2, 2);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      post.mean(r, c) = rng.uniform(-1, 1);
      post.log_var(r, c) = rng.uniform(-0.5, 0.5);
    }
  }
  // E_q[log q(z) - log p(z)] sampled from q.
  double acc = 0.0;
  const int n = 1000000;
  for (int s = 0; s < n; ++s) {
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) {
        const double sigma = std::exp(0.5 * post.log_var(r, c));
        const double z = post.mean(r, c) + sigma * rng.normal();
        const double logq =
            -0.5 * std::pow((z - post.mean(r, c)) / sigma, 2) - std::log(sigma);
        const double logp = -0.5 * z * z;
        acc += logq - logp;
      }
    }
  }
  const double mc = acc / n;
  const double exact = kld_standard_normal(post);
  CHECK(std::abs(mc - exact) / exact < 0.01);
}

TEST_CASE("zero-weight encoder yields a standard-normal posterior") {
  const CvaeConfig cfg = toy_config();
  nn::ParamStore store(1);
  const Cvae model(cfg, store);
  store.set_all_zero();
  Rng rng(5);
  const MotionSequence X = random_seq(rng, 5, cfg.input_dim);
  const MotionSequence Y = random_seq(rng, cfg.n_future, cfg.input_dim);
  const FrequencyPosterior post = model.encode(store, X, Y);
  CHECK(post.mean.rows() == cfg.n_future);
  CHECK(post.mean.cols() == cfg.d_z);
  CHECK(post.mean.norm() == 0.0);
  CHECK(post.log_var.norm() == 0.0);
}

TEST_CASE("posterior has one band per future frame at full scale") {
  const CvaeConfig cfg = toy_config(123, 45, 8, 16);
  nn::ParamStore store(2);
  const Cvae model(cfg, store);
  Rng rng(6);
  const MotionSequence X = random_seq(rng, 15, 123);
  const MotionSequence Y = random_seq(rng, 45, 123);
  const FrequencyPosterior post = model.encode(store, X, Y);
  CHECK(post.mean.rows() == 45);
  CHECK(post.mean.cols() == 16);
  CHECK(post.log_var.rows() == 45);
}

TEST_CASE("layout mismatch between condition and future is rejected") {
  const CvaeConfig cfg = toy_config();
  nn::ParamStore store(1);
  const Cvae model(cfg, store);
  Rng rng(5);
  MotionSequence X = random_seq(rng, 5, cfg.input_dim);
  MotionSequence Y = random_seq(rng, cfg.n_future, cfg.input_dim);
  Y.layout = "other";
  CHECK_THROWS_AS((void)model.encode(store, X, Y), DomainError);
}

TEST_CASE("reparameterization") {
  FrequencyPosterior post;
  post.mean = Eigen::MatrixXd::Constant(3, 2, 0.7);
  post.log_var = Eigen::MatrixXd::Constant(3, 2, -300.0);  // clamped at -20
  CvaeConfig cfg = toy_config(6, 3, 3, 2);

  SUBCASE("degenerate variance collapses to the mean") {
    Rng rng(1);
    const Eigen::MatrixXd z = Cvae::reparameterize(post, cfg, rng);
    CHECK((z.array() - 0.7).abs().maxCoeff() < 1e-4);
  }
  SUBCASE("standard posterior reproduces the raw normal stream") {
    post.mean.setZero();
    post.log_var.setZero();
    Rng rng(42);
    const Eigen::MatrixXd z = Cvae::reparameterize(post, cfg, rng);
    Rng replay(42);
    for (int w = 0; w < 3; ++w) {
      for (int j = 0; j < 2; ++j) {
        CHECK(z(w, j) == replay.normal());
      }
    }
  }
  SUBCASE("empirical mean approaches mu") {
    post.mean = Eigen::MatrixXd::Constant(3, 2, 0.25);
    post.log_var = Eigen::MatrixXd::Constant(3, 2, 0.4);
    Rng rng(7);
    const int n = 100000;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(3, 2);
    for (int s = 0; s < n; ++s) acc += Cvae::reparameterize(post, cfg, rng);
    acc /= n;
    const double sigma = std::exp(0.5 * 0.4);
    const double band = 3.0 * sigma / std::sqrt(static_cast<double>(n));
    CHECK((acc.array() - 0.25).abs().maxCoeff() < band);
  }
}

TEST_CASE("zero-weight decoder repeats the last condition frame") {
  const CvaeConfig cfg = toy_config();
  nn::ParamStore store(1);
  const Cvae model(cfg, store);
  store.set_all_zero();
  Rng rng(9);
  const MotionSequence X = random_seq(rng, 5, cfg.input_dim);
  const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(cfg.n_future, cfg.d_z);
  const MotionSequence out = model.decode(store, X, z);
  REQUIRE(out.frame_count() == cfg.n_future);
  for (int t = 0; t < out.frame_count(); ++t) {
    CHECK((out.frames.row(t) - X.frames.row(4)).norm() == 0.0);
  }
}

TEST_CASE("decoded output has the full marker width") {
  const CvaeConfig cfg = toy_config(123, 45, 8, 16);
  nn::ParamStore store(3);
  const Cvae model(cfg, store);
  Rng rng(10);
  const MotionSequence X = random_seq(rng, 15, 123);
  const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(45, 16);
  const MotionSequence out = model.decode(store, X, z);
  CHECK(out.frame_count() == 45);
  CHECK(out.dim() == 123);
}

TEST_CASE("decode is deterministic in (condition, latent)") {
  const CvaeConfig cfg = toy_config();
  nn::ParamStore store(11);
  const Cvae model(cfg, store);
  Rng rng(12);
  const MotionSequence X = random_seq(rng, 5, cfg.input_dim);
  Eigen::MatrixXd z(cfg.n_future, cfg.d_z);
  for (int r = 0; r < z.rows(); ++r) {
    for (int c = 0; c < z.cols(); ++c) z(r, c) = rng.uniform(-1, 1);
  }
  const MotionSequence a = model.decode(store, X, z);
  const MotionSequence b = model.decode(store, X, z);
  CHECK(a.frames == b.frames);
}

TEST_CASE("changing one latent band changes the output") {
  const CvaeConfig cfg = toy_config();
  nn::ParamStore store(13);
  const Cvae model(cfg, store);
  Rng rng(14);
  const MotionSequence X = random_seq(rng, 5, cfg.input_dim);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(cfg.n_future, cfg.d_z);
  const MotionSequence base = model.decode(store, X, zero);
  for (int w = 0; w < cfg.n_future; ++w) {
    Eigen::MatrixXd z = zero;
    z(w, 0) = 1.0;
    const MotionSequence out = model.decode(store, X, z);
    CHECK((out.frames - base.frames).norm() > 0.0);
  }
}

TEST_CASE("plain and tape paths agree") {
  const CvaeConfig cfg = toy_config();
  nn::ParamStore store(15);
  const Cvae model(cfg, store);
  Rng rng(16);
  const MotionSequence X = random_seq(rng, 5, cfg.input_dim);
  const MotionSequence Y = random_seq(rng, cfg.n_future, cfg.input_dim);

  const FrequencyPosterior plain = model.encode(store, X, Y);
  ad::Tape tape;
  nn::TapeBackend k(&tape, &store, true);
  auto [mu, lv] = model.encode_t(k, X.frames, Y.frames);
  CHECK((tape.value(mu).transpose() - plain.mean).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((tape.value(lv).transpose() - plain.log_var).cwiseAbs().maxCoeff() < 1e-14);

  Eigen::MatrixXd z(cfg.n_future, cfg.d_z);
  for (int r = 0; r < z.rows(); ++r) {
    for (int c = 0; c < z.cols(); ++c) z(r, c) = rng.uniform(-1, 1);
  }
  const MotionSequence dec_plain = model.decode(store, X, z);
  ad::Var dec_tape = model.decode_t(k, X.frames, tape.constant(z.transpose()));
  CHECK((tape.value(dec_tape).transpose() - dec_plain.frames).cwiseAbs().maxCoeff() <
        1e-14);
}

TEST_CASE("loss values: perfect reconstruction and the hand toy") {
  SUBCASE("matching reconstruction and standard posterior score zero") {
    const CvaeConfig cfg = toy_config();
    nn::ParamStore store(17);
    const Cvae model(cfg, store);
    Rng rng(18);
    const MotionSequence Y = random_seq(rng, cfg.n_future, cfg.input_dim);
    ad::Tape tape;
    nn::TapeBackend k(&tape, &store, true);
    const CvaeForward fwd = model.elbo_loss(
        k, Y.frames, tape.constant(Y.frames.transpose()),
        tape.constant(Eigen::MatrixXd::Zero(cfg.d_z, cfg.n_future)),
        tape.constant(Eigen::MatrixXd::Zero(cfg.d_z, cfg.n_future)),
        Y.frames.row(0).transpose());
    const LossParts parts = fwd.parts(tape);
    CHECK(parts.total == 0.0);
    CHECK(parts.recon == 0.0);
    CHECK(parts.velocity == 0.0);
    CHECK(parts.kld == 0.0);
  }
  SUBCASE("one-dimensional hand computation") {
    // Y = [0, 1], Y_rec = [0, 0], alpha = 3, zero divergence:
    // total = mean|diff| + 3 * mean|velocity diff| = 0.5 + 3.
    CvaeConfig cfg = toy_config(1, 2, 3, 2);
    nn::ParamStore store(19);
    const Cvae model(cfg, store);
    Eigen::MatrixXd y(2, 1);
    y << 0, 1;
    ad::Tape tape;
    nn::TapeBackend k(&tape, &store, true);
    const CvaeForward fwd = model.elbo_loss(
        k, y, tape.constant(Eigen::MatrixXd::Zero(1, 2)),
        tape.constant(Eigen::MatrixXd::Zero(2, 2)),
        tape.constant(Eigen::MatrixXd::Zero(2, 2)), Eigen::VectorXd::Zero(1));
    const LossParts parts = fwd.parts(tape);
    CHECK(parts.recon == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(parts.velocity == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(parts.total == doctest::Approx(3.5).epsilon(1e-15));
  }
}

TEST_CASE("loss decomposition holds exactly for random forwards") {
  const CvaeConfig cfg = toy_config();
  nn::ParamStore store(21);
  const Cvae model(cfg, store);
  Rng rng(22);
  ad::Tape tape;
  for (int trial = 0; trial < 5; ++trial) {
    tape.clear();
    nn::TapeBackend k(&tape, &store, true);
    const MotionSequence X = random_seq(rng, 5, cfg.input_dim);
    const MotionSequence Y = random_seq(rng, cfg.n_future, cfg.input_dim);
    Eigen::MatrixXd eps(cfg.d_z, cfg.n_future);
    for (int r = 0; r < eps.rows(); ++r) {
      for (int c = 0; c < eps.cols(); ++c) eps(r, c) = rng.normal();
    }
    const CvaeForward fwd = model.forward_train(k, X.frames, Y.frames, eps);
    const LossParts parts = fwd.parts(tape);
    CHECK(parts.total ==
          doctest::Approx(parts.recon + cfg.alpha * parts.velocity + parts.reg)
              .epsilon(1e-15));
    CHECK(parts.reg == doctest::Approx(robust_psi(parts.kld)).epsilon(1e-12));
  }
}

TEST_CASE("composite loss gradients match central differences on a toy") {
  // 2 markers, 4 future frames, as small as the model goes.
  const CvaeConfig cfg = toy_config(6, 4, 3, 2);
  nn::ParamStore store(23);
  const Cvae model(cfg, store);
  Rng rng(24);
  const MotionSequence X = random_seq(rng, 3, cfg.input_dim);
  const MotionSequence Y = random_seq(rng, cfg.n_future, cfg.input_dim);
  Eigen::MatrixXd eps(cfg.d_z, cfg.n_future);
  for (int r = 0; r < eps.rows(); ++r) {
    for (int c = 0; c < eps.cols(); ++c) eps(r, c) = rng.normal();
  }
  const double err =
      fd_max_rel_error(store, [&](ad::Tape&, nn::TapeBackend& k) {
        return model.forward_train(k, X.frames, Y.frames, eps).total;
      });
  CHECK(err < 1e-4);
}

TEST_CASE("kld gradient w.r.t. encoder weights matches central differences") {
  const CvaeConfig cfg = toy_config(6, 4, 3, 2);
  nn::ParamStore store(25);
  const Cvae model(cfg, store);
  Rng rng(26);
  const MotionSequence X = random_seq(rng, 3, cfg.input_dim);
  const MotionSequence Y = random_seq(rng, cfg.n_future, cfg.input_dim);
  Eigen::MatrixXd eps = Eigen::MatrixXd::Zero(cfg.d_z, cfg.n_future);
  const double err =
      fd_max_rel_error(store, [&](ad::Tape&, nn::TapeBackend& k) {
        return model.forward_train(k, X.frames, Y.frames, eps).kld;
      });
  CHECK(err < 1e-4);
}

TEST_CASE("baseline variant: no residual chain, first-frame match term") {
  CvaeConfig cfg = toy_config();
  cfg.residual_output = false;
  nn::ParamStore store(27);
  const Cvae model(cfg, store);
  store.set_all_zero();
  Rng rng(28);
  const MotionSequence X = random_seq(rng, 5, cfg.input_dim);
  const MotionSequence out =
      model.decode(store, X, Eigen::MatrixXd::Zero(cfg.n_future, cfg.d_z));
  // Without residuals a zero decoder emits zeros, not x_M.
  CHECK(out.frames.norm() == 0.0);

  ad::Tape tape;
  nn::TapeBackend k(&tape, &store, true);
  const MotionSequence Y = random_seq(rng, cfg.n_future, cfg.input_dim);
  Eigen::MatrixXd eps = Eigen::MatrixXd::Zero(cfg.d_z, cfg.n_future);
  const CvaeForward fwd = model.forward_train(k, X.frames, Y.frames, eps);
  const LossParts parts = fwd.parts(tape);
  // The velocity slot carries |x_M - y0|^2 with y0 = 0.
  const double expect = X.frames.row(4).squaredNorm() / cfg.input_dim;
  CHECK(parts.velocity == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("training: zero epochs, determinism, and loss decrease") {
  const int dim = 6;
  const auto clips = sinusoid_clips(16, dim, 101);
  CvaeConfig cfg = toy_config(dim, 4, 8, 2);

  SUBCASE("zero epochs keep the initialization") {
    nn::ParamStore store(31);
    const Cvae model(cfg, store);
    nn::ParamStore fresh(31);
    const Cvae twin(cfg, fresh);
    TrainConfig tc;
    tc.epochs = 0;
    train_cvae(model, store, clips, tc);
    for (const auto& name : store.names()) {
      CHECK(store.value(name) == fresh.value(name));
    }
  }
  SUBCASE("same seed reproduces the training trajectory exactly") {
    TrainConfig tc;
    tc.epochs = 3;
    tc.seed = 7;
    nn::ParamStore a(31), b(31);
    const Cvae ma(cfg, a), mb(cfg, b);
    const TrainHistory ha = train_cvae(ma, a, clips, tc);
    const TrainHistory hb = train_cvae(mb, b, clips, tc);
    REQUIRE(ha.epochs.size() == hb.epochs.size());
    for (std::size_t e = 0; e < ha.epochs.size(); ++e) {
      CHECK(ha.epochs[e].total == hb.epochs[e].total);
    }
    for (const auto& name : a.names()) CHECK(a.value(name) == b.value(name));
  }
  SUBCASE("reconstruction loss falls on the sinusoid toy set") {
    TrainConfig tc;
    tc.epochs = 12;
    tc.seed = 3;
    nn::ParamStore store(31);
    const Cvae model(cfg, store);
    const TrainHistory history = train_cvae(model, store, clips, tc);
    CHECK(history.epochs.back().recon < history.epochs.front().recon);

    // Residual outputs keep the first reconstructed frame continuous with
    // the last input frame: its jump stays within the largest per-step
    // delta seen anywhere in the training data.
    double max_step = 0.0;
    for (const auto& clip : clips) {
      for (int t = 1; t < clip.future.frame_count(); ++t) {
        max_step = std::max(max_step, (clip.future.frames.row(t) -
                                       clip.future.frames.row(t - 1))
                                          .cwiseAbs()
                                          .maxCoeff());
      }
    }
    for (const auto& clip : clips) {
      const FrequencyPosterior post =
          model.encode(store, clip.condition, clip.future);
      const MotionSequence rec = model.decode(store, clip.condition, post.mean);
      const double jump =
          (rec.frames.row(0) - clip.condition.frames.bottomRows(1))
              .cwiseAbs()
              .maxCoeff();
      CHECK(jump <= max_step);
    }
  }
}

TEST_CASE("training aborts with a diagnostic when a term goes non-finite") {
  const auto clips = sinusoid_clips(4, 6, 103);
  const CvaeConfig cfg = toy_config(6, 4, 3, 2);
  nn::ParamStore store(33);
  const Cvae model(cfg, store);
  store.value("out.W").setConstant(std::numeric_limits<double>::quiet_NaN());
  TrainConfig tc;
  tc.epochs = 1;
  CHECK_THROWS_WITH_AS(train_cvae(model, store, clips, tc),
                       doctest::Contains("reconstruction"), DomainError);
}

TEST_CASE("config defaults and JSON round trip") {
  CvaeConfig cfg;
  CHECK(cfg.alpha == 3.0);
  CHECK(cfg.robust_kld);
  CHECK(cfg.kld_weight == 1.0);
  CHECK(cfg.d_z == 16);
  CHECK(cfg.residual_output);

  cfg.input_dim = 30;
  cfg.layout = "toy10";
  cfg.d_z = 128;
  const CvaeConfig back = CvaeConfig::from_json(cfg.to_json());
  CHECK(back.input_dim == 30);
  CHECK(back.d_z == 128);
  CHECK(back.layout == "toy10");
}
