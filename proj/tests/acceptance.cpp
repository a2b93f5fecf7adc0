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

// End-to-end acceptance suite. Each criterion prints one PASS/FAIL line; the
// binary exits nonzero if any criterion fails. Training-dependent criteria
// share one toy model trained here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>
#include <vector>

#include "mopred/cvae.hpp"
#include "mopred/dataset.hpp"
#include "mopred/dct.hpp"
#include "mopred/dlow.hpp"
#include "mopred/metrics.hpp"
#include "mopred/projection.hpp"
#include "test_util.hpp"

using namespace mopred;
using testutil::fd_max_rel_error;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  template <typename T>
  void require_lt(T value, T limit, const std::string& what) {
    std::ostringstream os;
    os << what << " = " << value << " (limit " << limit << ")";
    require(value < limit, os.str());
  }
};

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

MotionSequence make_seq(const Eigen::MatrixXd& frames, double rate = 15.0) {
  MotionSequence s;
  s.frames = frames;
  s.frame_rate = rate;
  s.layout = "probe";
  return s;
}

MotionSequence random_seq(Rng& rng, int T, int V) {
  Eigen::MatrixXd f(T, 3 * V);
  for (int r = 0; r < T; ++r) {
    for (int c = 0; c < 3 * V; ++c) f(r, c) = rng.uniform(-1, 1);
  }
  return make_seq(f);
}

// Shared training artifacts (criterion 4 builds them; 5 and 9 reuse them).
struct ToyWorld {
  std::vector<ClipView> train;
  std::vector<ClipView> held_out;
  CvaeConfig cfg;
  nn::ParamStore store{0};
  std::unique_ptr<Cvae> model;
  TrainHistory history;
  double train_seconds = 0.0;
  bool deterministic = false;
};
ToyWorld g_world;

std::vector<ClipView> synth_clips(const MarkerLayout& layout, int count,
                                  std::uint64_t seed_base) {
  const SkeletonDef skel = desk_skeleton();
  const MotionFamily families[] = {MotionFamily::kWalk, MotionFamily::kWave,
                                   MotionFamily::kCircle, MotionFamily::kSwing};
  std::vector<ClipView> clips;
  int i = 0;
  while (static_cast<int>(clips.size()) < count) {
    SynthSpec spec;
    spec.family = families[i % 4];
    spec.seed = seed_base + i;
    ++i;
    const RawSequence raw = synth_generate(spec, skel, layout);
    for (const auto& clip : canonicalize(raw)) {
      if (static_cast<int>(clips.size()) >= count) break;
      ClipView view;
      view.id = "clip" + std::to_string(clips.size());
      view.condition = clip.condition;
      view.future = clip.future;
      clips.push_back(std::move(view));
    }
  }
  return clips;
}

// ---------------------------------------------------------------------------

void criterion_1_transform(Check& c) {
  const double start = now_seconds();
  Rng rng(1);

  Eigen::MatrixXd signal(60, 123);
  for (int r = 0; r < 60; ++r) {
    for (int k = 0; k < 123; ++k) signal(r, k) = rng.uniform(-1, 1);
  }
  const Eigen::MatrixXd back = dct_inverse(dct_forward(signal));
  c.require_lt((back - signal).cwiseAbs().maxCoeff(), 1e-10, "round trip error");

  double worst_gram = 0.0;
  for (const int T : {2, 15, 45, 60, 128}) {
    const Eigen::MatrixXd& C = dct_matrix(T);
    worst_gram = std::max(worst_gram,
                          (C.transpose() * C - Eigen::MatrixXd::Identity(T, T))
                              .cwiseAbs()
                              .maxCoeff());
  }
  c.require_lt(worst_gram, 1e-12, "orthonormality error");

  const SpectralSequence spec = dct_forward(signal);
  c.require_lt(std::abs(spec.coeffs.squaredNorm() - signal.squaredNorm()), 1e-10,
               "Parseval gap");
  c.require_lt(now_seconds() - start, 1.0, "runtime seconds");
}

void criterion_2_gradients(Check& c) {
  const double start = now_seconds();
  double worst_affine = 0.0, worst_gru = 0.0, worst_cvae = 0.0;

  for (int trial = 0; trial < 20; ++trial) {
    nn::ParamStore store(1000 + trial);
    store.add("W", 4, 3);
    store.add("b", 4, 1, 3);
    store.add("x", 3, 1, 3);
    worst_affine = std::max(
        worst_affine, fd_max_rel_error(store, [](ad::Tape& t, nn::TapeBackend& k) {
          return t.mean_square(nn::affine(t, k.param("W"), k.param("b"), k.param("x")));
        }));
  }
  c.require_lt(worst_affine, 1e-4, "affine gradient error");

  for (int trial = 0; trial < 20; ++trial) {
    nn::ParamStore store(2000 + trial);
    const nn::GruParams gru = nn::GruParams::create(store, "g", 3, 4);
    store.add("h", 4, 1, 4);
    store.add("x", 3, 1, 3);
    worst_gru = std::max(
        worst_gru, fd_max_rel_error(store, [&gru](ad::Tape& t, nn::TapeBackend& k) {
          return t.mean_square(gru.step(k, k.param("h"), k.param("x")));
        }));
  }
  c.require_lt(worst_gru, 1e-4, "gru gradient error");

  CvaeConfig cfg;
  cfg.input_dim = 4;
  cfg.n_future = 3;
  cfg.d_hidden = 2;
  cfg.d_z = 2;
  cfg.layout = "probe";
  for (int trial = 0; trial < 20; ++trial) {
    nn::ParamStore store(3000 + trial);
    const Cvae model(cfg, store);
    Rng rng(4000 + trial);
    Eigen::MatrixXd X(3, 4), Y(3, 4), eps(2, 3);
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 4; ++k) {
        X(r, k) = rng.uniform(-1, 1);
        Y(r, k) = rng.uniform(-1, 1);
      }
      for (int k = 0; k < 2; ++k) eps(k, r) = rng.normal();
    }
    worst_cvae = std::max(
        worst_cvae, fd_max_rel_error(store, [&](ad::Tape&, nn::TapeBackend& k) {
          return model.forward_train(k, X, Y, eps).total;
        }));
  }
  c.require_lt(worst_cvae, 1e-4, "composite loss gradient error");

  // fit_loss and forward kinematics against central differences.
  const SkeletonDef skel = desk_skeleton();
  const MarkerLayout layout = toy10_layout();
  const FitConfig fit_cfg;
  const ParamBlocks blocks = ParamBlocks::all();
  double worst_fit = 0.0, worst_fk = 0.0;
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    BodyParams p = BodyParams::rest();
    p.t = Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.5, 1.2));
    for (int i = 0; i < 32; ++i) p.theta(i) = 0.3 * rng.uniform(-1, 1);
    for (int i = 0; i < 24; ++i) p.theta_h(i) = 0.3 * rng.uniform(-1, 1);
    for (int i = 0; i < 10; ++i) p.beta(i) = 0.4 * rng.uniform(-1, 1);
    p.r6 << 1 + 0.3 * rng.uniform(-1, 1), 0.3 * rng.uniform(-1, 1),
        0.3 * rng.uniform(-1, 1), 0.3 * rng.uniform(-1, 1),
        1 + 0.3 * rng.uniform(-1, 1), 0.3 * rng.uniform(-1, 1);
    Eigen::VectorXd y(layout.dim());
    for (int i = 0; i < y.size(); ++i) y(i) = rng.uniform(-1, 1);

    const Eigen::VectorXd grad = fit_loss_gradient(skel, layout, p, y, fit_cfg, blocks);
    const MarkersJacobian mj = markers_with_jacobian(skel, layout, p, blocks);
    const Eigen::VectorXd x = pack_params(p, blocks);
    const double eps_fd = 1e-6;
    // Entries far below the gradient scale sit at the finite-difference
    // noise floor; compare them at the vector scale.
    const double grad_floor = 1e-4 * std::max(grad.cwiseAbs().maxCoeff(), 1.0);
    for (int i = 0; i < x.size(); ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp(i) += eps_fd;
      xm(i) -= eps_fd;
      BodyParams pp = p, pm = p;
      unpack_params(xp, blocks, pp);
      unpack_params(xm, blocks, pm);
      const double fd = (fit_loss(skel, layout, pp, y, fit_cfg) -
                         fit_loss(skel, layout, pm, y, fit_cfg)) /
                        (2 * eps_fd);
      worst_fit = std::max(worst_fit,
                           std::abs(grad(i) - fd) /
                               std::max({std::abs(grad(i)), std::abs(fd), grad_floor}));
      const Eigen::VectorXd fk_fd =
          (markers_from_body(skel, layout, pp) - markers_from_body(skel, layout, pm)) /
          (2 * eps_fd);
      worst_fk = std::max(worst_fk, (mj.jac.col(i) - fk_fd).cwiseAbs().maxCoeff() /
                                        std::max(1.0, fk_fd.cwiseAbs().maxCoeff()));
    }
  }
  c.require_lt(worst_fit, 1e-4, "fit_loss gradient error");
  c.require_lt(worst_fk, 1e-4, "kinematics jacobian error");
  c.require_lt(now_seconds() - start, 60.0, "runtime seconds");
}

void criterion_3_loss_identities(Check& c) {
  c.require(robust_psi(0.0) == 0.0, "psi(0) != 0");
  c.require(std::abs(robust_psi(1.0) - (std::sqrt(2.0) - 1.0)) <= 1e-12,
            "psi(1) != sqrt(2)-1");
  FrequencyPosterior post;
  post.mean = Eigen::MatrixXd::Zero(1, 1);
  post.log_var = Eigen::MatrixXd::Zero(1, 1);
  c.require(kld_standard_normal(post) == 0.0, "KLD at the prior != 0");
  post.mean(0, 0) = 1.0;
  c.require(kld_standard_normal(post) == 0.5, "KLD at mu=1 != 0.5");
  c.require(robust_psi_deriv(0.01) < 0.011, "psi'(0.01) not vanishing");
}

void criterion_4_toy_training(Check& c) {
  const double start = now_seconds();
  const MarkerLayout layout = toy10_layout();
  g_world.train = synth_clips(layout, 200, 10000);
  g_world.held_out = synth_clips(layout, 24, 90000);

  CvaeConfig cfg;
  cfg.input_dim = layout.dim();
  cfg.n_future = 45;
  cfg.d_hidden = 48;
  cfg.d_z = 16;
  cfg.layout = layout.name;
  g_world.cfg = cfg;

  TrainConfig tc;
  tc.epochs = 50;
  tc.lr = 1e-3;
  tc.batch_size = 8;
  tc.seed = 11;

  // Determinism probe on a short prefix.
  {
    TrainConfig prefix = tc;
    prefix.epochs = 3;
    nn::ParamStore a(tc.seed), b(tc.seed);
    const Cvae ma(cfg, a), mb(cfg, b);
    const TrainHistory ha = train_cvae(ma, a, g_world.train, prefix);
    const TrainHistory hb = train_cvae(mb, b, g_world.train, prefix);
    bool same = nn::param_hash(a) == nn::param_hash(b);
    for (std::size_t e = 0; e < ha.epochs.size(); ++e) {
      same = same && ha.epochs[e].total == hb.epochs[e].total;
    }
    g_world.deterministic = same;
    c.require(same, "training trajectory not reproducible for a fixed seed");
  }

  nn::ParamStore store(tc.seed);
  g_world.model = std::make_unique<Cvae>(cfg, store);
  g_world.history = train_cvae(*g_world.model, store, g_world.train, tc);
  // Keep the trained weights for the later criteria.
  for (const auto& name : store.names()) {
    if (g_world.store.contains(name)) {
      g_world.store.value(name) = store.value(name);
    } else {
      g_world.store.add_raw(name, store.value(name));
    }
  }

  // 5-epoch moving average of the reconstruction loss.
  const auto& eps = g_world.history.epochs;
  auto smooth = [&](std::size_t at) {
    double acc = 0.0;
    int n = 0;
    for (std::size_t e = (at >= 4 ? at - 4 : 0); e <= at; ++e, ++n) {
      acc += eps[e].recon;
    }
    return acc / n;
  };
  const double first = smooth(4);
  const double last = smooth(eps.size() - 1);
  std::ostringstream os;
  os << "smoothed recon " << first << " -> " << last;
  c.require(last <= 0.5 * first, "reconstruction did not halve: " + os.str());

  g_world.train_seconds = now_seconds() - start;
  c.require_lt(g_world.train_seconds, 600.0, "runtime seconds");
  std::cout << "       (" << os.str() << ", " << g_world.train_seconds
            << " s)\n";
}

void criterion_5_diversity_trend(Check& c) {
  if (!g_world.model) {
    c.require(false, "toy model unavailable (criterion 4 failed)");
    return;
  }
  const Cvae& model = *g_world.model;
  const CvaeConfig& cfg = g_world.cfg;

  std::vector<ClipView> dlow_train(g_world.train.begin(),
                                   g_world.train.begin() + 48);
  auto train_bands = [&](int L, std::uint64_t seed) {
    DlowConfig dcfg;
    dcfg.K = 8;
    dcfg.L = L;
    dcfg.d_q = 32;
    // Bandwidth and regularizer weight matched to the toy pairwise distances
    // (a fraction of a meter over the flattened sequences).
    dcfg.sigma_div = 0.5;
    dcfg.lambda_kl = 0.02;
    auto q_store = std::make_unique<nn::ParamStore>(seed);
    auto sampler = std::make_unique<DlowSampler>(dcfg, cfg, *q_store);
    DlowTrainConfig tc;
    tc.epochs = 8;
    tc.lr = 1e-3;
    tc.seed = seed;
    train_dlow(model, g_world.store, *sampler, *q_store, dlow_train, tc);
    return std::pair{std::move(sampler), std::move(q_store)};
  };

  auto [sampler9, store9] = train_bands(9, 21);
  auto [sampler1, store1] = train_bands(1, 22);

  double div0 = 0.0, div1 = 0.0, div9 = 0.0;
  const int K = 8;
  for (std::size_t i = 0; i < g_world.held_out.size(); ++i) {
    const MotionSequence& X = g_world.held_out[i].condition;
    const std::uint64_t seed = 5000 + i;
    div0 += diversity(
        sample_diverse(model, g_world.store, nullptr, nullptr, X, K, 0, seed)
            .sequences);
    div1 += diversity(
        sample_diverse(model, g_world.store, sampler1.get(), store1.get(), X, K, 1, seed)
            .sequences);
    div9 += diversity(
        sample_diverse(model, g_world.store, sampler9.get(), store9.get(), X, K, 9, seed)
            .sequences);
  }
  const double n = static_cast<double>(g_world.held_out.size());
  div0 /= n;
  div1 /= n;
  div9 /= n;
  std::ostringstream os;
  os << "diversity L9 " << div9 << " > L1 " << div1 << " > L0 " << div0;
  c.require(div9 > div1 && div1 > div0, os.str());
  std::cout << "       (" << os.str() << ")\n";
}

void criterion_6_projection(Check& c) {
  const double start = now_seconds();
  const SkeletonDef skel = desk_skeleton();
  const MarkerLayout layout = eval26_layout();

  // A deliberately undertrained model: a couple of epochs on a small set.
  const auto clips = synth_clips(layout, 60, 40000);
  CvaeConfig cfg;
  cfg.input_dim = layout.dim();
  cfg.n_future = 45;
  cfg.d_hidden = 32;
  cfg.d_z = 8;
  cfg.layout = layout.name;
  nn::ParamStore store(31);
  const Cvae model(cfg, store);
  TrainConfig tc;
  tc.epochs = 2;
  tc.seed = 31;
  std::vector<ClipView> train(clips.begin(), clips.begin() + 56);
  train_cvae(model, store, train, tc);

  const FitConfig fit_cfg;
  FitConfig raw_cfg;
  raw_cfg.stage_caps = {0, 0, 0};

  double proj_def = 0.0, raw_def = 0.0, proj_bdf = 0.0, raw_bdf = 0.0;
  double fit_seconds = 0.0;
  int frames = 0;
  const auto bones = limb_bone_pairs(skel);
  // Joint echo markers in eval26, as index pairs for the raw clouds.
  std::vector<std::pair<int, int>> echo_bones;
  const std::pair<const char*, const char*> echo_names[] = {
      {"JLSH", "JLEL"}, {"JLEL", "JLWR"}, {"JRSH", "JREL"}, {"JREL", "JRWR"},
      {"JLHP", "JLKN"}, {"JLKN", "JLAK"}, {"JRHP", "JRKN"}, {"JRKN", "JRAK"},
  };
  for (const auto& [a, b] : echo_names) {
    echo_bones.emplace_back(layout.index_of(a), layout.index_of(b));
  }
  auto echo_track = [&](const MotionSequence& seq) {
    return seq.frames;  // bone pairs index directly into the marker columns
  };

  Rng rng(32);
  for (int i = 0; i < 3; ++i) {
    const ClipView& clip = clips[56 + i];
    Eigen::MatrixXd z(cfg.n_future, cfg.d_z);
    for (int r = 0; r < z.rows(); ++r) {
      for (int k = 0; k < z.cols(); ++k) z(r, k) = rng.normal();
    }
    const ProjectedRollout projected = rollout_with_projection(
        model, store, clip.condition, z, skel, layout, fit_cfg);
    const ProjectedRollout raw = rollout_with_projection(
        model, store, clip.condition, z, skel, layout, raw_cfg);

    const MotionSequence proj_seq = projected.projected_sequence();
    const MotionSequence raw_seq = raw.raw_sequence();
    for (const auto& group :
         {head_group(), upper_torso_group(), lower_torso_group()}) {
      proj_def = std::max(proj_def, deformation_score(proj_seq, layout, group));
      raw_def = std::max(raw_def, deformation_score(raw_seq, layout, group));
    }
    proj_bdf = std::max(proj_bdf,
                        bone_deformation(projected.fitted_joint_track(skel), bones));
    raw_bdf = std::max(raw_bdf, bone_deformation(echo_track(raw_seq), echo_bones));
    fit_seconds += projected.fit_seconds;
    frames += static_cast<int>(projected.frames.size());
  }

  c.require_lt(proj_def, 1e-6, "projected deformation (m)");
  c.require_lt(proj_bdf, 1e-6, "projected bone deformation (m)");
  c.require(raw_def > proj_def, "raw deformation not larger than projected");
  c.require(raw_bdf > proj_bdf, "raw bone deformation not larger than projected");
  const double per_frame = fit_seconds / frames;
  c.require_lt(per_frame, 1.0, "fit seconds per frame");
  std::ostringstream os;
  os << "proj def " << proj_def << " raw def " << raw_def << ", proj bdf "
     << proj_bdf << " raw bdf " << raw_bdf << ", " << per_frame << " s/frame, "
     << (now_seconds() - start) << " s total";
  std::cout << "       (" << os.str() << ")\n";
}

void criterion_7_metric_oracles(Check& c) {
  Rng rng(71);
  const int K = 5, T = 10, V = 4;
  std::vector<MotionSequence> samples;
  for (int k = 0; k < K; ++k) samples.push_back(random_seq(rng, T, V));
  const MotionSequence gt = random_seq(rng, T, V);
  const MotionSequence past = random_seq(rng, 4, V);
  std::vector<GtPair> pool;
  for (int i = 0; i < 3; ++i) {
    MotionSequence p = past;
    p.frames.array() += 0.01 * i;
    pool.push_back({p, random_seq(rng, T, V)});
  }

  // Brute-force loops, written independently of the library internals.
  auto l2 = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    double sq = 0.0;
    for (int r = 0; r < a.rows(); ++r) {
      for (int cc = 0; cc < a.cols(); ++cc) {
        const double d = a(r, cc) - b(r, cc);
        sq += d * d;
      }
    }
    return std::sqrt(sq);
  };
  double div_o = 0.0;
  int pairs = 0;
  for (int i = 0; i < K; ++i) {
    for (int j = i + 1; j < K; ++j) {
      div_o += l2(samples[i].frames, samples[j].frames);
      ++pairs;
    }
  }
  div_o /= pairs;
  c.require_lt(std::abs(diversity(samples) - div_o), 1e-12, "diversity gap");

  auto frame_l2 = [](const MotionSequence& a, const MotionSequence& b, int t) {
    double sq = 0.0;
    for (int cc = 0; cc < a.frames.cols(); ++cc) {
      const double d = a.frames(t, cc) - b.frames(t, cc);
      sq += d * d;
    }
    return std::sqrt(sq);
  };
  auto ade_o = [&](const MotionSequence& target) {
    double best = 1e300;
    for (const auto& s : samples) {
      double acc = 0.0;
      for (int t = 0; t < T; ++t) acc += frame_l2(s, target, t);
      best = std::min(best, acc / T);
    }
    return best;
  };
  auto fde_o = [&](const MotionSequence& target) {
    double best = 1e300;
    for (const auto& s : samples) best = std::min(best, frame_l2(s, target, T - 1));
    return best;
  };
  c.require_lt(std::abs(ade(samples, gt) - ade_o(gt)), 1e-12, "ade gap");
  c.require_lt(std::abs(fde(samples, gt) - fde_o(gt)), 1e-12, "fde gap");

  MetricsConfig mcfg;
  mcfg.eta = 0.5;
  double mm_o = 0.0, mmf_o = 0.0;
  int used = 0;
  for (const auto& p : pool) {
    const double d = frame_l2(
        make_seq(p.past.frames.bottomRows(1)),
        make_seq(past.frames.bottomRows(1)), 0);
    if (d < mcfg.eta) {
      mm_o += ade_o(p.future);
      mmf_o += fde_o(p.future);
      ++used;
    }
  }
  mm_o /= used;
  mmf_o /= used;
  c.require_lt(std::abs(mmade(samples, pool, past, mcfg) - mm_o), 1e-12, "mmade gap");
  c.require_lt(std::abs(mmfde(samples, pool, past, mcfg) - mmf_o), 1e-12, "mmfde gap");

  // FSE through an explicit cosine-sum spectrum.
  auto entropy_o = [&](const Eigen::MatrixXd& frames) {
    const double pi = 3.14159265358979323846;
    double acc = 0.0;
    int cols = 0;
    for (int cc = 0; cc < frames.cols(); ++cc) {
      std::vector<double> power;
      double total = 0.0;
      for (int k = 1; k < frames.rows(); ++k) {
        double coeff = 0.0;
        for (int n = 0; n < frames.rows(); ++n) {
          coeff += frames(n, cc) * std::cos(pi / frames.rows() * (n + 0.5) * k);
        }
        coeff *= std::sqrt(2.0 / frames.rows());
        power.push_back(coeff * coeff);
        total += coeff * coeff;
      }
      if (total <= 0.0) continue;
      double h = 0.0;
      for (const double p : power) {
        if (p > 0.0) h -= (p / total) * std::log(p / total);
      }
      acc += h;
      ++cols;
    }
    return cols > 0 ? acc / cols : 0.0;
  };
  double fse_o = 0.0;
  for (const auto& s : samples) fse_o += entropy_o(s.frames);
  fse_o = fse_o / K - entropy_o(gt.frames);
  c.require_lt(std::abs(fse(samples, gt) - fse_o), 1e-12, "fse gap");

  // Deformation and bone statistics against explicit loops.
  MarkerLayout tiny;
  tiny.name = "tiny";
  for (int i = 0; i < V; ++i) {
    tiny.markers.push_back({"M" + std::to_string(i), "pelvis", Eigen::Vector3d::Zero()});
  }
  auto std_of_pair = [&](const Eigen::MatrixXd& frames, int i, int j) {
    std::vector<double> dist;
    double mean = 0.0;
    for (int t = 0; t < frames.rows(); ++t) {
      double sq = 0.0;
      for (int a = 0; a < 3; ++a) {
        const double d = frames(t, 3 * i + a) - frames(t, 3 * j + a);
        sq += d * d;
      }
      dist.push_back(std::sqrt(sq));
      mean += dist.back();
    }
    mean /= dist.size();
    double var = 0.0;
    for (const double d : dist) var += (d - mean) * (d - mean);
    return std::sqrt(var / dist.size());
  };
  double def_o = 0.0;
  for (int i = 0; i < V; ++i) {
    for (int j = i + 1; j < V; ++j) def_o += std_of_pair(samples[0].frames, i, j);
  }
  const std::vector<std::string> group = {"M0", "M1", "M2", "M3"};
  c.require_lt(std::abs(deformation_score(samples[0], tiny, group) - def_o), 1e-12,
               "deformation gap");
  const double bdf_o = std_of_pair(samples[0].frames, 0, 1) +
                       std_of_pair(samples[0].frames, 2, 3);
  c.require_lt(std::abs(bone_deformation(samples[0].frames, {{0, 1}, {2, 3}}) - bdf_o),
               1e-12, "bone deformation gap");
}

void criterion_8_foot_skate(Check& c) {
  MarkerLayout layout;
  layout.name = "feet";
  layout.markers.push_back({"LHEE", "pelvis", Eigen::Vector3d::Zero()});
  layout.markers.push_back({"RHEE", "pelvis", Eigen::Vector3d::Zero()});
  const int T = 45;

  Eigen::MatrixXd skating = Eigen::MatrixXd::Zero(T, 6);
  for (int t = 0; t < T; ++t) {
    skating(t, 0) = 0.01 * t;
    skating(t, 3) = 0.01 * t;
    skating(t, 2) = 0.01;
    skating(t, 5) = 0.01;
  }
  c.require(foot_skate_ratio(make_seq(skating), layout) == 1.0,
            "skating clip ratio != 1");

  Eigen::MatrixXd planted = Eigen::MatrixXd::Zero(T, 6);
  planted.col(2).setConstant(0.01);
  planted.col(5).setConstant(0.01);
  c.require(foot_skate_ratio(make_seq(planted), layout) == 0.0,
            "planted clip ratio != 0");

  Eigen::MatrixXd mixed = planted;
  for (int t = 1; t <= 10; ++t) {
    mixed(t, 0) = mixed(t - 1, 0) + 0.01;
    mixed(t, 3) = mixed(t - 1, 3) + 0.01;
  }
  for (int t = 11; t < T; ++t) {
    mixed(t, 0) = mixed(10, 0);
    mixed(t, 3) = mixed(10, 3);
  }
  c.require(foot_skate_ratio(make_seq(mixed), layout) == 10.0 / 44.0,
            "mixed clip ratio != 10/44");
}

void criterion_9_energy_compaction(Check& c) {
  if (!g_world.model) {
    c.require(false, "toy model unavailable (criterion 4 failed)");
    return;
  }
  const int N = g_world.cfg.n_future;
  Eigen::VectorXd mean_abs_mu = Eigen::VectorXd::Zero(N);
  for (const auto& clip : g_world.held_out) {
    const FrequencyPosterior post =
        g_world.model->encode(g_world.store, clip.condition, clip.future);
    mean_abs_mu += post.mean.cwiseAbs().rowwise().mean();
  }
  mean_abs_mu /= static_cast<double>(g_world.held_out.size());

  // Spearman rank correlation between band index and mean |mu|.
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return mean_abs_mu(a) < mean_abs_mu(b); });
  Eigen::VectorXd rank(N);
  for (int i = 0; i < N; ++i) rank(order[i]) = i;
  double d2 = 0.0;
  for (int w = 0; w < N; ++w) d2 += (rank(w) - w) * (rank(w) - w);
  const double rho = 1.0 - 6.0 * d2 / (N * (double(N) * N - 1.0));
  std::ostringstream os;
  os << "Spearman rho = " << rho;
  c.require(rho < -0.3, os.str());
  std::cout << "       (" << os.str() << ")\n";
}

void criterion_10_canonicalization(Check& c) {
  const SkeletonDef skel = desk_skeleton();
  const MarkerLayout layout = toy10_layout();
  SynthSpec spec;
  spec.family = MotionFamily::kWalk;
  spec.seed = 404;
  spec.duration_s = 4.0;
  const RawSequence raw = synth_generate(spec, skel, layout);
  c.require(raw.markers.frame_count() == 480, "raw sequence is not 480 frames");

  const auto clips = canonicalize(raw);
  c.require(clips.size() == 1, "480 frames did not yield exactly one clip");
  if (clips.empty()) return;
  const CanonicalClip& clip = clips[0];
  c.require(clip.condition.frame_count() == 15, "condition is not 15 frames");
  c.require(clip.future.frame_count() == 45, "future is not 45 frames");
  c.require(clip.condition.frame_rate == 15.0, "condition rate is not 15 Hz");

  Eigen::Vector3d across = clip.hip_r0 - clip.hip_l0;
  across.z() = 0.0;
  across.normalize();
  c.require_lt(std::abs(across.x() - 1.0), 1e-9, "hip axis x error");
  c.require_lt(std::abs(across.y()), 1e-9, "hip axis y error");
  c.require_lt(std::abs(clip.root0.x()), 1e-9, "origin x error");
  c.require_lt(std::abs(clip.root0.y()), 1e-9, "origin y error");

  const MotionSequence combined = combine_clip(clip);
  const WorldReset again = compute_world_reset(clip.hip_l0, clip.hip_r0, clip.root0);
  const Eigen::MatrixXd twice = apply_world_reset(again, combined.frames);
  c.require_lt((twice - combined.frames).cwiseAbs().maxCoeff(), 1e-12,
               "reset is not idempotent");
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* label;
    std::function<void(Check&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "transform correctness", criterion_1_transform},
      {2, "gradient suite", criterion_2_gradients},
      {3, "loss identities", criterion_3_loss_identities},
      {4, "toy training convergence", criterion_4_toy_training},
      {5, "diversity trend over band count", criterion_5_diversity_trend},
      {6, "projection manifold guarantee", criterion_6_projection},
      {7, "metric oracle equivalence", criterion_7_metric_oracles},
      {8, "foot-skate fixtures", criterion_8_foot_skate},
      {9, "energy compaction of the trained posterior", criterion_9_energy_compaction},
      {10, "canonicalization", criterion_10_canonicalization},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    Check check;
    const double start = now_seconds();
    try {
      criterion.run(check);
    } catch (const std::exception& e) {
      check.require(false, std::string("exception: ") + e.what());
    }
    const double elapsed = now_seconds() - start;
    std::printf("[%s] criterion %2d: %s (%.1f s)%s%s\n",
                check.ok ? "PASS" : "FAIL", criterion.id, criterion.label,
                elapsed, check.ok ? "" : " -- ",
                check.ok ? "" : check.detail.c_str());
    std::fflush(stdout);
    if (!check.ok) ++failures;
  }
  if (failures > 0) {
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return 1;
  }
  std::printf("all %zu criteria passed\n", criteria.size());
  return 0;
}
