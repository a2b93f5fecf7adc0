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

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "mopred/body_model.hpp"
#include "mopred/cvae.hpp"
#include "mopred/dataset.hpp"
#include "mopred/dlow.hpp"
#include "mopred/metrics.hpp"
#include "mopred/projection.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mopred;

namespace {

// Derives a per-item stream from the run seed; stable across worker counts.
std::uint64_t seed_for(std::uint64_t base, std::size_t index) {
  return base + 0x9E3779B97F4A7C15ull * (index + 1);
}

int thread_count() {
  if (const char* env = std::getenv("MOPRED_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

// Order-independent parallel map over [0, n).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const int workers = std::min<std::size_t>(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mu;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string resolve_out_dir(const std::string& given) {
  if (const char* env = std::getenv("MOPRED_OUT")) {
    return (fs::path(env) / fs::path(given).filename()).string();
  }
  return given;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (text.empty() || text.back() != '\n') out << "\n";
}

void write_run_config(const fs::path& dir, const json& resolved) {
  write_text(dir / "config.json", resolved.dump(2));
}

MarkerLayout layout_from_options(const std::string& name,
                                 const std::string& file) {
  if (!file.empty()) return load_layout(file);
  return builtin_layout(name);
}

SkeletonDef skeleton_from_options(const std::string& file) {
  if (!file.empty()) return load_skeleton(file);
  return desk_skeleton();
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataOpts {
  std::string out;
  int count = 200;
  std::string families = "walk,wave,circle,swing";
  std::string layout = "cmu41";
  std::string layout_file;
  std::string skeleton_file;
  std::uint64_t seed = 0;
  double duration = 4.0;
  double test_fraction = 0.15;
  double speed_min = 0.8, speed_max = 1.2;
  double amp_min = 0.25, amp_max = 0.45;
};

int cmd_gen_data(const GenDataOpts& opt) {
  const std::string out_dir = resolve_out_dir(opt.out);
  fs::create_directories(out_dir);

  std::vector<MotionFamily> families;
  std::stringstream fs_in(opt.families);
  std::string tok;
  while (std::getline(fs_in, tok, ',')) {
    if (!tok.empty()) families.push_back(family_from_string(tok));
  }
  if (families.empty()) throw ConfigError("gen-data: no families given");

  const SkeletonDef skel = skeleton_from_options(opt.skeleton_file);
  const MarkerLayout layout = layout_from_options(opt.layout, opt.layout_file);

  DatasetBundle bundle;
  const int train_count =
      opt.count - static_cast<int>(std::floor(opt.count * opt.test_fraction));
  for (int i = 0; i < opt.count; ++i) {
    SynthSpec spec;
    spec.family = families[i % families.size()];
    spec.speed_min = opt.speed_min;
    spec.speed_max = opt.speed_max;
    spec.amp_min = opt.amp_min;
    spec.amp_max = opt.amp_max;
    spec.duration_s = opt.duration;
    spec.seed = seed_for(opt.seed, i);
    const RawSequence raw = synth_generate(spec, skel, layout);
    const auto clips = canonicalize(raw);
    for (std::size_t c = 0; c < clips.size(); ++c) {
      std::ostringstream id;
      id << "seq" << std::setw(4) << std::setfill('0') << i << "_c" << c;
      SequenceRecord rec;
      rec.id = id.str();
      rec.file = rec.id + ".mseq";
      rec.split = (i < train_count) ? "train" : "test";
      rec.generator = family_to_string(spec.family) + ":" + std::to_string(spec.seed);
      rec.condition_frames = 15;
      bundle.manifest.records.push_back(rec);
      bundle.sequences.push_back(combine_clip(clips[c]));
    }
  }
  save_dataset((fs::path(out_dir) / "manifest.json").string(), bundle);

  json resolved = {{"command", "gen-data"},
                   {"out", out_dir},
                   {"count", opt.count},
                   {"families", opt.families},
                   {"layout", layout.name},
                   {"seed", opt.seed},
                   {"duration", opt.duration},
                   {"test_fraction", opt.test_fraction},
                   {"speed", {opt.speed_min, opt.speed_max}},
                   {"amplitude", {opt.amp_min, opt.amp_max}},
                   {"clips", bundle.sequences.size()}};
  write_run_config(out_dir, resolved);
  std::cout << "wrote " << bundle.sequences.size() << " clips to " << out_dir
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-cvae

struct TrainCvaeOpts {
  std::string data;
  std::string out;
  int epochs = 50;
  double lr = 1e-3;
  int batch = 8;
  int d_hidden = 64;
  int d_z = 16;
  double alpha = 3.0;
  double kld_weight = -1.0;  // resolved from the KLD mode when negative
  bool standard_kld = false;
  bool no_residual = false;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
};

int cmd_train_cvae(const TrainCvaeOpts& opt) {
  const std::string out_dir = resolve_out_dir(opt.out);
  fs::create_directories(out_dir);

  const DatasetBundle bundle = load_dataset(opt.data);
  const auto clips = clips_of_split(bundle, "train");
  if (clips.empty()) throw ConfigError("train-cvae: no training clips in " + opt.data);

  CvaeConfig cfg;
  cfg.input_dim = clips[0].condition.dim();
  cfg.n_future = clips[0].future.frame_count();
  cfg.d_hidden = opt.d_hidden;
  cfg.d_z = opt.d_z;
  cfg.residual_output = !opt.no_residual;
  cfg.robust_kld = !opt.standard_kld;
  cfg.alpha = opt.alpha;
  cfg.kld_weight = opt.kld_weight >= 0.0 ? opt.kld_weight
                                         : (cfg.robust_kld ? 1.0 : 0.1);
  cfg.layout = clips[0].condition.layout;

  nn::ParamStore store(opt.seed);
  Cvae model(cfg, store);

  std::ofstream loss_csv(fs::path(out_dir) / "loss.csv");
  loss_csv << "epoch,total,recon,velocity,kld,reg\n";
  loss_csv.precision(12);

  TrainConfig tc;
  tc.epochs = opt.epochs;
  tc.lr = opt.lr;
  tc.batch_size = opt.batch;
  tc.clip_norm = opt.clip_norm;
  tc.seed = opt.seed;
  tc.on_epoch = [&loss_csv](int epoch, const LossParts& p) {
    loss_csv << epoch << ',' << p.total << ',' << p.recon << ',' << p.velocity
             << ',' << p.kld << ',' << p.reg << "\n";
    std::cout << "epoch " << epoch << " total " << p.total << " recon "
              << p.recon << "\n";
  };
  train_cvae(model, store, clips, tc);

  const std::string ckpt = (fs::path(out_dir) / "cvae.json").string();
  nn::save_checkpoint(ckpt, store, cfg.to_json());

  json resolved = {{"command", "train-cvae"},
                   {"data", opt.data},
                   {"out", out_dir},
                   {"epochs", opt.epochs},
                   {"lr", opt.lr},
                   {"batch", opt.batch},
                   {"seed", opt.seed},
                   {"clip_norm", opt.clip_norm},
                   {"model", json::parse(cfg.to_json())},
                   {"checkpoint", ckpt},
                   {"param_hash", nn::param_hash(store)}};
  write_run_config(out_dir, resolved);
  std::cout << "checkpoint " << ckpt << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-dlow

struct TrainDlowOpts {
  std::string data;
  std::string cvae;
  std::string out;
  int K = 50;
  int L = -1;  // resolved to the 20% rule when negative
  int d_q = 64;
  int epochs = 10;
  double lr = 1e-3;
  double lambda_rec = 2.0;
  double lambda_kl = 1.0;
  double lambda_div = 10.0;
  double sigma_div = 10.0;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  int limit = 0;  // cap on training conditions, 0 = all
};

int cmd_train_dlow(const TrainDlowOpts& opt) {
  const std::string out_dir = resolve_out_dir(opt.out);
  fs::create_directories(out_dir);

  nn::ParamStore cvae_store(0);
  const std::string cvae_cfg_json = nn::load_checkpoint(opt.cvae, cvae_store);
  const CvaeConfig cvae_cfg = CvaeConfig::from_json(cvae_cfg_json);
  const Cvae model(cvae_cfg, cvae_store);
  const std::uint64_t cvae_hash = nn::param_hash(cvae_store);

  const DatasetBundle bundle = load_dataset(opt.data);
  auto clips = clips_of_split(bundle, "train");
  if (clips.empty()) throw ConfigError("train-dlow: no training clips in " + opt.data);
  if (opt.limit > 0 && static_cast<int>(clips.size()) > opt.limit) {
    clips.resize(opt.limit);
  }

  DlowConfig dcfg;
  dcfg.K = opt.K;
  dcfg.L = opt.L >= 0 ? opt.L : DlowConfig::default_band_count(cvae_cfg.n_future);
  dcfg.d_q = opt.d_q;
  dcfg.lambda_rec = opt.lambda_rec;
  dcfg.lambda_kl = opt.lambda_kl;
  dcfg.lambda_div = opt.lambda_div;
  dcfg.sigma_div = opt.sigma_div;

  nn::ParamStore q_store(opt.seed);
  DlowSampler sampler(dcfg, cvae_cfg, q_store);

  std::ofstream loss_csv(fs::path(out_dir) / "loss.csv");
  loss_csv << "epoch,total,rec,kl,div\n";
  loss_csv.precision(12);

  DlowTrainConfig tc;
  tc.epochs = opt.epochs;
  tc.lr = opt.lr;
  tc.clip_norm = opt.clip_norm;
  tc.seed = opt.seed;
  tc.on_epoch = [&loss_csv](int epoch, const DlowLossParts& p) {
    loss_csv << epoch << ',' << p.total << ',' << p.rec << ',' << p.kl << ','
             << p.div << "\n";
    std::cout << "epoch " << epoch << " total " << p.total << " div " << p.div
              << "\n";
  };
  train_dlow(model, cvae_store, sampler, q_store, clips, tc);

  json q_config = json::parse(dcfg.to_json());
  q_config["cvae_hash"] = cvae_hash;
  q_config["cvae_checkpoint"] = opt.cvae;
  const std::string ckpt = (fs::path(out_dir) / "qnets.json").string();
  nn::save_checkpoint(ckpt, q_store, q_config.dump());

  json resolved = {{"command", "train-dlow"}, {"data", opt.data},
                   {"cvae", opt.cvae},        {"out", out_dir},
                   {"epochs", opt.epochs},    {"lr", opt.lr},
                   {"seed", opt.seed},        {"sampler", q_config},
                   {"checkpoint", ckpt},      {"conditions", clips.size()}};
  write_run_config(out_dir, resolved);
  std::cout << "checkpoint " << ckpt << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// predict

struct PredictOpts {
  std::string cvae;
  std::string qnets;
  std::string data;
  std::string split = "test";
  std::string out;
  int K = 50;
  int L = -1;  // resolved from the sampler checkpoint (or 0 without one)
  std::uint64_t seed = 0;
  int limit = 0;
  bool project = false;
  double lambda1 = 0.0005;
  double lambda2 = 0.01;
  std::vector<int> stage_caps = {20, 30, 10};
  std::string skeleton_file;
  std::string layout_file;
};

int cmd_predict(const PredictOpts& opt) {
  const std::string out_dir = resolve_out_dir(opt.out);
  fs::create_directories(out_dir);

  nn::ParamStore cvae_store(0);
  const CvaeConfig cvae_cfg =
      CvaeConfig::from_json(nn::load_checkpoint(opt.cvae, cvae_store));
  const Cvae model(cvae_cfg, cvae_store);

  std::unique_ptr<nn::ParamStore> q_store;
  std::unique_ptr<DlowSampler> sampler;
  int L = 0;
  if (!opt.qnets.empty()) {
    q_store = std::make_unique<nn::ParamStore>(0);
    const json q_config = json::parse(nn::load_checkpoint(opt.qnets, *q_store));
    const DlowConfig dcfg = DlowConfig::from_json(q_config.dump());
    const std::uint64_t expected = q_config.value("cvae_hash", 0ull);
    if (expected != nn::param_hash(cvae_store)) {
      throw ConfigError("predict: sampler checkpoint " + opt.qnets +
                        " was trained against a different decoder than " +
                        opt.cvae);
    }
    sampler = std::make_unique<DlowSampler>(dcfg, cvae_cfg, *q_store);
    L = dcfg.L;
  }
  if (opt.L >= 0) {
    if (sampler && opt.L > sampler->config().L) {
      throw ConfigError("predict: requested L exceeds the trained band count");
    }
    L = opt.L;
  }

  const DatasetBundle bundle = load_dataset(opt.data);
  auto clips = clips_of_split(bundle, opt.split);
  if (clips.empty()) throw ConfigError("predict: no clips in split '" + opt.split + "'");
  if (opt.limit > 0 && static_cast<int>(clips.size()) > opt.limit) {
    clips.resize(opt.limit);
  }

  const SkeletonDef skel = skeleton_from_options(opt.skeleton_file);
  MarkerLayout layout;
  if (opt.project) {
    layout = opt.layout_file.empty() ? builtin_layout(clips[0].condition.layout)
                                     : load_layout(opt.layout_file);
  }

  FitConfig fit_cfg;
  fit_cfg.lambda1 = opt.lambda1;
  fit_cfg.lambda2 = opt.lambda2;
  if (opt.stage_caps.size() != 3) {
    throw ConfigError("predict: --stage-caps needs exactly three values");
  }
  fit_cfg.stage_caps = {opt.stage_caps[0], opt.stage_caps[1], opt.stage_caps[2]};

  struct ConditionOutput {
    json entry;
    std::vector<std::pair<std::string, MotionSequence>> files;
    std::vector<std::pair<std::string, std::string>> rollout_files;
  };
  std::vector<ConditionOutput> outputs(clips.size());

  parallel_for(clips.size(), [&](std::size_t i) {
    const ClipView& clip = clips[i];
    const std::uint64_t cond_seed = seed_for(opt.seed, i);
    Rng rng(cond_seed);
    const auto latents = sample_latents(model, cvae_store, sampler.get(),
                                        q_store.get(), clip.condition, opt.K, L,
                                        rng);
    ShapeFit shape;
    if (opt.project) {
      shape = fit_shape_from_input(skel, layout, clip.condition, fit_cfg);
    }
    ConditionOutput& out = outputs[i];
    out.entry["id"] = clip.id;
    out.entry["seed"] = cond_seed;
    json samples = json::array();
    json rollouts = json::array();
    for (std::size_t k = 0; k < latents.size(); ++k) {
      std::ostringstream name;
      name << "pred_" << clip.id << "_k" << std::setw(2) << std::setfill('0')
           << k << ".mseq";
      if (opt.project) {
        const ProjectedRollout rollout =
            rollout_with_projection(model, cvae_store, clip.condition, latents[k],
                                    skel, layout, fit_cfg, &shape);
        out.files.emplace_back(name.str(), rollout.projected_sequence());
        std::ostringstream rname;
        rname << "rollout_" << clip.id << "_k" << std::setw(2)
              << std::setfill('0') << k << ".json";
        out.rollout_files.emplace_back(rname.str(), rollout_to_json(rollout));
        rollouts.push_back(rname.str());
      } else {
        out.files.emplace_back(name.str(),
                               model.decode(cvae_store, clip.condition, latents[k]));
      }
      samples.push_back(name.str());
    }
    out.entry["samples"] = std::move(samples);
    if (opt.project) out.entry["rollouts"] = std::move(rollouts);
  });

  json conditions = json::array();
  for (auto& out : outputs) {
    for (const auto& [name, seq] : out.files) {
      save_sequence((fs::path(out_dir) / name).string(), seq);
    }
    for (const auto& [name, text] : out.rollout_files) {
      write_text(fs::path(out_dir) / name, text);
    }
    conditions.push_back(std::move(out.entry));
  }

  json manifest = {{"format", "mopred-predictions-v1"},
                   {"dataset", opt.data},
                   {"split", opt.split},
                   {"K", opt.K},
                   {"L", L},
                   {"seed", opt.seed},
                   {"project", opt.project},
                   {"conditions", std::move(conditions)}};
  write_text(fs::path(out_dir) / "predictions.json", manifest.dump(2));

  json resolved = {{"command", "predict"},
                   {"cvae", opt.cvae},
                   {"qnets", opt.qnets},
                   {"data", opt.data},
                   {"split", opt.split},
                   {"out", out_dir},
                   {"K", opt.K},
                   {"L", L},
                   {"seed", opt.seed},
                   {"project", opt.project},
                   {"conditions", clips.size()}};
  write_run_config(out_dir, resolved);
  std::cout << "wrote " << clips.size() << " condition sets to " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOpts {
  std::string pred;
  std::string data;
  std::string out;
  double eta = 0.5;
  bool squared_error = false;
  std::string skeleton_file;
  std::string layout_file;
};

int cmd_evaluate(const EvaluateOpts& opt) {
  const std::string out_dir = resolve_out_dir(opt.out);
  fs::create_directories(out_dir);

  std::ifstream in(fs::path(opt.pred) / "predictions.json");
  if (!in) throw ConfigError("evaluate: cannot open predictions manifest in " + opt.pred);
  json pred_manifest;
  in >> pred_manifest;
  const std::string split = pred_manifest.value("split", "test");

  const DatasetBundle bundle = load_dataset(opt.data);
  const auto clips = clips_of_split(bundle, split);
  std::map<std::string, const ClipView*> by_id;
  for (const auto& c : clips) by_id[c.id] = &c;

  std::vector<GtPair> pool;
  for (const auto& c : clips) pool.push_back({c.condition, c.future});

  MetricsConfig mcfg;
  mcfg.eta = opt.eta;
  mcfg.squared_error = opt.squared_error;

  const SkeletonDef skel = skeleton_from_options(opt.skeleton_file);

  MetricsReport report;
  int conditions = 0;
  double skate_acc = 0.0;
  int skate_count = 0;
  std::map<std::string, std::pair<double, int>> deform_acc;
  double bdf_acc = 0.0;
  int bdf_count = 0;
  MarkerLayout layout;
  bool layout_ready = false;

  for (const auto& cond : pred_manifest.at("conditions")) {
    const std::string id = cond.at("id").get<std::string>();
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw ConfigError("evaluate: prediction id '" + id + "' is not in split '" +
                        split + "'");
    }
    const ClipView& clip = *it->second;
    if (!layout_ready) {
      layout = opt.layout_file.empty() ? builtin_layout(clip.condition.layout)
                                       : load_layout(opt.layout_file);
      layout_ready = true;
    }

    std::vector<MotionSequence> samples;
    for (const auto& file : cond.at("samples")) {
      samples.push_back(
          load_sequence((fs::path(opt.pred) / file.get<std::string>()).string()));
    }

    report.diversity += samples.size() >= 2 ? diversity(samples) : 0.0;
    report.ade += ade(samples, clip.future, mcfg);
    report.fde += fde(samples, clip.future, mcfg);
    report.mmade += mmade(samples, pool, clip.condition, mcfg);
    report.mmfde += mmfde(samples, pool, clip.condition, mcfg);
    report.fse += fse(samples, clip.future);
    ++conditions;

    const bool has_heels = layout.contains("LHEE") && layout.contains("RHEE");
    for (const auto& s : samples) {
      if (has_heels) {
        skate_acc += foot_skate_ratio(s, layout);
        ++skate_count;
      }
      for (const auto& [group_name, group] :
           {std::pair{"head", head_group()},
            std::pair{"upper_torso", upper_torso_group()},
            std::pair{"lower_torso", lower_torso_group()}}) {
        bool present = true;
        for (const auto& m : group) present = present && layout.contains(m);
        if (!present) continue;
        auto& [acc, count] = deform_acc[group_name];
        acc += deformation_score(s, layout, group);
        ++count;
      }
    }

    if (cond.contains("rollouts")) {
      const auto bones = limb_bone_pairs(skel);
      for (const auto& file : cond.at("rollouts")) {
        std::ifstream rin(fs::path(opt.pred) / file.get<std::string>());
        json rdoc;
        rin >> rdoc;
        const auto& frames = rdoc.at("frames");
        Eigen::MatrixXd track(frames.size(), 3 * skel.joint_count());
        for (std::size_t t = 0; t < frames.size(); ++t) {
          BodyParams p = BodyParams::rest();
          const auto& pj = frames.at(t).at("params");
          for (int a = 0; a < 3; ++a) p.t(a) = pj.at("t").at(a).get<double>();
          for (int a = 0; a < 6; ++a) p.r6(a) = pj.at("r6").at(a).get<double>();
          for (int a = 0; a < 32; ++a) p.theta(a) = pj.at("theta").at(a).get<double>();
          for (int a = 0; a < 24; ++a) p.theta_h(a) = pj.at("theta_h").at(a).get<double>();
          p.beta = Eigen::Map<const Eigen::VectorXd>(
              rdoc.at("beta").get<std::vector<double>>().data(), 10);
          const Eigen::MatrixXd joints = forward_kinematics(skel, p);
          for (int j = 0; j < skel.joint_count(); ++j) {
            track.block<1, 3>(t, 3 * j) = joints.row(j);
          }
        }
        bdf_acc += bone_deformation(track, bones);
        ++bdf_count;
      }
    }
  }
  if (conditions == 0) throw DomainError("evaluate: no conditions found");

  report.diversity /= conditions;
  report.ade /= conditions;
  report.fde /= conditions;
  report.mmade /= conditions;
  report.mmfde /= conditions;
  report.fse /= conditions;
  if (skate_count > 0) report.foot_skate_ratio = skate_acc / skate_count;
  for (const auto& [name, acc] : deform_acc) {
    report.deformation[name] = acc.first / acc.second;
  }
  if (bdf_count > 0) report.bdf = bdf_acc / bdf_count;

  write_text(fs::path(out_dir) / "report.json", report.to_json());
  write_text(fs::path(out_dir) / "report.csv",
             MetricsReport::csv_header() + "\n" + report.to_csv_row());

  json resolved = {{"command", "evaluate"}, {"pred", opt.pred},
                   {"data", opt.data},      {"out", out_dir},
                   {"eta", opt.eta},        {"squared_error", opt.squared_error},
                   {"conditions", conditions}};
  write_run_config(out_dir, resolved);
  std::cout << report.to_json() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "mopred: marker-based stochastic motion prediction with a latent "
      "frequency space, band-wise diverse sampling, and recursive projection "
      "onto a parametric body"};
  app.require_subcommand(1);

  GenDataOpts gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic marker dataset");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--count", gen.count, "raw sequences to generate (implementation default 200)");
  gen_cmd->add_option("--families", gen.families, "comma list of walk,wave,circle,swing");
  gen_cmd->add_option("--layout", gen.layout, "built-in marker layout: cmu41, ssm2_67, toy10, eval26 (method default cmu41)");
  gen_cmd->add_option("--layout-file", gen.layout_file, "layout JSON overriding --layout");
  gen_cmd->add_option("--skeleton-file", gen.skeleton_file, "skeleton JSON overriding the built-in rig");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--duration", gen.duration, "seconds per raw sequence at 120 Hz (method default 4 s windows)");
  gen_cmd->add_option("--test-fraction", gen.test_fraction, "fraction of raw sequences tagged test");
  gen_cmd->add_option("--speed-min", gen.speed_min, "m/s");
  gen_cmd->add_option("--speed-max", gen.speed_max, "m/s");
  gen_cmd->add_option("--amp-min", gen.amp_min, "rad");
  gen_cmd->add_option("--amp-max", gen.amp_max, "rad");

  TrainCvaeOpts tcv;
  auto* tcv_cmd = app.add_subcommand("train-cvae", "train the frequency-latent sequence model");
  tcv_cmd->add_option("--data", tcv.data, "dataset manifest")->required();
  tcv_cmd->add_option("--out", tcv.out, "output directory")->required();
  tcv_cmd->add_option("--epochs", tcv.epochs, "training epochs (implementation default 50)");
  tcv_cmd->add_option("--lr", tcv.lr, "Adam learning rate (implementation default 1e-3)");
  tcv_cmd->add_option("--batch", tcv.batch, "sequences per optimizer step (implementation default 8)");
  tcv_cmd->add_option("--d-hidden", tcv.d_hidden, "GRU width (implementation default 64)");
  tcv_cmd->add_option("--d-z", tcv.d_z, "per-band latent width (method default 16; 128 for the wide ablation)");
  tcv_cmd->add_option("--alpha", tcv.alpha, "velocity loss weight (method default 3)");
  tcv_cmd->add_option("--kld-weight", tcv.kld_weight, "regularizer weight (method defaults: 1 robust, 0.1 standard)");
  tcv_cmd->add_flag("--standard-kld", tcv.standard_kld, "plain KLD instead of the robust penalty");
  tcv_cmd->add_flag("--no-residual", tcv.no_residual, "disable output residual connections (baseline variant)");
  tcv_cmd->add_option("--clip-norm", tcv.clip_norm, "global gradient norm cap (implementation default 5)");
  tcv_cmd->add_option("--seed", tcv.seed, "training seed");

  TrainDlowOpts tdl;
  auto* tdl_cmd = app.add_subcommand("train-dlow", "train band-wise diverse sampling networks");
  tdl_cmd->add_option("--data", tdl.data, "dataset manifest")->required();
  tdl_cmd->add_option("--cvae", tdl.cvae, "trained model checkpoint")->required();
  tdl_cmd->add_option("--out", tdl.out, "output directory")->required();
  tdl_cmd->add_option("--K", tdl.K, "samples per condition (method default 50)");
  tdl_cmd->add_option("--L", tdl.L, "low bands with learned transforms (method default: lowest 20% of bands)");
  tdl_cmd->add_option("--d-q", tdl.d_q, "band network hidden width (implementation default 64)");
  tdl_cmd->add_option("--epochs", tdl.epochs, "training epochs (implementation default 10)");
  tdl_cmd->add_option("--lr", tdl.lr, "Adam learning rate");
  tdl_cmd->add_option("--lambda-r", tdl.lambda_rec, "best-of-K reconstruction weight (implementation default 2)");
  tdl_cmd->add_option("--lambda-kl", tdl.lambda_kl, "transform KL weight (implementation default 1)");
  tdl_cmd->add_option("--lambda-d", tdl.lambda_div, "diversity energy weight (implementation default 10)");
  tdl_cmd->add_option("--sigma-d", tdl.sigma_div, "diversity energy bandwidth (implementation default 10)");
  tdl_cmd->add_option("--clip-norm", tdl.clip_norm, "global gradient norm cap");
  tdl_cmd->add_option("--seed", tdl.seed, "training seed");
  tdl_cmd->add_option("--limit", tdl.limit, "cap on training conditions (0 = all)");

  PredictOpts prd;
  auto* prd_cmd = app.add_subcommand("predict", "sample diverse futures for test conditions");
  prd_cmd->add_option("--cvae", prd.cvae, "trained model checkpoint")->required();
  prd_cmd->add_option("--qnets", prd.qnets, "sampler checkpoint (omit for prior sampling)");
  prd_cmd->add_option("--data", prd.data, "dataset manifest")->required();
  prd_cmd->add_option("--split", prd.split, "dataset split to predict (default test)");
  prd_cmd->add_option("--out", prd.out, "output directory")->required();
  prd_cmd->add_option("--K", prd.K, "futures per condition (method default 50)");
  prd_cmd->add_option("--L", prd.L, "bands through learned transforms (default: sampler checkpoint value)");
  prd_cmd->add_option("--seed", prd.seed, "sampling seed");
  prd_cmd->add_option("--limit", prd.limit, "cap on conditions (0 = all)");
  prd_cmd->add_flag("--project", prd.project, "project every predicted frame onto the body before feeding it back");
  prd_cmd->add_option("--lambda1", prd.lambda1, "body pose regularizer (method default 0.0005)");
  prd_cmd->add_option("--lambda2", prd.lambda2, "hand pose regularizer (method default 0.01)");
  prd_cmd->add_option("--stage-caps", prd.stage_caps, "fit iteration caps for the three stages (implementation default 20 30 10)")->expected(3);
  prd_cmd->add_option("--skeleton-file", prd.skeleton_file, "skeleton JSON overriding the built-in rig");
  prd_cmd->add_option("--layout-file", prd.layout_file, "layout JSON when the dataset layout is not built in");

  EvaluateOpts evl;
  auto* evl_cmd = app.add_subcommand("evaluate", "score predictions against the dataset");
  evl_cmd->add_option("--pred", evl.pred, "prediction directory")->required();
  evl_cmd->add_option("--data", evl.data, "dataset manifest")->required();
  evl_cmd->add_option("--out", evl.out, "output directory")->required();
  evl_cmd->add_option("--eta", evl.eta, "past-similarity threshold in meters (implementation default 0.5)");
  evl_cmd->add_flag("--squared-ade", evl.squared_error, "squared-distance reading of the accuracy metrics");
  evl_cmd->add_option("--skeleton-file", evl.skeleton_file, "skeleton JSON overriding the built-in rig");
  evl_cmd->add_option("--layout-file", evl.layout_file, "layout JSON when the dataset layout is not built in");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen);
    if (tcv_cmd->parsed()) return cmd_train_cvae(tcv);
    if (tdl_cmd->parsed()) return cmd_train_dlow(tdl);
    if (prd_cmd->parsed()) return cmd_predict(prd);
    if (evl_cmd->parsed()) return cmd_evaluate(evl);
  } catch (const ConfigError& e) {
    std::cerr << json{{"error", e.what()}, {"type", "config"}}.dump() << "\n";
    return 1;
  } catch (const DomainError& e) {
    std::cerr << json{{"error", e.what()}, {"type", "domain"}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"type", "internal"}}.dump() << "\n";
    return 1;
  }
  return 0;
}
