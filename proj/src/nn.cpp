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

#include "mopred/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace mopred::nn {

using nlohmann::json;

Eigen::MatrixXd& ParamStore::add(const std::string& name, int rows, int cols,
                                 int fan_in) {
  if (params_.count(name) > 0) {
    throw ConfigError("ParamStore: duplicate parameter '" + name + "'");
  }
  if (fan_in < 0) fan_in = cols;
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  Entry e;
  e.value.resize(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      e.value(r, c) = rng_.uniform(-bound, bound);
    }
  }
  e.grad = Eigen::MatrixXd::Zero(rows, cols);
  return params_.emplace(name, std::move(e)).first->second.value;
}

Eigen::MatrixXd& ParamStore::add_raw(const std::string& name,
                                     Eigen::MatrixXd value) {
  if (params_.count(name) > 0) {
    throw ConfigError("ParamStore: duplicate parameter '" + name + "'");
  }
  Entry e;
  e.grad = Eigen::MatrixXd::Zero(value.rows(), value.cols());
  e.value = std::move(value);
  return params_.emplace(name, std::move(e)).first->second.value;
}

Eigen::MatrixXd& ParamStore::value(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("ParamStore: unknown parameter '" + name + "'");
  return it->second.value;
}

const Eigen::MatrixXd& ParamStore::value(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("ParamStore: unknown parameter '" + name + "'");
  return it->second.value;
}

Eigen::MatrixXd& ParamStore::grad(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("ParamStore: unknown parameter '" + name + "'");
  return it->second.grad;
}

void ParamStore::zero_grad() {
  for (auto& [name, e] : params_) e.grad.setZero();
}

void ParamStore::set_all_zero() {
  for (auto& [name, e] : params_) e.value.setZero();
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, e] : params_) out.push_back(name);
  return out;
}

void adam_update(ParamStore& store, AdamState& state, double lr, double beta1,
                 double beta2, double eps) {
  store.step += 1;
  const double t = static_cast<double>(store.step);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (const auto& name : store.names()) {
    const Eigen::MatrixXd& g = store.grad(name);
    Eigen::MatrixXd& value = store.value(name);
    Eigen::MatrixXd& m = state.m[name];
    Eigen::MatrixXd& v = state.v[name];
    if (m.size() == 0) m = Eigen::MatrixXd::Zero(g.rows(), g.cols());
    if (v.size() == 0) v = Eigen::MatrixXd::Zero(g.rows(), g.cols());
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
    value.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  }
}

double clip_global_norm(ParamStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& name : store.names()) sq += store.grad(name).squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (const auto& name : store.names()) store.grad(name) *= s;
  }
  return norm;
}

std::string checkpoint_to_json(const ParamStore& store,
                               const std::string& config_json) {
  json doc;
  doc["format"] = "mopred-checkpoint-v1";
  doc["seed"] = store.seed();
  doc["step"] = store.step;
  json params = json::object();
  for (const auto& name : store.names()) {
    const Eigen::MatrixXd& m = store.value(name);
    json p;
    p["rows"] = m.rows();
    p["cols"] = m.cols();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    }
    p["data"] = std::move(data);
    params[name] = std::move(p);
  }
  doc["params"] = std::move(params);
  doc["config"] = config_json.empty() ? json::object() : json::parse(config_json);
  return doc.dump();
}

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& config_json) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path);
  out << checkpoint_to_json(store, config_json);
  if (!out) throw ConfigError("short write on checkpoint: " + path);
}

std::string load_checkpoint(const std::string& path, ParamStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("malformed checkpoint " + path + ": " + e.what());
  }
  if (doc.value("format", "") != "mopred-checkpoint-v1") {
    throw ConfigError("unrecognized checkpoint format in " + path);
  }
  store.step = doc.value("step", 0L);
  for (const auto& [name, p] : doc.at("params").items()) {
    const int rows = p.at("rows").get<int>();
    const int cols = p.at("cols").get<int>();
    const auto data = p.at("data").get<std::vector<double>>();
    if (static_cast<int>(data.size()) != rows * cols) {
      throw ConfigError("checkpoint parameter '" + name + "' has inconsistent size");
    }
    Eigen::MatrixXd m(rows, cols);
    std::size_t i = 0;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) m(r, c) = data[i++];
    }
    if (store.contains(name)) {
      Eigen::MatrixXd& dst = store.value(name);
      if (dst.rows() != rows || dst.cols() != cols) {
        throw ConfigError("checkpoint parameter '" + name + "' shape disagrees with model");
      }
      dst = std::move(m);
    } else {
      store.add_raw(name, std::move(m));
    }
  }
  return doc.at("config").dump();
}

std::uint64_t param_hash(const ParamStore& store) {
  std::string bytes;
  for (const auto& name : store.names()) {
    bytes += name;
    const Eigen::MatrixXd& m = store.value(name);
    bytes += std::to_string(m.rows()) + "x" + std::to_string(m.cols());
    const char* raw = reinterpret_cast<const char*>(m.data());
    bytes.append(raw, raw + sizeof(double) * m.size());
  }
  return fnv1a(bytes);
}

AffineParams AffineParams::create(ParamStore& store, const std::string& prefix,
                                  int in, int out) {
  AffineParams p;
  p.W = prefix + ".W";
  p.b = prefix + ".b";
  p.in = in;
  p.out = out;
  store.add(p.W, out, in);
  store.add(p.b, out, 1, in);
  return p;
}

GruParams GruParams::create(ParamStore& store, const std::string& prefix,
                            int in, int hidden) {
  GruParams p;
  p.Wg = prefix + ".Wg";
  p.Ug = prefix + ".Ug";
  p.bg = prefix + ".bg";
  p.Wc = prefix + ".Wc";
  p.Uc = prefix + ".Uc";
  p.bc = prefix + ".bc";
  p.in = in;
  p.hidden = hidden;
  store.add(p.Wg, 2 * hidden, in);
  store.add(p.Ug, 2 * hidden, hidden, hidden);
  store.add(p.bg, 2 * hidden, 1, in);
  store.add(p.Wc, hidden, in);
  store.add(p.Uc, hidden, hidden, hidden);
  store.add(p.bc, hidden, 1, in);
  return p;
}

namespace {
void verify_shape(const ParamStore& store, const std::string& name, int rows,
                  int cols) {
  const Eigen::MatrixXd& m = store.value(name);
  if (m.rows() != rows || m.cols() != cols) {
    throw ConfigError("parameter '" + name + "' has shape " +
                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                      ", expected " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
}
}  // namespace

AffineParams AffineParams::attach(ParamStore& store, const std::string& prefix,
                                  int in, int out) {
  if (!store.contains(prefix + ".W")) return create(store, prefix, in, out);
  AffineParams p{prefix + ".W", prefix + ".b", in, out};
  verify_shape(store, p.W, out, in);
  verify_shape(store, p.b, out, 1);
  return p;
}

GruParams GruParams::attach(ParamStore& store, const std::string& prefix,
                            int in, int hidden) {
  if (!store.contains(prefix + ".Wg")) return create(store, prefix, in, hidden);
  GruParams p;
  p.Wg = prefix + ".Wg";
  p.Ug = prefix + ".Ug";
  p.bg = prefix + ".bg";
  p.Wc = prefix + ".Wc";
  p.Uc = prefix + ".Uc";
  p.bc = prefix + ".bc";
  p.in = in;
  p.hidden = hidden;
  verify_shape(store, p.Wg, 2 * hidden, in);
  verify_shape(store, p.Ug, 2 * hidden, hidden);
  verify_shape(store, p.bg, 2 * hidden, 1);
  verify_shape(store, p.Wc, hidden, in);
  verify_shape(store, p.Uc, hidden, hidden);
  verify_shape(store, p.bc, hidden, 1);
  return p;
}

ad::Var affine(ad::Tape& t, ad::Var W, ad::Var b, ad::Var x) {
  return t.add(t.matmul(W, x), b);
}

}  // namespace mopred::nn
