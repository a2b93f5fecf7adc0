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

#include "mopred/motion.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mopred {

using nlohmann::json;

int MarkerLayout::index_of(const std::string& marker_name) const {
  for (std::size_t i = 0; i < markers.size(); ++i) {
    if (markers[i].name == marker_name) return static_cast<int>(i);
  }
  throw ConfigError("layout '" + name + "' has no marker '" + marker_name + "'");
}

bool MarkerLayout::contains(const std::string& marker_name) const {
  for (const auto& m : markers) {
    if (m.name == marker_name) return true;
  }
  return false;
}

std::string layout_to_json(const MarkerLayout& layout) {
  json doc;
  doc["name"] = layout.name;
  json ms = json::array();
  for (const auto& m : layout.markers) {
    ms.push_back({{"name", m.name},
                  {"parent", m.parent},
                  {"offset", {m.offset.x(), m.offset.y(), m.offset.z()}}});
  }
  doc["markers"] = std::move(ms);
  return doc.dump(2);
}

MarkerLayout layout_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed layout JSON: ") + e.what());
  }
  MarkerLayout layout;
  layout.name = doc.at("name").get<std::string>();
  std::set<std::string> seen;
  for (const auto& m : doc.at("markers")) {
    MarkerDef def;
    def.name = m.at("name").get<std::string>();
    def.parent = m.at("parent").get<std::string>();
    const auto off = m.at("offset");
    def.offset = Eigen::Vector3d(off.at(0).get<double>(), off.at(1).get<double>(),
                                 off.at(2).get<double>());
    if (!seen.insert(def.name).second) {
      throw ConfigError("layout '" + layout.name + "' repeats marker '" + def.name + "'");
    }
    layout.markers.push_back(std::move(def));
  }
  return layout;
}

MarkerLayout load_layout(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open layout: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return layout_from_json(ss.str());
}

void save_layout(const std::string& path, const MarkerLayout& layout) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open layout for writing: " + path);
  out << layout_to_json(layout) << "\n";
}

void MotionSequence::validate() const {
  if (frames.rows() < 1) throw DomainError("motion sequence has no frames");
  if (!frames.allFinite()) throw DomainError("motion sequence has non-finite coordinates");
}

namespace {
constexpr std::array<char, 4> kMagic = {'M', 'S', 'E', 'Q'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v, const std::string& path) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) {
    throw ConfigError("truncated sequence file " + path + " at offset " +
                      std::to_string(static_cast<long>(in.tellg())));
  }
}
}  // namespace

void save_sequence(const std::string& path, const MotionSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open sequence for writing: " + path);
  out.write(kMagic.data(), kMagic.size());
  write_pod(out, kVersion);
  const std::uint32_t name_len = static_cast<std::uint32_t>(seq.layout.size());
  write_pod(out, name_len);
  out.write(seq.layout.data(), name_len);
  write_pod(out, seq.frame_rate);
  const std::uint64_t frames = static_cast<std::uint64_t>(seq.frames.rows());
  const std::uint64_t width = static_cast<std::uint64_t>(seq.frames.cols());
  write_pod(out, frames);
  write_pod(out, width);
  for (int r = 0; r < seq.frames.rows(); ++r) {
    for (int c = 0; c < seq.frames.cols(); ++c) {
      write_pod(out, seq.frames(r, c));
    }
  }
  if (!out) throw ConfigError("short write on sequence: " + path);
}

MotionSequence load_sequence(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open sequence: " + path);
  std::array<char, 4> magic;
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) {
    throw ConfigError("not a sequence file (bad magic at offset 0): " + path);
  }
  std::uint32_t version = 0;
  read_pod(in, version, path);
  if (version != kVersion) {
    throw ConfigError("unsupported sequence version " + std::to_string(version) +
                      " in " + path);
  }
  std::uint32_t name_len = 0;
  read_pod(in, name_len, path);
  std::string layout(name_len, '\0');
  in.read(layout.data(), name_len);
  if (!in) throw ConfigError("truncated layout name in " + path);
  MotionSequence seq;
  seq.layout = std::move(layout);
  read_pod(in, seq.frame_rate, path);
  std::uint64_t frames = 0, width = 0;
  read_pod(in, frames, path);
  read_pod(in, width, path);
  seq.frames.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(width));
  for (std::uint64_t r = 0; r < frames; ++r) {
    for (std::uint64_t c = 0; c < width; ++c) {
      double v = 0.0;
      read_pod(in, v, path);
      seq.frames(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  if (!seq.frames.allFinite()) {
    throw ConfigError("sequence file carries non-finite coordinates: " + path);
  }
  return seq;
}

void save_sequence_csv(const std::string& path, const MotionSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open sequence for writing: " + path);
  out << "# mseq-csv layout=" << seq.layout << " frame_rate=" << seq.frame_rate
      << " frames=" << seq.frames.rows() << " width=" << seq.frames.cols() << "\n";
  out.precision(17);
  for (int r = 0; r < seq.frames.rows(); ++r) {
    for (int c = 0; c < seq.frames.cols(); ++c) {
      if (c > 0) out << ',';
      out << seq.frames(r, c);
    }
    out << '\n';
  }
}

MotionSequence load_sequence_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open sequence: " + path);
  std::string header;
  std::getline(in, header);
  MotionSequence seq;
  long frames = 0, width = 0;
  {
    std::istringstream hs(header);
    std::string tok;
    hs >> tok;  // '#'
    hs >> tok;  // 'mseq-csv'
    if (tok != "mseq-csv") throw ConfigError("not a mseq CSV header in " + path);
    while (hs >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq);
      const std::string val = tok.substr(eq + 1);
      if (key == "layout") seq.layout = val;
      else if (key == "frame_rate") seq.frame_rate = std::stod(val);
      else if (key == "frames") frames = std::stol(val);
      else if (key == "width") width = std::stol(val);
    }
  }
  if (frames <= 0 || width <= 0) throw ConfigError("bad mseq CSV header in " + path);
  seq.frames.resize(frames, width);
  std::string line;
  for (long r = 0; r < frames; ++r) {
    if (!std::getline(in, line)) {
      throw ConfigError("truncated mseq CSV (row " + std::to_string(r) + ") in " + path);
    }
    std::istringstream ls(line);
    std::string cell;
    for (long c = 0; c < width; ++c) {
      if (!std::getline(ls, cell, ',')) {
        throw ConfigError("short row " + std::to_string(r) + " in " + path);
      }
      seq.frames(r, c) = std::stod(cell);
    }
  }
  return seq;
}

}  // namespace mopred
