#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "oneshot/heads/model.hpp"
#include "oneshot/molecule/features.hpp"

namespace oneshot::io {

inline constexpr int kCheckpointVersion = 1;

/// Text checkpoint. A header of "key value" lines describes the model, then
/// one "param <name> <rank> <dims...>" line per tensor followed by a line of
/// its values as hexadecimal floats (bit-exact round trip):
///
///   oneshot-checkpoint 1
///   feature_layout 1
///   variant reslstm
///   ...
///   parameters 68
///   param encoder.conv0.W0 2 26 64
///   0x1.8p-3 -0x1.2p-4 ...
inline void write_checkpoint(std::ostream& os, const heads::OneShotModel& model) {
  const heads::ModelConfig& c = model.config();
  os << "oneshot-checkpoint " << kCheckpointVersion << '\n';
  os << "feature_layout " << mol::kFeatureLayoutVersion << '\n';
  os << "variant " << heads::to_string(c.variant) << '\n';
  os << "refinement_depth " << c.refinement_depth << '\n';
  os << "attention_steps " << c.attention_steps << '\n';
  os << "tie_encoders " << (c.tie_encoders ? 1 : 0) << '\n';
  os << "input_width " << c.encoder.input_width << '\n';
  os << "conv_widths";
  for (std::size_t w : c.encoder.conv_widths) os << ' ' << w;
  os << '\n';
  os << "dense_width " << c.encoder.dense_width << '\n';
  os << "max_degree " << c.encoder.max_degree << '\n';
  os << "self_term_per_edge " << (c.encoder.self_term_per_edge ? 1 : 0) << '\n';
  const auto params = model.parameters();
  os << "parameters " << params.size() << '\n';
  char buf[64];
  for (const auto& [name, t] : params) {
    os << "param " << name << ' ' << t->rank();
    for (std::size_t d : t->shape()) os << ' ' << d;
    os << '\n';
    for (std::size_t i = 0; i < t->size(); ++i) {
      std::snprintf(buf, sizeof buf, "%a", (*t)[i]);
      os << (i ? " " : "") << buf;
    }
    os << '\n';
  }
}

inline void save_checkpoint(const std::string& path, const heads::OneShotModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path);
  write_checkpoint(os, model);
  if (!os) throw std::runtime_error("failed writing checkpoint " + path);
}

inline heads::OneShotModel read_checkpoint(std::istream& is) {
  auto fail = [](const std::string& why) -> std::runtime_error { return std::runtime_error("bad checkpoint: " + why); };
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "oneshot-checkpoint") throw fail("missing header");
  if (version != kCheckpointVersion) throw fail("unsupported version " + std::to_string(version));

  heads::ModelConfig c;
  std::size_t n_params = 0;
  std::string key;
  while (is >> key) {
    if (key == "parameters") {
      is >> n_params;
      break;
    }
    std::string line;
    std::getline(is, line);
    std::istringstream ls(line);
    if (key == "feature_layout") {
      int layout = 0;
      ls >> layout;
      if (layout != mol::kFeatureLayoutVersion)
        throw fail("feature layout " + std::to_string(layout) + " differs from this build's " +
                   std::to_string(mol::kFeatureLayoutVersion));
    } else if (key == "variant") {
      std::string v;
      ls >> v;
      c.variant = heads::parse_variant(v);
    } else if (key == "refinement_depth") {
      ls >> c.refinement_depth;
    } else if (key == "attention_steps") {
      ls >> c.attention_steps;
    } else if (key == "tie_encoders") {
      int b = 1;
      ls >> b;
      c.tie_encoders = b != 0;
    } else if (key == "input_width") {
      ls >> c.encoder.input_width;
    } else if (key == "conv_widths") {
      c.encoder.conv_widths.clear();
      for (std::size_t w; ls >> w;) c.encoder.conv_widths.push_back(w);
    } else if (key == "dense_width") {
      ls >> c.encoder.dense_width;
    } else if (key == "max_degree") {
      ls >> c.encoder.max_degree;
    } else if (key == "self_term_per_edge") {
      int b = 1;
      ls >> b;
      c.encoder.self_term_per_edge = b != 0;
    } else {
      throw fail("unknown key '" + key + "'");
    }
  }

  Rng dummy(0);
  heads::OneShotModel model(c, dummy);
  std::map<std::string, ad::Tensor*> by_name;
  for (auto& [name, t] : model.parameters()) by_name.emplace(name, t);
  if (n_params != by_name.size())
    throw fail("expected " + std::to_string(by_name.size()) + " parameters, file lists " + std::to_string(n_params));
  for (std::size_t i = 0; i < n_params; ++i) {
    std::string tag, name;
    std::size_t rank = 0;
    if (!(is >> tag >> name >> rank) || tag != "param") throw fail("malformed parameter line");
    ad::Shape shape(rank);
    for (auto& d : shape) is >> d;
    auto it = by_name.find(name);
    if (it == by_name.end()) throw fail("unexpected parameter " + name);
    ad::Tensor& t = *it->second;
    if (t.shape() != shape) throw fail("shape of " + name + " is " + ad::to_string(shape) + ", model expects " + ad::to_string(t.shape()));
    for (std::size_t k = 0; k < t.size(); ++k) {
      std::string tok;
      if (!(is >> tok)) throw fail("truncated values for " + name);
      t[k] = std::strtod(tok.c_str(), nullptr);
    }
  }
  return model;
}

inline heads::OneShotModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path);
  return read_checkpoint(is);
}

}  // namespace oneshot::io
