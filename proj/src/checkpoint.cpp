// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Layout:
//   vidspec-checkpoint 1
//   config <key> <value>          (one line per ModelConfig field)
//   tensor <name> f32 <d0,d1,...> <byte offset>
//   end
//   <raw little-endian float32 data, offsets relative to the byte after "end\n">

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "vidspec/common.hpp"
#include "vidspec/model.hpp"

namespace vidspec {
namespace {

constexpr const char* kMagic = "vidspec-checkpoint";
constexpr int kVersion = 1;

static_assert(sizeof(float) == 4);

void write_floats(std::ostream& out, const std::vector<float>& data) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * 4));
  } else {
    for (float f : data) {
      auto bits = std::bit_cast<std::uint32_t>(f);
      char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                       static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
      out.write(bytes, 4);
    }
  }
}

void read_floats(std::istream& in, std::vector<float>& data) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * 4));
  } else {
    for (auto& f : data) {
      unsigned char b[4];
      in.read(reinterpret_cast<char*>(b), 4);
      f = std::bit_cast<float>(static_cast<std::uint32_t>(b[0] | (b[1] << 8) | (b[2] << 16) |
                                                          (static_cast<std::uint32_t>(b[3]) << 24)));
    }
  }
  if (!in) throw CheckpointError("checkpoint data truncated");
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(shape[i]);
  }
  return s;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  const auto& c = model.config();
  ModelWeights weights = model.weights();
  auto tensors = weights.tensors(c);

  std::ostringstream header;
  header << kMagic << ' ' << kVersion << '\n';
  header << "config n_layers " << c.n_layers << '\n';
  header << "config n_heads " << c.n_heads << '\n';
  header << "config d_model " << c.d_model << '\n';
  header << "config vocab_size " << c.vocab_size << '\n';
  header << "config video_dim " << c.video_dim << '\n';
  header << "config ffn_mult " << c.ffn_mult << '\n';
  header.precision(17);
  header << "config rope_theta " << c.rope_theta << '\n';
  header << "config max_positions " << c.max_positions << '\n';
  header << "config seed " << c.seed << '\n';
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    header << "tensor " << t.name << " f32 " << shape_string(t.shape) << ' ' << offset << '\n';
    offset += t.data->size() * 4;
  }
  header << "end\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path + " for writing");
  out << header.str();
  for (const auto& t : tensors) write_floats(out, *t.data);
  if (!out) throw CheckpointError("failed writing " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError("empty checkpoint");
  {
    std::istringstream ls(line);
    std::string magic;
    int version = 0;
    ls >> magic >> version;
    if (magic != kMagic || version != kVersion) throw CheckpointError("not a vidspec checkpoint: " + path);
  }
  std::map<std::string, std::string> cfg;
  struct Entry {
    std::string shape;
    std::size_t offset;
  };
  std::map<std::string, Entry> entries;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "config") {
      std::string key, value;
      ls >> key >> value;
      cfg[key] = value;
    } else if (kind == "tensor") {
      std::string name, dtype, shape;
      std::size_t offset = 0;
      ls >> name >> dtype >> shape >> offset;
      if (!ls || dtype != "f32") throw CheckpointError("bad tensor line: " + line);
      entries[name] = {shape, offset};
    } else {
      throw CheckpointError("unknown header line: " + line);
    }
  }
  if (!ended) throw CheckpointError("checkpoint header not terminated");

  auto get = [&](const char* key) -> const std::string& {
    auto it = cfg.find(key);
    if (it == cfg.end()) throw CheckpointError(std::string("checkpoint config lacks ") + key);
    return it->second;
  };
  ModelConfig c;
  try {
    c.n_layers = std::stoi(get("n_layers"));
    c.n_heads = std::stoi(get("n_heads"));
    c.d_model = std::stoi(get("d_model"));
    c.vocab_size = std::stoi(get("vocab_size"));
    c.video_dim = std::stoi(get("video_dim"));
    c.ffn_mult = std::stoi(get("ffn_mult"));
    c.rope_theta = std::stod(get("rope_theta"));
    c.max_positions = std::stoi(get("max_positions"));
    c.seed = std::stoull(get("seed"));
  } catch (const std::logic_error&) {
    throw CheckpointError("malformed checkpoint config value");
  }
  c.validate();

  ModelWeights w;
  w.layers.resize(c.n_layers);
  const std::streampos data_start = in.tellg();
  for (auto& t : w.tensors(c)) {
    auto it = entries.find(t.name);
    if (it == entries.end()) throw CheckpointError("checkpoint lacks tensor " + t.name);
    if (it->second.shape != shape_string(t.shape)) {
      throw CheckpointError("tensor " + t.name + " has shape " + it->second.shape + ", expected " +
                            shape_string(t.shape));
    }
    std::size_t n = 1;
    for (auto s : t.shape) n *= s;
    t.data->resize(n);
    in.seekg(data_start + static_cast<std::streamoff>(it->second.offset));
    read_floats(in, *t.data);
  }
  return Model(c, std::move(w));
}

}  // namespace vidspec
