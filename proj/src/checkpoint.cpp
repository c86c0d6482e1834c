// SPDX-FileCopyrightText: © 2026 ndif contributors
// SPDX-License-Identifier: Apache-2.0

#include "ndif/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "ndif/errors.hpp"

namespace ndif {

namespace {

using json = nlohmann::ordered_json;

constexpr std::array<char, 5> kMagic{'N', 'D', 'I', 'F', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.put(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
         std::uint32_t{p[3]} << 24;
}

struct Entry {
  std::string name;
  Shape shape;
  std::span<const double> values;
};

// Appends entries to the payload and returns their manifest.
json pack(std::vector<char>& payload, const std::vector<Entry>& entries) {
  json manifest = json::array();
  for (const auto& e : entries) {
    manifest.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", payload.size()}});
    for (double d : e.values) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(d));
      for (int b = 0; b < 4; ++b) payload.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
  }
  return manifest;
}

std::size_t count_of(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

// Reads a manifest against the payload; offsets must tile it in order.
class Unpacker {
 public:
  Unpacker(std::span<const unsigned char> payload, std::string source)
      : payload_(payload), source_(std::move(source)) {}

  std::vector<std::pair<std::string, Tensor>> read(const json& manifest) {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& e : manifest) {
      const auto name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const std::size_t n = count_of(shape);
      if (offset != cursor_ || n * 4 > payload_.size() - cursor_) {
        fail("tensor " + name + " at offset " + std::to_string(offset) +
             " does not match the payload layout");
      }
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) {
        v[i] = std::bit_cast<float>(get_u32(payload_.data() + cursor_ + 4 * i));
      }
      cursor_ += 4 * n;
      out.emplace_back(name, Tensor::from(shape, std::move(v)));
    }
    return out;
  }

  void finish() const {
    if (cursor_ != payload_.size()) fail("trailing bytes after the last tensor");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(source_ + ": " + what);
  }

 private:
  std::span<const unsigned char> payload_;
  std::string source_;
  std::size_t cursor_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::vector<Entry> params;
  for (const auto& name : c.params.names()) {
    const auto& t = c.params.at(name);
    params.push_back({name, t.shape(), t.data()});
  }
  std::vector<char> payload;
  json h;
  h["format"] = "ndif-checkpoint";
  h["unet"] = {{"base_channels", c.unet.base_channels},
               {"channel_mults", c.unet.channel_mults},
               {"res_blocks_per_level", c.unet.res_blocks_per_level},
               {"groups", c.unet.groups},
               {"time_embed_dim", c.unet.time_embed_dim},
               {"input_channels", c.unet.input_channels},
               {"grid_length", c.unet.grid_length}};
  h["schedule"] = {{"kind", "linear"},
                   {"steps", c.schedule.steps},
                   {"beta_start", c.schedule.beta_start},
                   {"beta_end", c.schedule.beta_end}};
  h["normalizer"] = {{"transform", "log10-affine"},
                     {"lo", c.normalizer.lo()},
                     {"hi", c.normalizer.hi()},
                     {"floor_m", Normalizer::kFloorMetres}};
  h["training"] = {{"seed", c.seed}, {"epochs_done", c.epochs_done}};
  h["tensors"] = pack(payload, params);
  if (c.optimizer) {
    const auto& o = *c.optimizer;
    if (o.m.size() != params.size() || o.v.size() != params.size()) {
      throw ShapeError("optimizer state does not match the parameter list");
    }
    std::vector<Entry> moments;
    for (std::size_t i = 0; i < params.size(); ++i) {
      moments.push_back({params[i].name + ".m", params[i].shape, o.m[i]});
      moments.push_back({params[i].name + ".v", params[i].shape, o.v[i]});
    }
    h["optimizer"] = {{"kind", "adam"}, {"step_count", o.step_count},
                      {"tensors", pack(payload, moments)}};
  } else {
    h["optimizer"] = nullptr;
  }

  const std::string header = h.dump(1);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string src = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + src);
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>()};
  constexpr std::size_t kPrefix = kMagic.size() + 8;
  if (bytes.size() < kPrefix || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw DataError(src + ": not an ndif checkpoint (bad magic)");
  }
  const std::uint32_t version = get_u32(bytes.data() + 5);
  if (version != kCheckpointVersion) {
    throw DataError(src + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t header_len = get_u32(bytes.data() + 9);
  if (header_len > bytes.size() - kPrefix) throw DataError(src + ": truncated header");
  const auto* header_begin = reinterpret_cast<const char*>(bytes.data() + kPrefix);
  Unpacker unpack({bytes.data() + kPrefix + header_len, bytes.size() - kPrefix - header_len},
                  src);

  try {
    const auto h = json::parse(header_begin, header_begin + header_len);
    if (h.at("format") != "ndif-checkpoint") unpack.fail("unexpected format tag");
    Checkpoint c;
    const auto& u = h.at("unet");
    c.unet.base_channels = u.at("base_channels").get<std::size_t>();
    c.unet.channel_mults = u.at("channel_mults").get<std::vector<std::size_t>>();
    c.unet.res_blocks_per_level = u.at("res_blocks_per_level").get<std::size_t>();
    c.unet.groups = u.at("groups").get<std::size_t>();
    c.unet.time_embed_dim = u.at("time_embed_dim").get<std::size_t>();
    c.unet.input_channels = u.at("input_channels").get<std::size_t>();
    c.unet.grid_length = u.at("grid_length").get<std::size_t>();
    c.unet.validate();
    const auto& s = h.at("schedule");
    if (s.at("kind") != "linear") unpack.fail("unknown schedule kind");
    c.schedule = {s.at("steps").get<int>(), s.at("beta_start").get<double>(),
                  s.at("beta_end").get<double>()};
    c.normalizer = Normalizer(h.at("normalizer").at("lo").get<double>(),
                              h.at("normalizer").at("hi").get<double>());
    c.seed = h.at("training").at("seed").get<std::uint64_t>();
    c.epochs_done = h.at("training").at("epochs_done").get<std::int64_t>();

    for (auto& [name, t] : unpack.read(h.at("tensors"))) c.params.add(name, std::move(t));
    const auto& opt = h.at("optimizer");
    if (!opt.is_null()) {
      OptimizerState o;
      o.step_count = opt.at("step_count").get<std::int64_t>();
      const auto moments = unpack.read(opt.at("tensors"));
      if (moments.size() != 2 * c.params.size()) unpack.fail("optimizer state is incomplete");
      for (std::size_t i = 0; i < moments.size(); i += 2) {
        const auto d0 = moments[i].second.data();
        const auto d1 = moments[i + 1].second.data();
        o.m.emplace_back(d0.begin(), d0.end());
        o.v.emplace_back(d1.begin(), d1.end());
      }
      c.optimizer = std::move(o);
    }
    unpack.finish();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(src + ": malformed checkpoint header: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(src + ": " + e.what());
  }
}

}  // namespace ndif
