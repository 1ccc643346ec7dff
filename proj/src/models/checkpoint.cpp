#include "amx/models/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "amx/error.hpp"

namespace amx {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

void write_file(const fs::path& path, const json& meta, const std::vector<const ParamSet*>& sets) {
  const std::string meta_text = meta.dump();
  std::string out = "AMXC";
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
  out += meta_text;
  for (const auto* set : sets) {
    for (const auto& t : *set) {
      for (float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("checkpoint: cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("checkpoint: write failed for " + path.string());
}

json manifest(const std::vector<const ParamSet*>& sets) {
  json tensors = json::array();
  for (const auto* set : sets) {
    for (const auto& t : *set) tensors.push_back(json::array({t.name, t.shape}));
  }
  return tensors;
}

struct RawCheckpoint {
  json meta;
  ParamSet tensors;
};

RawCheckpoint read_raw(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("checkpoint: cannot open " + path.string());
  const std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (in.size() < 4 || in.compare(0, 4, "AMXC") != 0) {
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  }
  if (in.size() < 12) throw CorruptionError(path.string() + ": truncated header");
  const auto version = get_u32(in, 4);
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": checkpoint version " + std::to_string(version) +
                      ", reader supports version " + std::to_string(kCheckpointVersion));
  }
  const auto meta_len = get_u32(in, 8);
  if (in.size() < 12 + std::size_t(meta_len)) throw CorruptionError(path.string() + ": truncated metadata");
  RawCheckpoint raw;
  try {
    raw.meta = json::parse(in.substr(12, meta_len));
  } catch (const json::exception& e) {
    throw CorruptionError(path.string() + ": metadata is not valid JSON: " + e.what());
  }
  if (!raw.meta.contains("tensors") || !raw.meta["tensors"].is_array()) {
    throw CorruptionError(path.string() + ": metadata lacks a tensor manifest");
  }
  std::size_t declared = 0;
  for (const auto& entry : raw.meta["tensors"]) {
    if (!entry.is_array() || entry.size() != 2) throw CorruptionError(path.string() + ": bad manifest entry");
    NamedTensor t;
    t.name = entry[0].get<std::string>();
    t.shape = entry[1].get<Shape>();
    declared += shape_size(t.shape);
    raw.tensors.push_back(std::move(t));
  }
  const std::size_t payload = in.size() - 12 - meta_len;
  if (payload != declared * 4) {
    throw CorruptionError(path.string() + ": header declares " +
                          std::to_string(raw.tensors.size()) + " tensors (" +
                          std::to_string(declared) + " floats) but payload holds " +
                          std::to_string(payload / 4) + " floats");
  }
  std::size_t pos = 12 + meta_len;
  for (auto& t : raw.tensors) {
    t.values.resize(shape_size(t.shape));
    for (auto& v : t.values) {
      v = std::bit_cast<float>(get_u32(in, pos));
      pos += 4;
    }
  }
  return raw;
}

ParamSet take_matching(ParamSet& tensors, std::size_t& cursor,
                       const std::vector<std::pair<std::string, Shape>>& layout,
                       const fs::path& path) {
  ParamSet out;
  for (const auto& [name, shape] : layout) {
    if (cursor >= tensors.size()) {
      throw CorruptionError(path.string() + ": manifest has " + std::to_string(tensors.size()) +
                            " tensors, architecture needs more (missing " + name + ")");
    }
    auto& t = tensors[cursor++];
    if (t.name != name || t.shape != shape) {
      throw CorruptionError(path.string() + ": tensor " + t.name + shape_to_string(t.shape) +
                            " does not match expected " + name + shape_to_string(shape));
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

void save_checkpoint(const ClassifierModel& model, const fs::path& path) {
  json meta;
  meta["arch"] = model.arch;
  meta["K"] = model.num_classes;
  meta["latent_dim"] = nullptr;
  meta["seed"] = model.seed;
  meta["tensors"] = manifest({&model.params});
  write_file(path, meta, {&model.params});
}

void save_checkpoint(const AutoencoderModel& model, const fs::path& path) {
  json meta;
  meta["arch"] = model.arch;
  meta["K"] = nullptr;
  meta["latent_dim"] = model.latent_dim;
  meta["seed"] = model.seed;
  meta["tensors"] = manifest({&model.encoder, &model.decoder});
  write_file(path, meta, {&model.encoder, &model.decoder});
}

AnyModel load_checkpoint(const fs::path& path) {
  auto raw = read_raw(path);
  const auto arch = raw.meta.value("arch", std::string());
  const auto seed = raw.meta.value("seed", std::uint64_t{0});
  std::size_t cursor = 0;
  AnyModel result;
  if (arch == kClassifierArch) {
    ClassifierModel m;
    m.num_classes = raw.meta.at("K").get<std::size_t>();
    m.seed = seed;
    m.params = take_matching(raw.tensors, cursor, classifier_layout(m.num_classes), path);
    result = std::move(m);
  } else if (arch == kAutoencoderArch) {
    AutoencoderModel m;
    m.latent_dim = raw.meta.at("latent_dim").get<std::size_t>();
    m.seed = seed;
    m.encoder = take_matching(raw.tensors, cursor, encoder_layout(m.latent_dim), path);
    m.decoder = take_matching(raw.tensors, cursor, decoder_layout(m.latent_dim), path);
    result = std::move(m);
  } else {
    throw FormatError(path.string() + ": unknown architecture '" + arch + "'");
  }
  if (cursor != raw.tensors.size()) {
    throw CorruptionError(path.string() + ": manifest has " + std::to_string(raw.tensors.size()) +
                          " tensors, architecture uses " + std::to_string(cursor));
  }
  return result;
}

ClassifierModel load_classifier(const fs::path& path) {
  auto any = load_checkpoint(path);
  if (auto* m = std::get_if<ClassifierModel>(&any)) return std::move(*m);
  throw FormatError(path.string() + ": checkpoint holds an autoencoder, expected a classifier");
}

AutoencoderModel load_autoencoder(const fs::path& path) {
  auto any = load_checkpoint(path);
  if (auto* m = std::get_if<AutoencoderModel>(&any)) return std::move(*m);
  throw FormatError(path.string() + ": checkpoint holds a classifier, expected an autoencoder");
}

}  // namespace amx
