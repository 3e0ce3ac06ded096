#include "inpaint/cli/checkpoint.hpp"

#include <cstring>

#include "inpaint/cli/zip.hpp"
#include "inpaint/error.hpp"

namespace inpaint::cli {

using nlohmann::json;

namespace {

std::int64_t count_of(const std::vector<std::int64_t> &shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::vector<std::uint8_t> to_le_bytes(const std::vector<float> &data) {
  std::vector<std::uint8_t> out(data.size() * 4);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, &data[i], 4);
    for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<std::uint8_t>(u >> (8 * b));
  }
  return out;
}

std::vector<float> from_le_bytes(const std::vector<std::uint8_t> &bytes) {
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    std::memcpy(&out[i], &u, 4);
  }
  return out;
}

std::vector<float> to_floats(std::span<const double> v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

const CheckpointArray &require_array(const Checkpoint &ckpt, const std::string &name,
                                     std::int64_t count) {
  const CheckpointArray *a = ckpt.find(name);
  if (a == nullptr) {
    fail(ErrorCode::ShapeMismatch, "checkpoint has no entry '" + name + "'");
  }
  if (static_cast<std::int64_t>(a->data.size()) != count) {
    fail(ErrorCode::ShapeMismatch, "checkpoint entry '" + name + "' has " +
                                       std::to_string(a->data.size()) + " values, expected " +
                                       std::to_string(count));
  }
  return *a;
}

} // namespace

const CheckpointArray *Checkpoint::find(const std::string &name) const {
  for (const auto &a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

void save_checkpoint(const std::string &path, const Checkpoint &ckpt) {
  json manifest;
  manifest["format_version"] = ckpt.format_version;
  manifest["model"] = ckpt.model;
  manifest["config_hash"] = ckpt.config_hash;
  manifest["step"] = ckpt.step;
  manifest["extra"] = ckpt.extra;
  manifest["entries"] = json::array();
  std::vector<ZipEntry> entries;
  entries.push_back({"manifest.json", {}});
  for (std::size_t i = 0; i < ckpt.arrays.size(); ++i) {
    const auto &a = ckpt.arrays[i];
    if (count_of(a.shape) != static_cast<std::int64_t>(a.data.size())) {
      fail(ErrorCode::ShapeMismatch, "array '" + a.name + "' does not match its shape");
    }
    const std::string file = "arrays/" + std::to_string(i) + ".f32";
    manifest["entries"].push_back(
        {{"name", a.name}, {"shape", a.shape}, {"file", file}, {"bytes", a.data.size() * 4}});
    entries.push_back({file, to_le_bytes(a.data)});
  }
  const std::string text = manifest.dump(2) + "\n";
  entries[0].data.assign(text.begin(), text.end());
  write_zip(path, entries);
}

Checkpoint load_checkpoint(const std::string &path) {
  const auto entries = read_zip(path);
  const auto find_entry = [&](const std::string &name) -> const ZipEntry * {
    for (const auto &e : entries) {
      if (e.name == name) return &e;
    }
    return nullptr;
  };
  const ZipEntry *m = find_entry("manifest.json");
  if (m == nullptr) {
    fail(ErrorCode::BadMagic, path + ": checkpoint has no manifest");
  }
  json manifest;
  try {
    manifest = json::parse(m->data.begin(), m->data.end());
  } catch (const json::exception &e) {
    fail(ErrorCode::BadMagic, path + ": unreadable manifest: " + e.what());
  }
  Checkpoint ckpt;
  try {
    ckpt.format_version = manifest.at("format_version").get<int>();
    if (ckpt.format_version != kCheckpointFormatVersion) {
      fail(ErrorCode::VersionMismatch, path + ": checkpoint format " +
                                           std::to_string(ckpt.format_version) + ", expected " +
                                           std::to_string(kCheckpointFormatVersion));
    }
    ckpt.model = manifest.at("model").get<std::string>();
    ckpt.config_hash = manifest.at("config_hash").get<std::string>();
    ckpt.step = manifest.at("step").get<std::int64_t>();
    if (manifest.contains("extra")) ckpt.extra = manifest["extra"];
    for (const auto &e : manifest.at("entries")) {
      CheckpointArray a;
      a.name = e.at("name").get<std::string>();
      a.shape = e.at("shape").get<std::vector<std::int64_t>>();
      const ZipEntry *blob = find_entry(e.at("file").get<std::string>());
      if (blob == nullptr) {
        fail(ErrorCode::TruncatedFile, path + ": missing array for " + a.name);
      }
      const std::int64_t expected = count_of(a.shape) * 4;
      if (static_cast<std::int64_t>(blob->data.size()) != expected ||
          e.at("bytes").get<std::int64_t>() != expected) {
        fail(ErrorCode::ShapeMismatch, path + ": entry " + a.name + " holds " +
                                           std::to_string(blob->data.size()) +
                                           " bytes but its shape needs " + std::to_string(expected));
      }
      a.data = from_le_bytes(blob->data);
      ckpt.arrays.push_back(std::move(a));
    }
  } catch (const json::exception &e) {
    fail(ErrorCode::BadMagic, path + ": malformed manifest: " + e.what());
  }
  return ckpt;
}

void add_module(Checkpoint &ckpt, const std::string &prefix, const nn::Module &module) {
  for (const auto &p : module.parameters()) {
    ckpt.arrays.push_back({prefix + "." + p.name,
                           std::vector<std::int64_t>(p.tensor.shape().begin(), p.tensor.shape().end()),
                           to_floats(p.tensor.values())});
  }
}

void restore_module(const Checkpoint &ckpt, const std::string &prefix, nn::Module &module) {
  for (const auto &p : module.parameters()) {
    const std::string name = prefix + "." + p.name;
    const auto &a = require_array(ckpt, name, p.tensor.numel());
    if (a.shape != std::vector<std::int64_t>(p.tensor.shape().begin(), p.tensor.shape().end())) {
      fail(ErrorCode::ShapeMismatch, "checkpoint entry '" + name + "' has the wrong shape");
    }
    nn::Tensor t = p.tensor;
    auto v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data[i];
  }
}

void add_adam(Checkpoint &ckpt, const std::string &prefix, const nn::Module &module,
              const nn::AdamState &state) {
  const auto &params = module.parameters();
  if (state.m.size() != params.size()) {
    fail(ErrorCode::ShapeMismatch, "optimizer state does not match module " + prefix);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::vector<std::int64_t> shape(params[i].tensor.shape().begin(),
                                          params[i].tensor.shape().end());
    ckpt.arrays.push_back({"adam." + prefix + ".m." + params[i].name, shape, to_floats(state.m[i])});
    ckpt.arrays.push_back({"adam." + prefix + ".v." + params[i].name, shape, to_floats(state.v[i])});
  }
  ckpt.extra["adam_step"][prefix] = state.step;
}

void restore_adam(const Checkpoint &ckpt, const std::string &prefix, const nn::Module &module,
                  nn::AdamState &state) {
  const auto &params = module.parameters();
  state.m.assign(params.size(), {});
  state.v.assign(params.size(), {});
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto n = params[i].tensor.numel();
    const auto &m = require_array(ckpt, "adam." + prefix + ".m." + params[i].name, n);
    const auto &v = require_array(ckpt, "adam." + prefix + ".v." + params[i].name, n);
    state.m[i].assign(m.data.begin(), m.data.end());
    state.v[i].assign(v.data.begin(), v.data.end());
  }
  try {
    state.step = ckpt.extra.at("adam_step").at(prefix).get<std::int64_t>();
  } catch (const nlohmann::json::exception &) {
    fail(ErrorCode::ShapeMismatch, "checkpoint has no optimizer step for " + prefix);
  }
}

} // namespace inpaint::cli
