#include "inpaint/cli/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "inpaint/cli/json_schema.hpp"
#include "inpaint/error.hpp"
#include "inpaint/schema_text.hpp"

namespace inpaint::cli {

using nlohmann::json;

std::string to_string(ModelKind kind) {
  switch (kind) {
  case ModelKind::PGan: return "pgan";
  case ModelKind::ResVit: return "resvit";
  case ModelKind::Palette3d: return "palette3d";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string &text) {
  for (auto k : {ModelKind::PGan, ModelKind::ResVit, ModelKind::Palette3d}) {
    if (to_string(k) == text) return k;
  }
  fail(ErrorCode::ConfigError, "unknown model '" + text + "'");
}

bool is_slice_model(ModelKind kind) { return kind != ModelKind::Palette3d; }

std::string display_name(ModelKind kind) {
  switch (kind) {
  case ModelKind::PGan: return "pGAN";
  case ModelKind::ResVit: return "ResViT";
  case ModelKind::Palette3d: return "3D Palette";
  }
  return "?";
}

std::filesystem::path RunConfig::root() const {
  if (!paths.root.empty()) return paths.root;
  if (const char *env = std::getenv("INPAINT_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return ".";
}

std::filesystem::path RunConfig::resolve(const std::string &path) const {
  std::filesystem::path p(path);
  return p.is_absolute() ? p : root() / p;
}

const json &run_config_schema() {
  static const json schema = json::parse(kRunConfigSchema);
  return schema;
}

namespace {

template <class T> void read(const json &obj, const char *key, T &out) {
  if (auto it = obj.find(key); it != obj.end() && !it->is_null()) {
    out = it->get<T>();
  }
}

Dims3 dims_of(const json &v) { return {v[0].get<std::int64_t>(), v[1].get<std::int64_t>(), v[2].get<std::int64_t>()}; }

} // namespace

RunConfig parse_config(const json &doc) {
  const auto errors = validate_schema(doc, run_config_schema());
  if (!errors.empty()) {
    std::string msg = "config does not match schema:";
    for (const auto &e : errors) msg += "\n  " + e;
    fail(ErrorCode::ConfigError, msg);
  }
  RunConfig c;
  c.model = model_kind_from_string(doc["model"].get<std::string>());
  read(doc, "seed", c.seed);

  const json empty = json::object();
  const auto section = [&](const char *name) -> const json & {
    auto it = doc.find(name);
    return it == doc.end() ? empty : *it;
  };

  const json &paths = section("paths");
  read(paths, "root", c.paths.root);
  read(paths, "dataset", c.paths.dataset);
  read(paths, "processed", c.paths.processed);
  read(paths, "run", c.paths.run);
  read(paths, "predictions", c.paths.predictions);
  read(paths, "references", c.paths.references);
  read(paths, "report", c.paths.report);

  const json &ph = section("phantom");
  read(ph, "count", c.phantom.count);
  read(ph, "base_seed", c.phantom.base_seed);
  read(ph, "val_fraction", c.phantom.val_fraction);
  auto &spec = c.phantom.spec;
  if (ph.contains("dims")) spec.dims = dims_of(ph["dims"]);
  if (ph.contains("semi_axis_range")) {
    spec.semi_axis_min = ph["semi_axis_range"][0].get<double>();
    spec.semi_axis_max = ph["semi_axis_range"][1].get<double>();
  }
  read(ph, "texture_sigma", spec.texture_sigma);
  read(ph, "texture_amplitude", spec.texture_amplitude);
  if (ph.contains("tumor_radius_range")) {
    spec.tumor_radius_min = ph["tumor_radius_range"][0].get<double>();
    spec.tumor_radius_max = ph["tumor_radius_range"][1].get<double>();
  }
  read(ph, "tumor_count", spec.tumor_count);

  const json &pre = section("preprocess");
  if (pre.contains("stats_domain")) {
    c.preprocess.domain = prep::stats_domain_from_string(pre["stats_domain"].get<std::string>());
  }
  read(pre, "slice_axis", c.preprocess.slice_axis);
  if (pre.contains("crop_size")) c.preprocess.crop_size = dims_of(pre["crop_size"]);

  const json &loss = section("loss");
  read(loss, "lambda_pix", c.loss.pix);
  read(loss, "lambda_per", c.loss.per);
  read(loss, "lambda_adv", c.loss.adv);
  if (loss.contains("objective")) {
    c.objective = gan::adversarial_objective_from_string(loss["objective"].get<std::string>());
  }

  const json &gen = section("generator");
  read(gen, "base_width", c.generator.base_width);
  read(gen, "depth", c.generator.depth);
  read(gen, "res_blocks", c.generator.res_blocks);
  read(gen, "art_blocks", c.generator.art_blocks);
  read(gen, "token_dim", c.generator.token_dim);
  read(gen, "heads", c.generator.heads);
  read(gen, "patch_size", c.generator.patch_size);
  read(gen, "mlp_ratio", c.generator.mlp_ratio);
  c.generator.bottleneck = c.model == ModelKind::ResVit ? gan::Bottleneck::ArtBlocks
                                                        : gan::Bottleneck::ResidualBlocks;

  const json &disc = section("discriminator");
  read(disc, "layers", c.discriminator.layers);
  read(disc, "base_width", c.discriminator.base_width);

  const json &ext = section("extractor");
  read(ext, "widths", c.extractor.widths);
  read(ext, "taps", c.extractor.taps);
  read(ext, "seed", c.extractor.seed);

  const json &den = section("denoiser");
  read(den, "widths", c.denoiser.widths);
  read(den, "time_dim", c.denoiser.time_dim);

  const json &dif = section("diffusion");
  read(dif, "steps", c.diffusion.steps);
  read(dif, "beta_start", c.diffusion.beta_start);
  read(dif, "beta_end", c.diffusion.beta_end);

  const json &opt = section("optimizer");
  read(opt, "lr", c.optimizer.lr);
  read(opt, "beta1", c.optimizer.beta1);
  read(opt, "beta2", c.optimizer.beta2);
  read(opt, "eps", c.optimizer.eps);

  const json &tr = section("train");
  read(tr, "steps", c.train.steps);
  read(tr, "batch_size", c.train.batch_size);
  read(tr, "checkpoint_interval", c.train.checkpoint_interval);
  if (tr.contains("slices")) c.train.mask_slices_only = tr["slices"] == "mask";

  const json &inf = section("infer");
  read(inf, "checkpoint", c.infer.checkpoint);
  read(inf, "split", c.infer.split);

  const json &ev = section("evaluate");
  if (ev.contains("region")) {
    c.evaluate.region = metrics::region_kind_from_string(ev["region"].get<std::string>());
  }
  if (ev.contains("fixed_range") && !ev["fixed_range"].is_null()) {
    c.evaluate.fixed_range = ev["fixed_range"].get<double>();
  }
  read(ev, "label", c.evaluate.label);

  const json &mo = section("montage");
  read(mo, "inputs", c.montage.inputs);
  read(mo, "axis", c.montage.axis);
  if (mo.contains("slice")) c.montage.slice = mo["slice"].get<std::int64_t>();
  read(mo, "output", c.montage.output);

  // Cross-field rules the schema cannot express.
  c.phantom.spec.validate();
  c.loss.validate();
  c.generator.validate();
  c.discriminator.validate();
  c.extractor.validate();
  c.denoiser.validate();
  if (c.diffusion.beta_start > c.diffusion.beta_end) {
    fail(ErrorCode::ConfigError, "diffusion.beta_start must not exceed beta_end");
  }
  return c;
}

RunConfig load_config(const std::string &path) {
  std::ifstream f(path);
  if (!f) {
    fail(ErrorCode::ConfigError, "cannot read config " + path);
  }
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception &e) {
    fail(ErrorCode::ConfigError, "config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

json architecture_json(const RunConfig &c) {
  json a;
  a["model"] = to_string(c.model);
  if (is_slice_model(c.model)) {
    const auto &g = c.generator;
    a["generator"] = {{"base_width", g.base_width}, {"depth", g.depth}};
    if (c.model == ModelKind::PGan) {
      a["generator"]["res_blocks"] = g.res_blocks;
      a["extractor"] = {{"widths", c.extractor.widths},
                        {"taps", c.extractor.taps},
                        {"seed", c.extractor.seed}};
    } else {
      a["generator"]["art_blocks"] = g.art_blocks;
      a["generator"]["token_dim"] = g.token_dim;
      a["generator"]["heads"] = g.heads;
      a["generator"]["patch_size"] = g.patch_size;
      a["generator"]["mlp_ratio"] = g.mlp_ratio;
    }
    a["discriminator"] = {{"layers", c.discriminator.layers},
                          {"base_width", c.discriminator.base_width}};
  } else {
    a["denoiser"] = {{"widths", c.denoiser.widths}, {"time_dim", c.denoiser.time_dim}};
    a["diffusion"] = {{"steps", c.diffusion.steps},
                      {"beta_start", c.diffusion.beta_start},
                      {"beta_end", c.diffusion.beta_end}};
  }
  return a;
}

std::string config_hash(const RunConfig &config) {
  const std::string text = architecture_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

} // namespace inpaint::cli
