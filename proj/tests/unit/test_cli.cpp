#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "inpaint/cli/checkpoint.hpp"
#include "inpaint/cli/commands.hpp"
#include "inpaint/cli/config.hpp"
#include "inpaint/cli/montage.hpp"
#include "inpaint/cli/zip.hpp"
#include "inpaint/error.hpp"
#include "inpaint/gan.hpp"
#include "inpaint/preprocess.hpp"
#include "inpaint/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace inpaint;
using namespace inpaint::cli;

namespace {

fs::path fresh_dir(const std::string &name) {
  const fs::path d = fs::temp_directory_path() / "inpaint_unit_cli" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

json base_config(const fs::path &root, const std::string &model) {
  return {{"model", model},
          {"seed", 3},
          {"paths", {{"root", root.string()}}},
          {"phantom", {{"count", 2}, {"dims", {24, 24, 24}}, {"tumor_radius_range", {3, 4}}, {"val_fraction", 0.0}}},
          {"generator", {{"base_width", 4}, {"depth", 2}, {"res_blocks", 1}, {"art_blocks", 1},
                         {"token_dim", 8}, {"heads", 2}, {"patch_size", 2}}},
          {"discriminator", {{"layers", 2}, {"base_width", 4}}},
          {"extractor", {{"widths", {4, 4, 4, 4}}}},
          {"denoiser", {{"widths", {4, 8}}, {"time_dim", 8}}},
          {"diffusion", {{"steps", 5}}},
          {"preprocess", {{"crop_size", {16, 16, 16}}}},
          {"train", {{"steps", 4}, {"batch_size", 2}, {"checkpoint_interval", 2}}}};
}

fs::path write_config(const fs::path &dir, const json &cfg, const std::string &name = "config.json") {
  const fs::path p = dir / name;
  std::ofstream(p) << cfg.dump(2);
  return p;
}

int run_cmd(const std::string &cmd, const fs::path &config, std::vector<std::string> extra = {}) {
  std::vector<std::string> args{"inpaint", cmd, "--config", config.string()};
  args.insert(args.end(), extra.begin(), extra.end());
  std::vector<const char *> argv;
  for (const auto &a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path &p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::vector<float> params_of(const fs::path &ckpt) {
  const Checkpoint c = load_checkpoint(ckpt.string());
  std::vector<float> out;
  for (const auto &a : c.arrays) {
    if (a.name.rfind("adam.", 0) == 0) continue;
    out.insert(out.end(), a.data.begin(), a.data.end());
  }
  return out;
}

} // namespace

TEST_CASE("schema violations exit with code 2") {
  const fs::path d = fresh_dir("schema");
  json bad = base_config(d, "pgan");
  bad["unknown_key"] = 1;
  CHECK(run_cmd("phantom", write_config(d, bad)) == 2);
  bad = base_config(d, "vqgan");
  CHECK(run_cmd("phantom", write_config(d, bad)) == 2);
  bad = base_config(d, "pgan");
  bad["train"]["steps"] = -1;
  CHECK(run_cmd("phantom", write_config(d, bad)) == 2);
  CHECK(run_cmd("phantom", d / "missing.json") == 2);
  CHECK(run_cmd("frobnicate", write_config(d, base_config(d, "pgan"))) == 2);
  try {
    parse_config(json{{"model", "pgan"}, {"loss", {{"lambda_pix", "high"}}}});
    FAIL("expected ConfigError");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    CHECK(std::string(e.what()).find("/loss/lambda_pix") != std::string::npos);
  }
}

TEST_CASE("phantom command is reproducible and reports unusable output paths") {
  const fs::path d = fresh_dir("phantom");
  const fs::path cfg = write_config(d, base_config(d, "pgan"));
  REQUIRE(run_cmd("phantom", cfg) == 0);
  std::map<std::string, std::string> first;
  for (const auto &e : fs::directory_iterator(d / "dataset")) first[e.path().filename()] = slurp(e.path());
  CHECK(first.size() == 2 * 3 + 1);
  REQUIRE(run_cmd("phantom", cfg) == 0);
  for (const auto &[name, bytes] : first) CHECK(slurp(d / "dataset" / name) == bytes);

  json blocked = base_config(d, "pgan");
  blocked["paths"]["dataset"] = "blocker";
  std::ofstream(d / "blocker") << "not a directory";
  try {
    cmd_phantom(parse_config(blocked));
    FAIL("expected IoFailure");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::IoFailure);
    CHECK(std::string(e.what()).find("blocker") != std::string::npos);
  }
  CHECK(run_cmd("phantom", write_config(d, blocked, "blocked.json")) == 3);
}

TEST_CASE("preprocess writes one slice per plane and an invertible sidecar") {
  const fs::path d = fresh_dir("preprocess");
  json cfg = base_config(d, "pgan");
  cfg["phantom"]["count"] = 1;
  cfg["phantom"]["dims"] = {64, 64, 64};
  cfg["phantom"]["tumor_radius_range"] = {6, 8};
  const fs::path path = write_config(d, cfg);
  REQUIRE(run_cmd("phantom", path) == 0);
  REQUIRE(run_cmd("preprocess", path) == 0);
  const auto records = load_dataset(d / "dataset");
  REQUIRE(records.size() == 1);
  const fs::path sdir = d / "processed" / "slices" / records[0].id;
  int count = 0;
  for (const auto &e : fs::directory_iterator(sdir)) count += e.path().filename().string().rfind("image_", 0) == 0;
  CHECK(count == 64);

  const json stats = json::parse(slurp(sdir / "stats.json"));
  CHECK(stats["slice_files"].size() == 64);
  CHECK(stats["source"]["image"] == records[0].diseased.filename().string());
  std::vector<Volume> slices;
  for (int k = 0; k < 64; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "target_%03d.rawvol", k);
    slices.push_back(io::read_volume(sdir / name));
  }
  const Volume back = prep::zscore_invert(prep::reassemble_slices(slices, stats["axis"].get<int>()),
                                          {stats["mean"].get<double>(), stats["std"].get<double>()});
  const Volume healthy = io::read_volume(records[0].healthy);
  double worst = 0.0;
  for (std::int64_t i = 0; i < healthy.size(); ++i) {
    if (healthy.data()[i] != 0.0f) worst = std::max(worst, double(std::abs(back.data()[i] - healthy.data()[i])));
  }
  CHECK(worst < 1e-5);

  json p3 = cfg;
  p3["model"] = "palette3d";
  p3["preprocess"]["crop_size"] = {32, 32, 32};
  REQUIRE(run_cmd("preprocess", write_config(d, p3, "p3.json")) == 0);
  const fs::path cdir = d / "processed" / "crops" / records[0].id;
  CHECK(io::read_volume(cdir / "image.rawvol").dims() == Dims3{32, 32, 32});
  const json cstats = json::parse(slurp(cdir / "stats.json"));
  CHECK(cstats.contains("window"));
}

TEST_CASE("checkpoint container roundtrip and corruption") {
  const fs::path d = fresh_dir("ckpt");
  gan::PatchDiscriminator disc(gan::PatchDiscriminatorConfig{2, 4, 2}, 1);
  auto state = nn::make_adam_state(disc.parameter_tensors(), nn::AdamOptions{});
  state.step = 7;
  for (auto &m : state.m)
    for (auto &v : m) v = 0.25;
  Checkpoint c;
  c.model = "pgan";
  c.config_hash = "0123456789abcdef";
  c.step = 7;
  add_module(c, "disc", disc);
  add_adam(c, "disc", disc, state);
  const std::string path = (d / "a.zip").string();
  save_checkpoint(path, c);

  const Checkpoint back = load_checkpoint(path);
  CHECK(back.step == 7);
  CHECK(back.config_hash == c.config_hash);
  REQUIRE(back.arrays.size() == c.arrays.size());
  for (std::size_t i = 0; i < c.arrays.size(); ++i) {
    CHECK(back.arrays[i].name == c.arrays[i].name);
    CHECK(back.arrays[i].shape == c.arrays[i].shape);
    CHECK(back.arrays[i].data == c.arrays[i].data);
  }
  gan::PatchDiscriminator other(gan::PatchDiscriminatorConfig{2, 4, 2}, 99);
  auto other_state = nn::make_adam_state(other.parameter_tensors(), nn::AdamOptions{});
  restore_module(back, "disc", other);
  restore_adam(back, "disc", other, other_state);
  for (std::size_t i = 0; i < disc.parameters().size(); ++i) {
    const auto a = disc.parameters()[i].tensor.values(), b = other.parameters()[i].tensor.values();
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
  CHECK(other_state.step == 7);
  CHECK(other_state.m[0][0] == 0.25);

  // Truncated container.
  const std::string bytes = slurp(path);
  std::ofstream(d / "trunc.zip", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  try {
    load_checkpoint((d / "trunc.zip").string());
    FAIL("expected TruncatedFile");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::TruncatedFile);
  }

  // Manifest shape edited so it no longer matches the payload.
  auto entries = read_zip(path);
  json manifest = json::parse(std::string(entries[0].data.begin(), entries[0].data.end()));
  REQUIRE(entries[0].name == "manifest.json");
  manifest["entries"][0]["shape"][0] = manifest["entries"][0]["shape"][0].get<int>() + 1;
  const std::string edited = manifest.dump(2);
  entries[0].data.assign(edited.begin(), edited.end());
  write_zip((d / "shape.zip").string(), entries);
  try {
    load_checkpoint((d / "shape.zip").string());
    FAIL("expected ShapeMismatch");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }

  entries = read_zip(path);
  manifest = json::parse(std::string(entries[0].data.begin(), entries[0].data.end()));
  manifest["format_version"] = 99;
  const std::string v99 = manifest.dump(2);
  entries[0].data.assign(v99.begin(), v99.end());
  write_zip((d / "version.zip").string(), entries);
  try {
    load_checkpoint((d / "version.zip").string());
    FAIL("expected VersionMismatch");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::VersionMismatch);
  }
}

TEST_CASE("training resumes bit-identically, honours zero lr and the run lock") {
  const fs::path d = fresh_dir("train");
  json cfg = base_config(d, "pgan");
  cfg["train"]["steps"] = 6;
  cfg["train"]["checkpoint_interval"] = 3;
  cfg["paths"]["run"] = "run_full";
  const fs::path full = write_config(d, cfg, "full.json");
  REQUIRE(run_cmd("phantom", full) == 0);
  REQUIRE(run_cmd("preprocess", full) == 0);
  REQUIRE(run_cmd("train", full) == 0);
  CHECK(fs::exists(d / "run_full" / checkpoint_name(3)));
  CHECK(latest_checkpoint(d / "run_full") == d / "run_full" / checkpoint_name(6));

  json half = cfg;
  half["paths"]["run"] = "run_split";
  half["train"]["steps"] = 3;
  REQUIRE(run_cmd("train", write_config(d, half, "half.json")) == 0);
  half["train"]["steps"] = 6;
  REQUIRE(run_cmd("train", write_config(d, half, "half.json"), {"--resume"}) == 0);
  CHECK(slurp(d / "run_split" / checkpoint_name(6)) == slurp(d / "run_full" / checkpoint_name(6)));
  // The loss log agrees except for wall time.
  auto strip = [](const std::string &csv) {
    std::string out;
    std::istringstream in(csv);
    for (std::string line; std::getline(in, line);) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
  };
  CHECK(strip(slurp(d / "run_split" / "loss.csv")) == strip(slurp(d / "run_full" / "loss.csv")));

  json zero = cfg;
  zero["paths"]["run"] = "run_zero";
  zero["optimizer"] = {{"lr", 0.0}};
  zero["train"]["steps"] = 2;
  REQUIRE(run_cmd("train", write_config(d, zero, "zero.json")) == 0);
  CHECK(params_of(d / "run_zero" / checkpoint_name(0)) == params_of(d / "run_zero" / checkpoint_name(2)));

  std::ofstream(d / "run_full" / ".lock") << "busy";
  CHECK(run_cmd("train", full) == 3);
  fs::remove(d / "run_full" / ".lock");

  // A checkpoint from a different architecture is refused on resume.
  json changed = cfg;
  changed["generator"]["base_width"] = 8;
  changed["train"]["steps"] = 8;
  CHECK(run_cmd("train", write_config(d, changed, "changed.json"), {"--resume"}) == 2);
}

TEST_CASE("infer and evaluate: composition contract, missing pairs, perfect predictions") {
  const fs::path d = fresh_dir("evaluate");
  json cfg = base_config(d, "resvit");
  cfg["train"]["steps"] = 2;
  const fs::path path = write_config(d, cfg);
  REQUIRE(run_cmd("phantom", path) == 0);
  CHECK(run_cmd("evaluate", path) == 3);
  REQUIRE(run_cmd("preprocess", path) == 0);
  REQUIRE(run_cmd("train", path) == 0);
  REQUIRE(run_cmd("infer", path) == 0);
  for (const auto &r : load_dataset(d / "dataset")) {
    const Volume out = io::read_volume(prediction_path(parse_config(cfg), r.id));
    const Volume diseased = io::read_volume(r.diseased);
    const Volume mask = io::read_mask(r.mask);
    REQUIRE(out.dims() == diseased.dims());
    for (std::int64_t i = 0; i < out.size(); ++i) {
      if (mask.data()[i] == 0.0f) REQUIRE(std::memcmp(&out.data()[i], &diseased.data()[i], 4) == 0);
    }
  }
  REQUIRE(run_cmd("evaluate", path) == 0);
  const std::string csv = slurp(d / "report" / "metrics.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  // Replace predictions with the references themselves.
  const RunConfig rc = parse_config(cfg);
  for (const auto &r : load_dataset(d / "dataset")) io::write_volume(io::read_volume(r.healthy), prediction_path(rc, r.id));
  REQUIRE(run_cmd("evaluate", path) == 0);
  const std::string table = slurp(d / "report" / "table.txt");
  CHECK(table.find("1.0000 ± 0.0000  100.0000 ± 0.0000  0.0000 ± 0.0000") != std::string::npos);
}

TEST_CASE("montage layout and scaling") {
  Volume a({4, 4, 1});
  for (int i = 0; i < 16; ++i) a.data()[i] = static_cast<float>(i);
  const GrayImage one = montage({a}, 2, 0);
  CHECK(one.width == 4);
  CHECK(one.height == 4);
  CHECK(one.pixels.front() == 0);
  CHECK(one.pixels.back() == 255);
  const std::string pgm = encode_pgm(one);
  CHECK(pgm.rfind("P5\n4 4\n255\n", 0) == 0);
  CHECK(pgm.size() == 11 + 16);

  const Volume flat({4, 4, 1}, 3.0f);
  for (auto p : montage({flat}, 2, 0).pixels) CHECK(p == 128);

  const GrayImage three = montage({a, flat, a}, 2, 0);
  CHECK(three.width == 3 * 4 + 2);
  CHECK(three.pixels[4] == kSeparatorValue);
  try {
    montage({a}, 2, 5);
    FAIL("expected BadSliceIndex");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::BadSliceIndex);
  }
}
