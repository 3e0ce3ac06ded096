#include "inpaint/cli/commands.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "inpaint/cli/checkpoint.hpp"
#include "inpaint/cli/montage.hpp"
#include "inpaint/error.hpp"
#include "inpaint/nn/ops.hpp"
#include "inpaint/volume_io.hpp"

namespace inpaint::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nn::Tensor;

namespace {

constexpr const char *kDatasetFormat = "inpaint-phantom-dataset";
constexpr std::uint64_t kBatchTag = 0x62617463;  // per-step batch/noise streams
constexpr std::uint64_t kSampleTag = 0x73616d70; // per-sample sampling streams

void ensure_dir(const fs::path &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    fail(ErrorCode::IoFailure, "cannot create directory " + dir.string() +
                                   (ec ? ": " + ec.message() : std::string()));
  }
}

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  f << text;
  if (!f) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

json read_json(const fs::path &path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::IoFailure, "cannot read " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception &e) {
    fail(ErrorCode::BadMagic, path.string() + ": " + e.what());
  }
}

std::uint64_t fnv1a(const std::string &text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Re-throws with the sample id in front of the message.
template <class F> auto with_sample(const std::string &id, F &&f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error &e) {
    throw Error(e.code(), "sample " + id + ": " + e.what());
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string family_of(const RunConfig &c) { return is_slice_model(c.model) ? "slices" : "crops"; }

json window_json(const prep::CropWindow &w) {
  return {{"origin", w.origin}, {"size", w.size}, {"pad_low", w.pad_low}, {"pad_high", w.pad_high}};
}

// Model construction seeds, derived from the run seed.
std::uint64_t model_seed(const RunConfig &c, std::uint64_t which) {
  return mix_stream(c.seed, which);
}

// Owns whichever network family the config selects.
struct Models {
  std::unique_ptr<gan::Generator> gen;
  std::unique_ptr<gan::PatchDiscriminator> disc;
  std::unique_ptr<gan::PerceptualExtractor> extractor;
  std::unique_ptr<diffusion::Denoiser3d> denoiser;
  nn::AdamState gen_state, disc_state, den_state;

  explicit Models(const RunConfig &c) {
    if (is_slice_model(c.model)) {
      gen = std::make_unique<gan::Generator>(c.generator, model_seed(c, 1));
      disc = std::make_unique<gan::PatchDiscriminator>(c.discriminator, model_seed(c, 2));
      if (c.model == ModelKind::PGan) {
        extractor = std::make_unique<gan::PerceptualExtractor>(c.extractor);
      }
      gen_state = nn::make_adam_state(gen->parameter_tensors(), c.optimizer);
      disc_state = nn::make_adam_state(disc->parameter_tensors(), c.optimizer);
    } else {
      denoiser = std::make_unique<diffusion::Denoiser3d>(c.denoiser, model_seed(c, 3));
      den_state = nn::make_adam_state(denoiser->parameter_tensors(), c.optimizer);
    }
  }

  Checkpoint snapshot(const RunConfig &c, std::int64_t step) const {
    Checkpoint ck;
    ck.model = to_string(c.model);
    ck.config_hash = config_hash(c);
    ck.step = step;
    if (gen) {
      add_module(ck, "generator", *gen);
      add_module(ck, "discriminator", *disc);
      add_adam(ck, "generator", *gen, gen_state);
      add_adam(ck, "discriminator", *disc, disc_state);
    } else {
      add_module(ck, "denoiser", *denoiser);
      add_adam(ck, "denoiser", *denoiser, den_state);
    }
    return ck;
  }

  void restore(const RunConfig &c, const Checkpoint &ck, bool with_optimizer) {
    if (ck.model != to_string(c.model)) {
      fail(ErrorCode::ConfigError, "checkpoint holds model '" + ck.model + "', config wants '" +
                                       to_string(c.model) + "'");
    }
    if (ck.config_hash != config_hash(c)) {
      fail(ErrorCode::ConfigError, "checkpoint config hash " + ck.config_hash +
                                       " does not match this config (" + config_hash(c) + ")");
    }
    if (gen) {
      restore_module(ck, "generator", *gen);
      restore_module(ck, "discriminator", *disc);
      if (with_optimizer) {
        restore_adam(ck, "generator", *gen, gen_state);
        restore_adam(ck, "discriminator", *disc, disc_state);
      }
    } else {
      restore_module(ck, "denoiser", *denoiser);
      if (with_optimizer) restore_adam(ck, "denoiser", *denoiser, den_state);
    }
  }
};

// Exclusive ownership of a run directory for the lifetime of a training run.
class RunLock {
public:
  explicit RunLock(const fs::path &dir) : path_(dir / ".lock") {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      fail(ErrorCode::IoFailure, "run directory is locked (" + path_.string() +
                                     " exists); another training process may own it");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    if (::write(fd_, pid.data(), pid.size()) < 0) {
      // The pid is informational only.
    }
  }
  ~RunLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock &) = delete;
  RunLock &operator=(const RunLock &) = delete;

private:
  fs::path path_;
  int fd_ = -1;
};

struct SliceExample {
  std::vector<double> image, mask, target;
};

struct TrainData {
  std::int64_t h = 0, w = 0;  // slices
  Dims3 crop{0, 0, 0};        // crops, x-fastest
  std::vector<SliceExample> items;
};

std::vector<double> to_doubles(const Volume &v) {
  return std::vector<double>(v.data().begin(), v.data().end());
}

TrainData load_training_data(const RunConfig &c) {
  const fs::path dir = c.processed_dir() / family_of(c);
  const json manifest = read_json(dir / "manifest.json");
  TrainData data;
  for (const auto &e : manifest.at("entries")) {
    if (e.at("split") != "train") continue;
    const std::string id = e.at("id").get<std::string>();
    const fs::path sdir = dir / id;
    if (is_slice_model(c.model)) {
      const int n = e.at("slices").get<int>();
      for (int k = 0; k < n; ++k) {
        char suffix[32];
        std::snprintf(suffix, sizeof suffix, "_%03d.rawvol", k);
        const Volume mask = io::read_rawvol(sdir / (std::string("mask") + suffix));
        if (c.train.mask_slices_only &&
            std::none_of(mask.data().begin(), mask.data().end(), [](float v) { return v > 0.5f; })) {
          continue;
        }
        SliceExample ex;
        ex.image = to_doubles(io::read_rawvol(sdir / (std::string("image") + suffix)));
        ex.target = to_doubles(io::read_rawvol(sdir / (std::string("target") + suffix)));
        ex.mask = to_doubles(mask);
        if (data.items.empty()) {
          data.w = mask.dims()[0];
          data.h = mask.dims()[1];
        } else if (mask.dims()[0] != data.w || mask.dims()[1] != data.h) {
          fail(ErrorCode::ShapeMismatch, "training slices differ in size");
        }
        data.items.push_back(std::move(ex));
      }
    } else {
      const Volume mask = io::read_rawvol(sdir / "mask.rawvol");
      SliceExample ex;
      ex.image = to_doubles(io::read_rawvol(sdir / "image.rawvol"));
      ex.target = to_doubles(io::read_rawvol(sdir / "target.rawvol"));
      ex.mask = to_doubles(mask);
      if (data.items.empty()) {
        data.crop = mask.dims();
      } else if (mask.dims() != data.crop) {
        fail(ErrorCode::ShapeMismatch, "training crops differ in size");
      }
      data.items.push_back(std::move(ex));
    }
  }
  if (data.items.empty()) {
    fail(ErrorCode::EmptyInput, "no training examples under " + dir.string());
  }
  return data;
}

Tensor stack(const TrainData &d, const std::vector<std::size_t> &pick,
             std::vector<double> SliceExample::*field, const nn::Shape &item_shape) {
  std::vector<double> values;
  for (auto i : pick) {
    const auto &v = d.items[i].*field;
    values.insert(values.end(), v.begin(), v.end());
  }
  nn::Shape shape{static_cast<std::int64_t>(pick.size())};
  shape.insert(shape.end(), item_shape.begin(), item_shape.end());
  return Tensor::from(std::move(shape), std::move(values));
}

Volume tensor_to_volume(const Tensor &t, const Dims3 &dims) {
  Volume v(dims);
  const auto src = t.values();
  auto dst = v.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(src[i]);
  return v;
}

Tensor volume_to_tensor(const Volume &v, const nn::Shape &shape) {
  return Tensor::from(shape, to_doubles(v));
}

diffusion::NoiseSchedule schedule_of(const RunConfig &c) {
  return diffusion::make_schedule(c.diffusion.steps, c.diffusion.beta_start, c.diffusion.beta_end);
}

Volume input_image(const DatasetRecord &r, Volume *mask_out) {
  const Volume diseased = io::read_volume(r.diseased);
  Volume mask = io::read_mask(r.mask);
  Volume image = prep::void_region(diseased, mask);
  image.copy_geometry(diseased);
  if (mask_out) *mask_out = std::move(mask);
  return image;
}

} // namespace

std::string checkpoint_name(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%06lld.zip", static_cast<long long>(step));
  return buf;
}

std::optional<fs::path> latest_checkpoint(const fs::path &run_dir) {
  std::optional<fs::path> best;
  std::string best_name;
  std::error_code ec;
  if (!fs::is_directory(run_dir, ec)) return best;
  for (const auto &e : fs::directory_iterator(run_dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() == 15 && name.rfind("ckpt_", 0) == 0 && name.substr(11) == ".zip" &&
        name > best_name) {
      best_name = name;
      best = e.path();
    }
  }
  return best;
}

fs::path prediction_path(const RunConfig &config, const std::string &id) {
  return config.predictions_dir() / (id + ".nii.gz");
}

std::vector<DatasetRecord> load_dataset(const fs::path &dir) {
  const json m = read_json(dir / "manifest.json");
  std::vector<DatasetRecord> out;
  try {
    if (m.at("format") != kDatasetFormat) {
      fail(ErrorCode::BadMagic, (dir / "manifest.json").string() + " is not a dataset manifest");
    }
    for (const auto &e : m.at("entries")) {
      DatasetRecord r;
      r.id = e.at("id").get<std::string>();
      r.seed = e.at("seed").get<std::uint64_t>();
      r.split = e.at("split").get<std::string>();
      r.healthy = dir / e.at("healthy").get<std::string>();
      r.mask = dir / e.at("mask").get<std::string>();
      r.diseased = dir / e.at("diseased").get<std::string>();
      out.push_back(std::move(r));
    }
  } catch (const json::exception &e) {
    fail(ErrorCode::BadMagic, (dir / "manifest.json").string() + ": " + e.what());
  }
  return out;
}

std::vector<DatasetRecord> select_split(const std::vector<DatasetRecord> &records,
                                        const std::string &split) {
  std::vector<DatasetRecord> out;
  for (const auto &r : records) {
    if (split == "all" || r.split == split) out.push_back(r);
  }
  return out;
}

void cmd_phantom(const RunConfig &c) {
  const fs::path dir = c.dataset_dir();
  ensure_dir(dir);
  const auto entries = phantom::generate_dataset(c.phantom.count, c.phantom.base_seed,
                                                 c.phantom.spec, c.phantom.val_fraction);
  json manifest;
  manifest["format"] = kDatasetFormat;
  manifest["version"] = 1;
  const auto &s = c.phantom.spec;
  manifest["spec"] = {{"dims", s.dims},
                      {"semi_axis_range", {s.semi_axis_min, s.semi_axis_max}},
                      {"texture_sigma", s.texture_sigma},
                      {"texture_amplitude", s.texture_amplitude},
                      {"tumor_radius_range", {s.tumor_radius_min, s.tumor_radius_max}},
                      {"tumor_count", s.tumor_count},
                      {"base_seed", c.phantom.base_seed},
                      {"val_fraction", c.phantom.val_fraction}};
  manifest["entries"] = json::array();
  for (const auto &e : entries) {
    const std::string h = e.id + "_healthy.rawvol";
    const std::string m = e.id + "_mask.rawvol";
    const std::string d = e.id + "_diseased.rawvol";
    io::write_rawvol(e.phantom.healthy, dir / h);
    io::write_rawvol(e.phantom.mask, dir / m);
    io::write_rawvol(e.phantom.diseased, dir / d);
    manifest["entries"].push_back({{"id", e.id},
                                   {"seed", e.seed},
                                   {"split", e.split},
                                   {"healthy", h},
                                   {"mask", m},
                                   {"diseased", d},
                                   {"tumor_radius", e.phantom.tumor_radius}});
  }
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "phantom: wrote " << entries.size() << " samples to " << dir.string() << "\n";
}

void cmd_preprocess(const RunConfig &c) {
  const auto records = load_dataset(c.dataset_dir());
  const fs::path dir = c.processed_dir() / family_of(c);
  ensure_dir(dir);
  const bool slices = is_slice_model(c.model);
  json manifest;
  manifest["family"] = family_of(c);
  manifest["entries"] = json::array();
  for (const auto &r : records) {
    with_sample(r.id, [&] {
      Volume mask;
      const Volume image = input_image(r, &mask);
      const Volume healthy = io::read_volume(r.healthy);
      const auto sample = prep::normalize_sample(image, mask, healthy, c.preprocess.domain, !slices);
      const fs::path sdir = dir / r.id;
      ensure_dir(sdir);
      json stats = {{"id", r.id},
                    {"mean", sample.stats.mean},
                    {"std", sample.stats.std},
                    {"domain", prep::to_string(sample.stats.domain)},
                    {"scaling", slices ? "zscore" : "unit_range"},
                    {"dims", image.dims()},
                    {"source", {{"image", r.diseased.filename().string()},
                                {"mask", r.mask.filename().string()},
                                {"target", r.healthy.filename().string()}}}};
      json entry = {{"id", r.id}, {"split", r.split}};
      if (slices) {
        const int axis = c.preprocess.slice_axis;
        const auto img = prep::extract_slices(sample.image, axis);
        const auto msk = prep::extract_slices(sample.mask, axis);
        const auto tgt = prep::extract_slices(*sample.target, axis);
        json order = json::array();
        for (std::size_t k = 0; k < img.size(); ++k) {
          char suffix[32];
          std::snprintf(suffix, sizeof suffix, "_%03zu.rawvol", k);
          io::write_rawvol(img[k], sdir / (std::string("image") + suffix));
          io::write_rawvol(msk[k], sdir / (std::string("mask") + suffix));
          io::write_rawvol(tgt[k], sdir / (std::string("target") + suffix));
          order.push_back(std::string("image") + suffix);
        }
        stats["axis"] = axis;
        stats["slice_files"] = order;
        entry["slices"] = img.size();
      } else {
        const auto crop = prep::crop_about_mask(sample.image, sample.mask, c.preprocess.crop_size);
        io::write_rawvol(crop.image, sdir / "image.rawvol");
        io::write_rawvol(crop.mask, sdir / "mask.rawvol");
        io::write_rawvol(prep::crop_window(*sample.target, crop.window), sdir / "target.rawvol");
        stats["window"] = window_json(crop.window);
      }
      write_text(sdir / "stats.json", stats.dump(2) + "\n");
      manifest["entries"].push_back(entry);
    });
  }
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "preprocess: " << records.size() << " samples -> " << dir.string() << "\n";
}

void cmd_train(const RunConfig &c, bool resume) {
  const TrainData data = load_training_data(c);
  const fs::path run_dir = c.run_dir();
  ensure_dir(run_dir);
  RunLock lock(run_dir);
  Models models(c);
  const bool slices = is_slice_model(c.model);
  const auto schedule = slices ? diffusion::NoiseSchedule{} : schedule_of(c);

  std::int64_t start = 0;
  bool have_start_checkpoint = false;
  if (resume) {
    if (auto latest = latest_checkpoint(run_dir)) {
      const Checkpoint ck = load_checkpoint(latest->string());
      models.restore(c, ck, true);
      start = ck.step;
      have_start_checkpoint = true;
      std::cout << "train: resuming from " << latest->string() << " at step " << start << "\n";
    }
  }

  // The loss log keeps only rows the restored state has actually seen.
  const fs::path log_path = run_dir / "loss.csv";
  const std::string header = slices ? "step,total,pix,per,adv,disc,wall_time_s"
                                    : "step,loss,wall_time_s";
  std::string kept = header + "\n";
  if (have_start_checkpoint) {
    std::ifstream in(log_path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (!line.empty() && std::stoll(line.substr(0, line.find(','))) <= start) kept += line + "\n";
    }
  }
  write_text(log_path, kept);
  std::ofstream log(log_path, std::ios::app);

  if (!have_start_checkpoint) {
    save_checkpoint((run_dir / checkpoint_name(0)).string(), models.snapshot(c, 0));
  }

  const auto t0 = std::chrono::steady_clock::now();
  const nn::Shape item = slices ? nn::Shape{1, data.h, data.w}
                                : nn::Shape{1, data.crop[2], data.crop[1], data.crop[0]};
  for (std::int64_t s = start; s < c.train.steps; ++s) {
    Rng rng(c.seed, mix_stream(kBatchTag, static_cast<std::uint64_t>(s)));
    std::vector<std::size_t> pick(static_cast<std::size_t>(c.train.batch_size));
    for (auto &p : pick) p = static_cast<std::size_t>(rng.uniform_int(data.items.size()));
    const Tensor image = stack(data, pick, &SliceExample::image, item);
    const Tensor mask = stack(data, pick, &SliceExample::mask, item);
    const Tensor target = stack(data, pick, &SliceExample::target, item);
    const std::int64_t done = s + 1;
    std::string row;
    if (slices) {
      gan::GanModels m{*models.gen, *models.disc, models.extractor.get()};
      const auto rep = gan::gan_train_step(m, {image, mask, target}, c.loss, models.gen_state,
                                           models.disc_state, c.objective);
      row = std::to_string(done) + "," + fmt(rep.total) + "," + fmt(rep.pix) + "," +
            fmt(rep.per) + "," + fmt(rep.adv) + "," + fmt(rep.disc);
    } else {
      const double loss = diffusion::train_step(*models.denoiser, models.den_state, target,
                                                {image, mask}, schedule, rng);
      row = std::to_string(done) + "," + fmt(loss);
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char wbuf[32];
    std::snprintf(wbuf, sizeof wbuf, ",%.3f", wall);
    log << row << wbuf << "\n" << std::flush;
    if (done % c.train.checkpoint_interval == 0 || done == c.train.steps) {
      save_checkpoint((run_dir / checkpoint_name(done)).string(), models.snapshot(c, done));
    }
  }
  std::cout << "train: " << to_string(c.model) << " reached step " << c.train.steps << " in "
            << run_dir.string() << "\n";
}

void cmd_infer(const RunConfig &c) {
  const auto records = select_split(load_dataset(c.dataset_dir()), c.infer.split);
  fs::path ckpt_path;
  if (c.infer.checkpoint == "latest") {
    const auto latest = latest_checkpoint(c.run_dir());
    if (!latest) fail(ErrorCode::IoFailure, "no checkpoint in " + c.run_dir().string());
    ckpt_path = *latest;
  } else {
    ckpt_path = c.resolve(c.infer.checkpoint);
  }
  Models models(c);
  models.restore(c, load_checkpoint(ckpt_path.string()), false);
  const fs::path out_dir = c.predictions_dir();
  ensure_dir(out_dir);
  const bool slices = is_slice_model(c.model);
  const auto schedule = slices ? diffusion::NoiseSchedule{} : schedule_of(c);
  nn::NoGradGuard no_grad;

  for (const auto &r : records) {
    with_sample(r.id, [&] {
      Volume mask;
      const Volume image = input_image(r, &mask);
      const auto sample = prep::normalize_sample(image, mask, std::nullopt, c.preprocess.domain,
                                                 !slices);
      Volume predicted;
      if (slices) {
        const int axis = c.preprocess.slice_axis;
        auto img = prep::extract_slices(sample.image, axis);
        const auto msk = prep::extract_slices(sample.mask, axis);
        for (std::size_t k = 0; k < img.size(); ++k) {
          if (std::none_of(msk[k].data().begin(), msk[k].data().end(),
                           [](float v) { return v > 0.5f; })) {
            continue; // nothing to fill; composition keeps the input here
          }
          const auto &d = img[k].dims();
          const nn::Shape shape{1, 1, d[1], d[0]};
          const Tensor out = models.gen->forward(volume_to_tensor(img[k], shape),
                                                 volume_to_tensor(msk[k], shape));
          img[k] = tensor_to_volume(out, d);
        }
        predicted = prep::reassemble_slices(img, axis);
      } else {
        const auto crop = prep::crop_about_mask(sample.image, sample.mask, c.preprocess.crop_size);
        const auto &d = crop.image.dims();
        const nn::Shape shape{1, 1, d[2], d[1], d[0]};
        diffusion::Condition cond{volume_to_tensor(crop.image, shape),
                                  volume_to_tensor(crop.mask, shape)};
        Rng rng(c.seed, mix_stream(kSampleTag, fnv1a(r.id)));
        const Tensor x = diffusion::sample(*models.denoiser, cond, schedule, rng);
        predicted = prep::paste_crop(sample.image, tensor_to_volume(x, d), crop.window);
      }
      const Volume denorm = prep::zscore_invert(predicted, sample.stats);
      Volume out = prep::compose_output(image, mask, denorm);
      out.copy_geometry(image);
      io::write_volume(out, prediction_path(c, r.id));
    });
  }
  std::cout << "infer: wrote " << records.size() << " predictions to " << out_dir.string() << "\n";
}

void cmd_evaluate(const RunConfig &c) {
  const auto records = select_split(load_dataset(c.references_dir()), c.infer.split);
  metrics::EvalOptions opt;
  opt.region = c.evaluate.region;
  opt.fixed_range = c.evaluate.fixed_range;
  std::vector<metrics::MetricsResult> results;
  for (const auto &r : records) {
    const fs::path pred_path = prediction_path(c, r.id);
    if (!fs::exists(pred_path)) {
      fail(ErrorCode::MissingPair, "no prediction for sample " + r.id + " (expected " +
                                       pred_path.string() + ")");
    }
    with_sample(r.id, [&] {
      auto res = metrics::evaluate_sample(io::read_volume(pred_path), io::read_volume(r.healthy),
                                          io::read_mask(r.mask), opt);
      res.sample_id = r.id;
      results.push_back(res);
    });
  }
  const std::string label = c.evaluate.label.empty() ? display_name(c.model) : c.evaluate.label;
  const auto report = metrics::aggregate(std::move(results), label);
  const fs::path dir = c.report_dir();
  ensure_dir(dir);
  const std::string table = metrics::render_table({report});
  write_text(dir / "table.txt", table);
  write_text(dir / "metrics.csv", metrics::render_csv({report}));
  std::cout << table;
}

void cmd_montage(const RunConfig &c) {
  if (c.montage.inputs.empty()) {
    fail(ErrorCode::ConfigError, "montage.inputs must list at least one volume");
  }
  std::vector<Volume> volumes;
  for (const auto &p : c.montage.inputs) volumes.push_back(io::read_volume(c.resolve(p)));
  const int axis = c.montage.axis;
  const std::int64_t index = c.montage.slice ? *c.montage.slice : volumes.front().dims()[axis] / 2;
  const fs::path out = c.resolve(c.montage.output);
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  write_pgm(out.string(), montage(volumes, axis, index));
  std::cout << "montage: wrote " << out.string() << "\n";
}

int run(int argc, const char *const *argv) {
  CLI::App app{"Brain MRI inpainting toolkit"};
  std::string command, config_path;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  app.add_option("command", command, "phantom|preprocess|train|infer|evaluate|montage")
      ->required()
      ->check(CLI::IsMember({"phantom", "preprocess", "train", "infer", "evaluate", "montage"}));
  app.add_option("--config", config_path, "Run configuration (JSON)")->required();
  app.add_option("--seed", seed, "Override the config seed");
  app.add_flag("--resume", resume, "Continue training from the latest checkpoint");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 2;
  }
  try {
    RunConfig config = load_config(config_path);
    if (seed) config.seed = *seed;
    if (command == "phantom") cmd_phantom(config);
    else if (command == "preprocess") cmd_preprocess(config);
    else if (command == "train") cmd_train(config, resume);
    else if (command == "infer") cmd_infer(config);
    else if (command == "evaluate") cmd_evaluate(config);
    else cmd_montage(config);
  } catch (const Error &e) {
    std::cerr << "inpaint " << command << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error &e) {
    std::cerr << "inpaint " << command << ": IoFailure: " << e.what() << "\n";
    return exit_code_for(ErrorCode::IoFailure);
  }
  return 0;
}

} // namespace inpaint::cli
