#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "inpaint/diffusion.hpp"
#include "inpaint/gan.hpp"
#include "inpaint/metrics.hpp"
#include "inpaint/nn/adam.hpp"
#include "inpaint/phantom.hpp"
#include "inpaint/preprocess.hpp"

namespace inpaint::cli {

enum class ModelKind { PGan, ResVit, Palette3d };
std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string &text);
bool is_slice_model(ModelKind kind);
/// Row label used in report tables.
std::string display_name(ModelKind kind);

struct RunConfig {
  ModelKind model = ModelKind::PGan;
  std::uint64_t seed = 0;

  struct Paths {
    std::string root; ///< empty: INPAINT_DATA_DIR, else the working directory
    std::string dataset = "dataset";
    std::string processed = "processed";
    std::string run = "run";
    std::string predictions = "predictions";
    std::string references; ///< empty: same as dataset
    std::string report = "report";
  } paths;

  struct Phantom {
    int count = 4;
    std::uint64_t base_seed = 0;
    double val_fraction = 0.25;
    phantom::PhantomSpec spec;
  } phantom;

  struct Preprocess {
    prep::StatsDomain domain = prep::StatsDomain::NonzeroVoxels;
    int slice_axis = 2;
    Dims3 crop_size{96, 96, 96};
  } preprocess;

  gan::LossWeights loss;
  gan::AdversarialObjective objective = gan::AdversarialObjective::LeastSquares;
  gan::GeneratorConfig generator;
  gan::PatchDiscriminatorConfig discriminator;
  gan::PerceptualExtractorConfig extractor;

  diffusion::DenoiserConfig denoiser;
  struct Diffusion {
    int steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
  } diffusion;

  nn::AdamOptions optimizer;

  struct Train {
    std::int64_t steps = 100;
    int batch_size = 4;
    std::int64_t checkpoint_interval = 50;
    bool mask_slices_only = true;
  } train;

  struct Infer {
    std::string checkpoint = "latest";
    std::string split = "all";
  } infer;

  struct Evaluate {
    metrics::RegionKind region = metrics::RegionKind::MaskVoxels;
    std::optional<double> fixed_range;
    std::string label; ///< empty: display name of the model
  } evaluate;

  struct Montage {
    std::vector<std::string> inputs;
    int axis = 2;
    std::optional<std::int64_t> slice; ///< empty: middle slice
    std::string output = "montage.pgm";
  } montage;

  /// Root directory that relative paths resolve against.
  std::filesystem::path root() const;
  std::filesystem::path resolve(const std::string &path) const;
  std::filesystem::path dataset_dir() const { return resolve(paths.dataset); }
  std::filesystem::path processed_dir() const { return resolve(paths.processed); }
  std::filesystem::path run_dir() const { return resolve(paths.run); }
  std::filesystem::path predictions_dir() const { return resolve(paths.predictions); }
  std::filesystem::path references_dir() const {
    return resolve(paths.references.empty() ? paths.dataset : paths.references);
  }
  std::filesystem::path report_dir() const { return resolve(paths.report); }
};

/// The published schema, parsed.
const nlohmann::json &run_config_schema();

/// Schema-validates then reads a config. Throws ConfigError listing every
/// violation.
RunConfig parse_config(const nlohmann::json &doc);
RunConfig load_config(const std::string &path);

/// Canonical JSON of everything that shapes model parameters.
nlohmann::json architecture_json(const RunConfig &config);
/// 16 hex digits of FNV-1a 64 over architecture_json(config).dump().
std::string config_hash(const RunConfig &config);

} // namespace inpaint::cli
