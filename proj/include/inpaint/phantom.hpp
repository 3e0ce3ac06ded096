#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "inpaint/preprocess.hpp"
#include "inpaint/volume.hpp"

namespace inpaint::phantom {

struct PhantomSpec {
  Dims3 dims{64, 64, 64};
  std::uint64_t seed = 0;
  /// Head semi-axes as fractions of each half-extent.
  double semi_axis_min = 0.78;
  double semi_axis_max = 0.9;
  /// Gaussian sigma (voxels) of the smoothed noise texture.
  double texture_sigma = 2.0;
  double texture_amplitude = 0.05;
  double tumor_radius_min = 6.0;
  double tumor_radius_max = 10.0;
  int tumor_count = 1;

  /// Throws ConfigError for malformed fields.
  void validate() const;
};

struct Phantom {
  Volume healthy;
  Volume mask;
  Volume diseased;
  double tumor_radius = 0.0;
  std::array<double, 3> tumor_center{};
};

/// Ellipsoidal head with nested tissue shells and smooth texture, a spherical
/// tumor mask inside it, and a diseased copy that differs only in the mask
/// (intensity shift plus blur). Throws SpecInfeasible when no tumor fits.
Phantom generate_phantom(const PhantomSpec &spec);

struct DatasetEntry {
  std::string id;
  std::uint64_t seed = 0;
  std::string split; ///< "train" or "val"
  Phantom phantom;
  /// image = diseased with the mask voided, target = healthy.
  prep::MaskedSample sample;
};

/// Seeds base_seed .. base_seed + n - 1. The last floor(n * val_fraction)
/// entries form the validation split.
std::vector<DatasetEntry> generate_dataset(int n, std::uint64_t base_seed, const PhantomSpec &spec,
                                           double val_fraction = 0.0);

std::string sample_id(std::uint64_t seed);

} // namespace inpaint::phantom
