#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "inpaint/volume.hpp"

namespace inpaint::prep {

enum class StatsDomain { NonzeroVoxels, AllVoxels };

std::string to_string(StatsDomain domain);
StatsDomain stats_domain_from_string(const std::string &text);

/// Affine intensity normalization parameters: normalized = (v - mean) / std.
/// Min-max scaling to [-1, 1] is stored in the same form (mean = center,
/// std = half range) so one inverse serves both.
struct ZScoreStats {
  double mean = 0.0;
  double std = 1.0;
  StatsDomain domain = StatsDomain::NonzeroVoxels;
};

/// Population mean/std over the domain, then (v - mean)/std on every voxel.
/// Throws EmptyDomain (fewer than 2 domain voxels) or ZeroVariance (std < 1e-8).
std::pair<Volume, ZScoreStats> zscore_normalize(const Volume &v,
                                                StatsDomain domain = StatsDomain::NonzeroVoxels);

/// Statistics only; same errors as zscore_normalize.
ZScoreStats zscore_stats(const Volume &v, StatsDomain domain);

/// Stats that send the domain's [min, max] to [-1, 1].
ZScoreStats unit_range_stats(const Volume &v, StatsDomain domain);

Volume apply_normalization(const Volume &v, const ZScoreStats &stats);
Volume zscore_invert(const Volume &v, const ZScoreStats &stats);

/// Planes orthogonal to `axis`, in index order. Slice k of axis 2 has dims
/// (dx, dy, 1); axis 1 gives (dx, dz, 1); axis 0 gives (dy, dz, 1).
std::vector<Volume> extract_slices(const Volume &v, int axis = 2);
Volume reassemble_slices(std::span<const Volume> slices, int axis = 2);

struct CropWindow {
  Dims3 origin{0, 0, 0}; ///< may be negative
  Dims3 size{96, 96, 96};
  Dims3 pad_low{0, 0, 0};
  Dims3 pad_high{0, 0, 0};
};

struct Crop {
  Volume image;
  Volume mask;
  CropWindow window;
};

/// Integer mask centroid, ties rounded toward +infinity on each axis.
Dims3 mask_centroid(const Volume &mask);

/// Fixed-size window centred on the mask centroid; out-of-bounds voxels are
/// zero. Throws EmptyMask or ShapeMismatch.
Crop crop_about_mask(const Volume &v, const Volume &mask, Dims3 size = {96, 96, 96});

/// Extracts an arbitrary window (zero outside the source).
Volume crop_window(const Volume &v, const CropWindow &window);

/// Writes the in-bounds part of `patch` back into a copy of `dest`.
Volume paste_crop(const Volume &dest, const Volume &patch, const CropWindow &window);

/// prediction where mask = 1, original elsewhere (bit-exact).
Volume compose_output(const Volume &original, const Volume &mask, const Volume &prediction);

/// Copy of `image` with every mask voxel set to exactly 0.
Volume void_region(const Volume &image, const Volume &mask);

/// Sets voxels to 0 wherever `reference` is 0 (restores the zero background
/// after an affine normalization).
Volume zero_where_zero(const Volume &v, const Volume &reference);

struct MaskedSample {
  std::string id;
  Volume image; ///< mask region voided to 0
  Volume mask;
  std::optional<Volume> target;
  std::optional<CropWindow> window;
  ZScoreStats stats;
};

/// Checks shared dims and that image is 0 under the mask.
void validate(const MaskedSample &sample);

/// Normalized model input: stats from the voided image over `domain`, applied
/// to image and target; background (raw zeros) and the mask region are set
/// to 0 afterwards. `unit_range` selects min-max to [-1, 1] instead of z-score.
MaskedSample normalize_sample(const Volume &image, const Volume &mask,
                              const std::optional<Volume> &target, StatsDomain domain,
                              bool unit_range);

} // namespace inpaint::prep
