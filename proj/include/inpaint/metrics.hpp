#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "inpaint/volume.hpp"

namespace inpaint::metrics {

inline constexpr double kPsnrCap = 100.0;

enum class RegionKind { WholeVolume, MaskBoundingBox, MaskVoxels };
std::string to_string(RegionKind kind);
RegionKind region_kind_from_string(const std::string &text);

/// Which voxels a metric covers. Mask-based kinds need `mask` (> 0.5 is in).
struct Region {
  RegionKind kind = RegionKind::WholeVolume;
  const Volume *mask = nullptr;

  static Region whole() { return {}; }
  static Region voxels(const Volume &m) { return {RegionKind::MaskVoxels, &m}; }
  static Region bounding_box(const Volume &m) { return {RegionKind::MaskBoundingBox, &m}; }
};

/// Half-open voxel box [lo, hi).
struct Box {
  Dims3 lo{0, 0, 0};
  Dims3 hi{0, 0, 0};

  std::int64_t extent(int axis) const { return hi[axis] - lo[axis]; }
  bool empty() const;
};

/// Bounding box of mask voxels. Throws EmptyMask.
Box mask_bounding_box(const Volume &mask);
/// Grows each axis shorter than `minimum` symmetrically, clamped to `dims`.
Box dilate_to(const Box &box, const Dims3 &minimum, const Dims3 &dims);

/// Separable Gaussian window truncated to `extent` per axis and renormalized.
struct SsimWindow {
  Dims3 extent{7, 7, 7};
  double sigma = 1.5;

  static SsimWindow volume() { return {{7, 7, 7}, 1.5}; }
  /// For 2D images stored with dims[2] == 1.
  static SsimWindow slice() { return {{11, 11, 1}, 1.5}; }
  /// Normalized 1D taps along an axis.
  std::vector<double> taps(int axis) const;
};

double mse(const Volume &pred, const Volume &ref, const Region &region);
double psnr_from_mse(double mse, double data_range);
double psnr(const Volume &pred, const Volume &ref, const Region &region, double data_range);

/// Mean SSIM over every window position that fits inside `box`.
/// Throws RegionTooSmall when the box is smaller than the window.
double ssim(const Volume &pred, const Volume &ref, const Box &box, double data_range,
            const SsimWindow &window = SsimWindow::volume());

/// Reference max - min over the region's voxels.
double region_range(const Volume &ref, const Region &region);

struct MetricsResult {
  std::string sample_id;
  double ssim = 0.0;
  double psnr = 0.0;
  double mse = 0.0;
  RegionKind region = RegionKind::MaskVoxels;
  double data_range = 0.0;
};

struct EvalOptions {
  /// MaskVoxels: MSE/PSNR over mask voxels and SSIM over the (dilated) mask
  /// bounding box. WholeVolume: everything over the full grid.
  RegionKind region = RegionKind::MaskVoxels;
  std::optional<double> fixed_range; ///< overrides the per-sample range
  SsimWindow window = SsimWindow::volume();
};

MetricsResult evaluate_sample(const Volume &pred, const Volume &ref, const Volume &mask,
                              const EvalOptions &options = {});

struct Summary {
  double mean = 0.0;
  double std = 0.0; ///< population
};

Summary summarize(const std::vector<double> &values);

struct MetricsReport {
  std::string model;
  std::vector<MetricsResult> results;
  Summary ssim, psnr, mse;
};

/// Throws EmptyInput.
MetricsReport aggregate(std::vector<MetricsResult> results, const std::string &label);

/// One row: "NAME  m ± s  m ± s  m ± s" with four decimals.
std::string render_row(const MetricsReport &report);
/// Header plus one row per report, columns padded to a common width.
std::string render_table(const std::vector<MetricsReport> &reports);

struct TableRow {
  std::string model;
  Summary ssim, psnr, mse;
};
std::vector<TableRow> parse_table(const std::string &text);

/// sample_id,model,ssim,psnr_db,mse,region
std::string render_csv(const std::vector<MetricsReport> &reports);

} // namespace inpaint::metrics
