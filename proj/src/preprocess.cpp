#include "inpaint/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "inpaint/error.hpp"

namespace inpaint::prep {

namespace {

bool in_domain(float value, StatsDomain domain) {
  return domain == StatsDomain::AllVoxels || value != 0.0f;
}

void check_axis(int axis) {
  if (axis < 0 || axis > 2) {
    fail(ErrorCode::IndexOutOfRange, "slice axis must be 0, 1 or 2");
  }
}

// In-plane axes for a slicing axis, in output (u, v) order.
std::pair<int, int> plane_axes(int axis) {
  switch (axis) {
  case 0: return {1, 2};
  case 1: return {0, 2};
  default: return {0, 1};
  }
}

} // namespace

std::string to_string(StatsDomain domain) {
  return domain == StatsDomain::NonzeroVoxels ? "nonzero" : "all";
}

StatsDomain stats_domain_from_string(const std::string &text) {
  if (text == "nonzero") return StatsDomain::NonzeroVoxels;
  if (text == "all") return StatsDomain::AllVoxels;
  fail(ErrorCode::ConfigError, "unknown z-score domain '" + text + "'");
}

ZScoreStats zscore_stats(const Volume &v, StatsDomain domain) {
  const auto data = v.data();
  std::size_t count = 0;
  double sum = 0.0;
  for (float x : data) {
    if (in_domain(x, domain)) {
      sum += x;
      ++count;
    }
  }
  if (count < 2) {
    fail(ErrorCode::EmptyDomain, "z-score domain has " + std::to_string(count) +
                                     " voxels, need at least 2");
  }
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (float x : data) {
    if (in_domain(x, domain)) {
      const double d = x - mean;
      ss += d * d;
    }
  }
  const double std = std::sqrt(ss / static_cast<double>(count));
  if (std < 1e-8) {
    fail(ErrorCode::ZeroVariance, "intensity std " + std::to_string(std) + " below 1e-8");
  }
  return {mean, std, domain};
}

ZScoreStats unit_range_stats(const Volume &v, StatsDomain domain) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t count = 0;
  for (float x : v.data()) {
    if (in_domain(x, domain)) {
      lo = std::min<double>(lo, x);
      hi = std::max<double>(hi, x);
      ++count;
    }
  }
  if (count < 2) {
    fail(ErrorCode::EmptyDomain, "min-max domain has fewer than 2 voxels");
  }
  const double half = 0.5 * (hi - lo);
  if (half < 1e-8) {
    fail(ErrorCode::ZeroVariance, "intensity range is zero");
  }
  return {0.5 * (hi + lo), half, domain};
}

std::pair<Volume, ZScoreStats> zscore_normalize(const Volume &v, StatsDomain domain) {
  const ZScoreStats stats = zscore_stats(v, domain);
  return {apply_normalization(v, stats), stats};
}

Volume apply_normalization(const Volume &v, const ZScoreStats &stats) {
  Volume out(v.dims());
  out.copy_geometry(v);
  const auto src = v.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<float>((static_cast<double>(src[i]) - stats.mean) / stats.std);
  }
  return out;
}

Volume zscore_invert(const Volume &v, const ZScoreStats &stats) {
  Volume out(v.dims());
  out.copy_geometry(v);
  const auto src = v.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<float>(static_cast<double>(src[i]) * stats.std + stats.mean);
  }
  return out;
}

std::vector<Volume> extract_slices(const Volume &v, int axis) {
  check_axis(axis);
  const auto [ua, va] = plane_axes(axis);
  const Dims3 &d = v.dims();
  std::vector<Volume> slices;
  slices.reserve(static_cast<std::size_t>(d[axis]));
  for (std::int64_t k = 0; k < d[axis]; ++k) {
    Volume s({d[ua], d[va], 1});
    s.spacing = {v.spacing[ua], v.spacing[va], v.spacing[axis]};
    s.affine = scaling_affine(s.spacing);
    s.name = v.name;
    std::array<std::int64_t, 3> p{};
    p[axis] = k;
    for (std::int64_t j = 0; j < d[va]; ++j) {
      p[va] = j;
      for (std::int64_t i = 0; i < d[ua]; ++i) {
        p[ua] = i;
        s.at(i, j, 0) = v.at(p[0], p[1], p[2]);
      }
    }
    slices.push_back(std::move(s));
  }
  return slices;
}

Volume reassemble_slices(std::span<const Volume> slices, int axis) {
  check_axis(axis);
  if (slices.empty()) {
    fail(ErrorCode::ShapeMismatch, "cannot reassemble zero slices");
  }
  const auto [ua, va] = plane_axes(axis);
  const Dims3 sd = slices.front().dims();
  if (sd[2] != 1) {
    fail(ErrorCode::ShapeMismatch, "slices must be 2D (third dim 1)");
  }
  Dims3 d{};
  d[ua] = sd[0];
  d[va] = sd[1];
  d[axis] = static_cast<std::int64_t>(slices.size());
  Volume v(d);
  v.spacing[ua] = slices.front().spacing[0];
  v.spacing[va] = slices.front().spacing[1];
  v.spacing[axis] = slices.front().spacing[2];
  v.affine = scaling_affine(v.spacing);
  v.name = slices.front().name;
  for (std::int64_t k = 0; k < d[axis]; ++k) {
    const Volume &s = slices[static_cast<std::size_t>(k)];
    if (s.dims() != sd) {
      fail(ErrorCode::ShapeMismatch, "slice " + std::to_string(k) + " differs in shape");
    }
    std::array<std::int64_t, 3> p{};
    p[axis] = k;
    for (std::int64_t j = 0; j < sd[1]; ++j) {
      p[va] = j;
      for (std::int64_t i = 0; i < sd[0]; ++i) {
        p[ua] = i;
        v.at(p[0], p[1], p[2]) = s.at(i, j, 0);
      }
    }
  }
  return v;
}

Dims3 mask_centroid(const Volume &mask) {
  std::array<double, 3> sum{0.0, 0.0, 0.0};
  std::int64_t count = 0;
  const Dims3 &d = mask.dims();
  for (std::int64_t z = 0; z < d[2]; ++z) {
    for (std::int64_t y = 0; y < d[1]; ++y) {
      for (std::int64_t x = 0; x < d[0]; ++x) {
        if (mask.at(x, y, z) > 0.5f) {
          sum[0] += static_cast<double>(x);
          sum[1] += static_cast<double>(y);
          sum[2] += static_cast<double>(z);
          ++count;
        }
      }
    }
  }
  if (count == 0) {
    fail(ErrorCode::EmptyMask, "mask has no voxels set");
  }
  Dims3 c{};
  for (int i = 0; i < 3; ++i) {
    c[i] = static_cast<std::int64_t>(std::floor(sum[i] / static_cast<double>(count) + 0.5));
  }
  return c;
}

Volume crop_window(const Volume &v, const CropWindow &window) {
  Volume out(window.size);
  out.spacing = v.spacing;
  out.affine = scaling_affine(v.spacing);
  out.name = v.name;
  for (std::int64_t z = 0; z < window.size[2]; ++z) {
    const std::int64_t sz = window.origin[2] + z;
    for (std::int64_t y = 0; y < window.size[1]; ++y) {
      const std::int64_t sy = window.origin[1] + y;
      for (std::int64_t x = 0; x < window.size[0]; ++x) {
        const std::int64_t sx = window.origin[0] + x;
        if (v.contains(sx, sy, sz)) {
          out.at(x, y, z) = v.at(sx, sy, sz);
        }
      }
    }
  }
  return out;
}

Crop crop_about_mask(const Volume &v, const Volume &mask, Dims3 size) {
  require_same_shape(v, mask, "crop_about_mask image/mask");
  for (auto s : size) {
    if (s < 1) {
      fail(ErrorCode::ShapeMismatch, "crop size must be positive");
    }
  }
  const Dims3 center = mask_centroid(mask);
  CropWindow w;
  w.size = size;
  for (int i = 0; i < 3; ++i) {
    w.origin[i] = center[i] - size[i] / 2;
    w.pad_low[i] = std::max<std::int64_t>(0, -w.origin[i]);
    w.pad_high[i] = std::max<std::int64_t>(0, w.origin[i] + size[i] - v.dims()[i]);
  }
  return {crop_window(v, w), crop_window(mask, w), w};
}

Volume paste_crop(const Volume &dest, const Volume &patch, const CropWindow &window) {
  if (patch.dims() != window.size) {
    fail(ErrorCode::ShapeMismatch, "patch dims differ from crop window size");
  }
  Volume out = dest;
  for (std::int64_t z = 0; z < window.size[2]; ++z) {
    const std::int64_t sz = window.origin[2] + z;
    for (std::int64_t y = 0; y < window.size[1]; ++y) {
      const std::int64_t sy = window.origin[1] + y;
      for (std::int64_t x = 0; x < window.size[0]; ++x) {
        const std::int64_t sx = window.origin[0] + x;
        if (out.contains(sx, sy, sz)) {
          out.at(sx, sy, sz) = patch.at(x, y, z);
        }
      }
    }
  }
  return out;
}

Volume compose_output(const Volume &original, const Volume &mask, const Volume &prediction) {
  require_same_shape(original, mask, "compose_output original/mask");
  require_same_shape(original, prediction, "compose_output original/prediction");
  Volume out = original;
  const auto m = mask.data();
  const auto p = prediction.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (m[i] > 0.5f) {
      dst[i] = p[i];
    }
  }
  return out;
}

Volume void_region(const Volume &image, const Volume &mask) {
  require_same_shape(image, mask, "void_region image/mask");
  Volume out = image;
  const auto m = mask.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (m[i] > 0.5f) {
      dst[i] = 0.0f;
    }
  }
  return out;
}

Volume zero_where_zero(const Volume &v, const Volume &reference) {
  require_same_shape(v, reference, "zero_where_zero");
  Volume out = v;
  const auto r = reference.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (r[i] == 0.0f) {
      dst[i] = 0.0f;
    }
  }
  return out;
}

void validate(const MaskedSample &sample) {
  require_same_shape(sample.image, sample.mask, "sample image/mask");
  if (sample.target) {
    require_same_shape(sample.image, *sample.target, "sample image/target");
  }
  const auto img = sample.image.data();
  const auto m = sample.mask.data();
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (m[i] > 0.5f && img[i] != 0.0f) {
      fail(ErrorCode::ShapeMismatch, "sample image is not voided under the mask");
    }
  }
}

MaskedSample normalize_sample(const Volume &image, const Volume &mask,
                              const std::optional<Volume> &target, StatsDomain domain,
                              bool unit_range) {
  const Volume voided = void_region(image, mask);
  MaskedSample s;
  s.stats = unit_range ? unit_range_stats(voided, domain) : zscore_stats(voided, domain);
  s.mask = mask;
  const bool keep_background = domain == StatsDomain::NonzeroVoxels;
  Volume normalized = apply_normalization(voided, s.stats);
  s.image = keep_background ? zero_where_zero(normalized, voided) : void_region(normalized, mask);
  if (target) {
    require_same_shape(image, *target, "normalize_sample image/target");
    Volume t = apply_normalization(*target, s.stats);
    s.target = keep_background ? zero_where_zero(t, *target) : t;
  }
  return s;
}

} // namespace inpaint::prep
