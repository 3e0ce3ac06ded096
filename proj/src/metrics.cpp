#include "inpaint/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <regex>
#include <sstream>

#include "inpaint/error.hpp"

namespace inpaint::metrics {

std::string to_string(RegionKind kind) {
  switch (kind) {
  case RegionKind::WholeVolume: return "whole-volume";
  case RegionKind::MaskBoundingBox: return "mask-bounding-box";
  case RegionKind::MaskVoxels: return "mask-voxels";
  }
  return "?";
}

RegionKind region_kind_from_string(const std::string &text) {
  for (auto k : {RegionKind::WholeVolume, RegionKind::MaskBoundingBox, RegionKind::MaskVoxels}) {
    if (to_string(k) == text) return k;
  }
  fail(ErrorCode::ConfigError, "unknown region '" + text + "'");
}

bool Box::empty() const {
  for (int a = 0; a < 3; ++a) {
    if (hi[a] <= lo[a]) return true;
  }
  return false;
}

Box mask_bounding_box(const Volume &mask) {
  const auto &d = mask.dims();
  Box b{{d[0], d[1], d[2]}, {0, 0, 0}};
  for (std::int64_t z = 0; z < d[2]; ++z) {
    for (std::int64_t y = 0; y < d[1]; ++y) {
      for (std::int64_t x = 0; x < d[0]; ++x) {
        if (mask.at(x, y, z) > 0.5f) {
          const std::int64_t p[3] = {x, y, z};
          for (int a = 0; a < 3; ++a) {
            b.lo[a] = std::min(b.lo[a], p[a]);
            b.hi[a] = std::max(b.hi[a], p[a] + 1);
          }
        }
      }
    }
  }
  if (b.empty()) {
    fail(ErrorCode::EmptyMask, "mask has no voxels");
  }
  return b;
}

Box dilate_to(const Box &box, const Dims3 &minimum, const Dims3 &dims) {
  Box out = box;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t need = std::min(minimum[a], dims[a]);
    std::int64_t grow = need - out.extent(a);
    if (grow <= 0) continue;
    out.lo[a] -= grow / 2;
    out.hi[a] += grow - grow / 2;
    if (out.lo[a] < 0) {
      out.hi[a] -= out.lo[a];
      out.lo[a] = 0;
    }
    if (out.hi[a] > dims[a]) {
      out.lo[a] -= out.hi[a] - dims[a];
      out.hi[a] = dims[a];
    }
    out.lo[a] = std::max<std::int64_t>(out.lo[a], 0);
  }
  return out;
}

std::vector<double> SsimWindow::taps(int axis) const {
  const std::int64_t n = extent[axis];
  std::vector<double> w(static_cast<std::size_t>(n));
  const double c = 0.5 * static_cast<double>(n - 1);
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(i) - c;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += w[static_cast<std::size_t>(i)];
  }
  for (auto &v : w) v /= total;
  return w;
}

namespace {

template <class F> void for_region(const Volume &ref, const Region &region, F &&f) {
  const auto &d = ref.dims();
  if (region.kind == RegionKind::WholeVolume) {
    for (std::int64_t i = 0; i < ref.size(); ++i) f(i);
    return;
  }
  if (region.mask == nullptr) {
    fail(ErrorCode::EmptyRegion, "mask region without a mask");
  }
  require_same_shape(ref, *region.mask, "region mask");
  if (region.kind == RegionKind::MaskVoxels) {
    const auto m = region.mask->data();
    for (std::int64_t i = 0; i < ref.size(); ++i) {
      if (m[static_cast<std::size_t>(i)] > 0.5f) f(i);
    }
    return;
  }
  const Box b = mask_bounding_box(*region.mask);
  for (std::int64_t z = b.lo[2]; z < b.hi[2]; ++z) {
    for (std::int64_t y = b.lo[1]; y < b.hi[1]; ++y) {
      for (std::int64_t x = b.lo[0]; x < b.hi[0]; ++x) {
        f(x + d[0] * (y + d[1] * z));
      }
    }
  }
}

// Valid-mode 1D correlation along one axis of an x-fastest grid.
std::vector<double> filter_axis(const std::vector<double> &in, Dims3 &dims, int axis,
                                const std::vector<double> &taps) {
  const std::int64_t k = static_cast<std::int64_t>(taps.size());
  Dims3 od = dims;
  od[axis] = dims[axis] - k + 1;
  const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? dims[0] : dims[0] * dims[1]);
  std::vector<double> out(static_cast<std::size_t>(od[0] * od[1] * od[2]), 0.0);
  std::size_t o = 0;
  for (std::int64_t z = 0; z < od[2]; ++z) {
    for (std::int64_t y = 0; y < od[1]; ++y) {
      for (std::int64_t x = 0; x < od[0]; ++x) {
        const std::int64_t base = x + dims[0] * (y + dims[1] * z);
        double acc = 0.0;
        for (std::int64_t j = 0; j < k; ++j) {
          acc += taps[static_cast<std::size_t>(j)] * in[static_cast<std::size_t>(base + j * stride)];
        }
        out[o++] = acc;
      }
    }
  }
  dims = od;
  return out;
}

std::vector<double> smooth(std::vector<double> v, Dims3 dims, const SsimWindow &w) {
  for (int a = 0; a < 3; ++a) {
    v = filter_axis(v, dims, a, w.taps(a));
  }
  return v;
}

} // namespace

double mse(const Volume &pred, const Volume &ref, const Region &region) {
  require_same_shape(pred, ref, "mse operands");
  const auto p = pred.data();
  const auto r = ref.data();
  double acc = 0.0;
  std::int64_t n = 0;
  for_region(ref, region, [&](std::int64_t i) {
    const double d = static_cast<double>(p[static_cast<std::size_t>(i)]) -
                     static_cast<double>(r[static_cast<std::size_t>(i)]);
    acc += d * d;
    ++n;
  });
  if (n == 0) {
    fail(ErrorCode::EmptyRegion, "metric region has no voxels");
  }
  return acc / static_cast<double>(n);
}

double psnr_from_mse(double mse, double data_range) {
  if (!(data_range > 0.0) || !std::isfinite(data_range)) {
    fail(ErrorCode::BadRange, "PSNR needs a positive data range");
  }
  const double peak = data_range * data_range;
  if (mse < peak * 1e-10) {
    return kPsnrCap;
  }
  return 10.0 * std::log10(peak / mse);
}

double psnr(const Volume &pred, const Volume &ref, const Region &region, double data_range) {
  return psnr_from_mse(mse(pred, ref, region), data_range);
}

double ssim(const Volume &pred, const Volume &ref, const Box &box, double data_range,
            const SsimWindow &window) {
  require_same_shape(pred, ref, "ssim operands");
  if (!(data_range > 0.0)) {
    fail(ErrorCode::BadRange, "SSIM needs a positive data range");
  }
  const auto &d = ref.dims();
  for (int a = 0; a < 3; ++a) {
    if (box.lo[a] < 0 || box.hi[a] > d[a] || box.extent(a) < window.extent[a]) {
      fail(ErrorCode::RegionTooSmall, "SSIM region is smaller than the window");
    }
  }
  const Dims3 bd{box.extent(0), box.extent(1), box.extent(2)};
  const std::size_t n = static_cast<std::size_t>(bd[0] * bd[1] * bd[2]);
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  std::size_t i = 0;
  for (std::int64_t z = box.lo[2]; z < box.hi[2]; ++z) {
    for (std::int64_t yy_ = box.lo[1]; yy_ < box.hi[1]; ++yy_) {
      for (std::int64_t xx_ = box.lo[0]; xx_ < box.hi[0]; ++xx_) {
        const double a = pred.at(xx_, yy_, z);
        const double b = ref.at(xx_, yy_, z);
        x[i] = a;
        y[i] = b;
        xx[i] = a * a;
        yy[i] = b * b;
        xy[i] = a * b;
        ++i;
      }
    }
  }
  const auto mx = smooth(std::move(x), bd, window);
  const auto my = smooth(std::move(y), bd, window);
  const auto mxx = smooth(std::move(xx), bd, window);
  const auto myy = smooth(std::move(yy), bd, window);
  const auto mxy = smooth(std::move(xy), bd, window);
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  double total = 0.0;
  for (std::size_t j = 0; j < mx.size(); ++j) {
    const double vx = mxx[j] - mx[j] * mx[j];
    const double vy = myy[j] - my[j] * my[j];
    const double cxy = mxy[j] - mx[j] * my[j];
    total += ((2.0 * mx[j] * my[j] + c1) * (2.0 * cxy + c2)) /
             ((mx[j] * mx[j] + my[j] * my[j] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

double region_range(const Volume &ref, const Region &region) {
  const auto r = ref.data();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for_region(ref, region, [&](std::int64_t i) {
    const double v = r[static_cast<std::size_t>(i)];
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  });
  if (lo > hi) {
    fail(ErrorCode::EmptyRegion, "metric region has no voxels");
  }
  return hi - lo;
}

MetricsResult evaluate_sample(const Volume &pred, const Volume &ref, const Volume &mask,
                              const EvalOptions &options) {
  require_same_shape(pred, ref, "prediction and reference");
  require_same_shape(ref, mask, "reference and mask");
  const Box mbox = mask_bounding_box(mask); // also rejects an empty mask

  MetricsResult out;
  out.region = options.region;
  Region region = Region::whole();
  Box box{{0, 0, 0}, ref.dims()};
  if (options.region == RegionKind::MaskVoxels) {
    region = Region::voxels(mask);
    box = dilate_to(mbox, options.window.extent, ref.dims());
  } else if (options.region == RegionKind::MaskBoundingBox) {
    region = Region::bounding_box(mask);
    box = dilate_to(mbox, options.window.extent, ref.dims());
  }
  double range = options.fixed_range ? *options.fixed_range : region_range(ref, region);
  if (!(range > 0.0)) {
    range = 1.0; // constant reference region: fall back to unit range
  }
  out.data_range = range;
  out.mse = mse(pred, ref, region);
  out.psnr = psnr_from_mse(out.mse, range);
  out.ssim = ssim(pred, ref, box, range, options.window);
  return out;
}

Summary summarize(const std::vector<double> &values) {
  if (values.empty()) {
    fail(ErrorCode::EmptyInput, "cannot summarize zero values");
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return {mean, std::sqrt(var)};
}

MetricsReport aggregate(std::vector<MetricsResult> results, const std::string &label) {
  if (results.empty()) {
    fail(ErrorCode::EmptyInput, "no results to aggregate for '" + label + "'");
  }
  std::vector<double> s, p, m;
  for (const auto &r : results) {
    s.push_back(r.ssim);
    p.push_back(r.psnr);
    m.push_back(r.mse);
  }
  MetricsReport rep;
  rep.model = label;
  rep.ssim = summarize(s);
  rep.psnr = summarize(p);
  rep.mse = summarize(m);
  rep.results = std::move(results);
  return rep;
}

namespace {

std::string cell(const Summary &s) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.4f ± %.4f", s.mean, s.std);
  return buf;
}

// Display width, counting each UTF-8 sequence as one column.
std::size_t columns(const std::string &s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string pad(const std::string &s, std::size_t width) {
  const std::size_t w = columns(s);
  return w >= width ? s : s + std::string(width - w, ' ');
}

std::string join_row(const std::vector<std::string> &cells, const std::vector<std::size_t> &widths) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += "  ";
    line += i + 1 == cells.size() ? cells[i] : pad(cells[i], widths[i]);
  }
  return line;
}

} // namespace

std::string render_row(const MetricsReport &r) {
  return r.model + "  " + cell(r.ssim) + "  " + cell(r.psnr) + "  " + cell(r.mse);
}

std::string render_table(const std::vector<MetricsReport> &reports) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Model", "SSIM", "PSNR (dB)", "MSE"});
  for (const auto &r : reports) {
    rows.push_back({r.model, cell(r.ssim), cell(r.psnr), cell(r.mse)});
  }
  std::vector<std::size_t> widths(4, 0);
  for (const auto &row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], columns(row[i]));
  }
  std::string out;
  for (const auto &row : rows) {
    out += join_row(row, widths) + "\n";
  }
  return out;
}

std::vector<TableRow> parse_table(const std::string &text) {
  static const std::string num = "(-?[0-9]+(?:\\.[0-9]+)?|nan|-?inf)";
  static const std::regex row_re("^(.*?) {2,}" + num + " ± " + num + " +" + num + " ± " + num +
                                 " +" + num + " ± " + num + "\\s*$");
  std::vector<TableRow> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::smatch m;
    if (!std::regex_match(line, m, row_re)) continue;
    TableRow r;
    r.model = m[1].str();
    r.ssim = {std::stod(m[2].str()), std::stod(m[3].str())};
    r.psnr = {std::stod(m[4].str()), std::stod(m[5].str())};
    r.mse = {std::stod(m[6].str()), std::stod(m[7].str())};
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string render_csv(const std::vector<MetricsReport> &reports) {
  std::string out = "sample_id,model,ssim,psnr_db,mse,region\n";
  char buf[256];
  for (const auto &rep : reports) {
    for (const auto &r : rep.results) {
      std::snprintf(buf, sizeof buf, ",%.10g,%.10g,%.10g,", r.ssim, r.psnr, r.mse);
      out += r.sample_id + "," + rep.model + buf + to_string(r.region) + "\n";
    }
  }
  return out;
}

} // namespace inpaint::metrics
