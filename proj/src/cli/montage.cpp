#include "inpaint/cli/montage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "inpaint/error.hpp"

namespace inpaint::cli {

namespace {

struct Plane {
  std::int64_t w = 0, h = 0;
  std::vector<double> v;
};

// Plane axes follow prep::extract_slices.
Plane take_slice(const Volume &vol, int axis, std::int64_t k) {
  const auto &d = vol.dims();
  if (axis < 0 || axis > 2) {
    fail(ErrorCode::BadSliceIndex, "slice axis must be 0, 1 or 2");
  }
  if (k < 0 || k >= d[axis]) {
    fail(ErrorCode::BadSliceIndex, "slice " + std::to_string(k) + " outside [0, " +
                                       std::to_string(d[axis]) + ") on axis " +
                                       std::to_string(axis));
  }
  const int a0 = axis == 0 ? 1 : 0;
  const int a1 = axis == 2 ? 1 : 2;
  Plane p;
  p.w = d[a0];
  p.h = d[a1];
  p.v.resize(static_cast<std::size_t>(p.w * p.h));
  for (std::int64_t j = 0; j < p.h; ++j) {
    for (std::int64_t i = 0; i < p.w; ++i) {
      std::int64_t c[3];
      c[axis] = k;
      c[a0] = i;
      c[a1] = j;
      p.v[static_cast<std::size_t>(j * p.w + i)] = vol.at(c[0], c[1], c[2]);
    }
  }
  return p;
}

} // namespace

GrayImage montage(const std::vector<Volume> &volumes, int axis, std::int64_t index) {
  if (volumes.empty()) {
    fail(ErrorCode::EmptyInput, "montage needs at least one volume");
  }
  std::vector<Plane> planes;
  GrayImage img;
  for (const auto &v : volumes) {
    planes.push_back(take_slice(v, axis, index));
    img.width += planes.back().w;
    img.height = std::max(img.height, planes.back().h);
  }
  img.width += static_cast<std::int64_t>(planes.size()) - 1;
  img.pixels.assign(static_cast<std::size_t>(img.width * img.height), 0);
  std::int64_t x0 = 0;
  for (std::size_t t = 0; t < planes.size(); ++t) {
    const Plane &p = planes[t];
    const auto [lo, hi] = std::minmax_element(p.v.begin(), p.v.end());
    const double range = *hi - *lo;
    for (std::int64_t j = 0; j < p.h; ++j) {
      for (std::int64_t i = 0; i < p.w; ++i) {
        const double v = p.v[static_cast<std::size_t>(j * p.w + i)];
        const double g = range > 0.0 ? std::round((v - *lo) / range * 255.0) : 128.0;
        img.pixels[static_cast<std::size_t>(j * img.width + x0 + i)] = static_cast<std::uint8_t>(g);
      }
    }
    x0 += p.w;
    if (t + 1 < planes.size()) {
      for (std::int64_t j = 0; j < img.height; ++j) {
        img.pixels[static_cast<std::size_t>(j * img.width + x0)] = kSeparatorValue;
      }
      x0 += 1;
    }
  }
  return img;
}

std::string encode_pgm(const GrayImage &image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n255\n";
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

void write_pgm(const std::string &path, const GrayImage &image) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    fail(ErrorCode::IoFailure, "cannot write " + path);
  }
  const std::string bytes = encode_pgm(image);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) {
    fail(ErrorCode::IoFailure, "write failed for " + path);
  }
}

} // namespace inpaint::cli
