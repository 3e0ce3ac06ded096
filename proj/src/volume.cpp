#include "inpaint/volume.hpp"

#include <cmath>
#include <sstream>

#include "inpaint/error.hpp"

namespace inpaint {

namespace {

std::string dims_text(const Dims3 &d) {
  std::ostringstream os;
  os << d[0] << "x" << d[1] << "x" << d[2];
  return os.str();
}

std::size_t checked_count(const Dims3 &dims) {
  for (auto d : dims) {
    if (d < 1) {
      fail(ErrorCode::ShapeMismatch, "volume dims must be >= 1, got " + dims_text(dims));
    }
  }
  return static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
}

} // namespace

Affine identity_affine() {
  Affine a{};
  for (int i = 0; i < 4; ++i) {
    a[i][i] = 1.0;
  }
  return a;
}

Affine scaling_affine(const std::array<double, 3> &spacing) {
  Affine a = identity_affine();
  for (int i = 0; i < 3; ++i) {
    a[i][i] = spacing[i];
  }
  return a;
}

Volume::Volume(Dims3 dims, float fill)
    : dims_(dims), data_(checked_count(dims), fill) {}

Volume::Volume(Dims3 dims, std::vector<float> data)
    : dims_(dims), data_(std::move(data)) {
  if (data_.size() != checked_count(dims)) {
    fail(ErrorCode::ShapeMismatch, "data length " + std::to_string(data_.size()) +
                                       " does not match dims " + dims_text(dims));
  }
}

void Volume::copy_geometry(const Volume &from) {
  spacing = from.spacing;
  affine = from.affine;
  name = from.name;
}

void Volume::validate() const {
  if (data_.size() != checked_count(dims_)) {
    fail(ErrorCode::ShapeMismatch, "data length mismatch for " + dims_text(dims_));
  }
  for (double s : spacing) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      fail(ErrorCode::BadRange, "spacing components must be positive");
    }
  }
  if (affine[3][0] != 0.0 || affine[3][1] != 0.0 || affine[3][2] != 0.0 ||
      affine[3][3] != 1.0) {
    fail(ErrorCode::BadRange, "affine last row must be (0,0,0,1)");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      fail(ErrorCode::NonFiniteData, "non-finite intensity at voxel " + std::to_string(i));
    }
  }
}

void require_same_shape(const Volume &a, const Volume &b, const char *what) {
  if (!a.same_shape(b)) {
    fail(ErrorCode::ShapeMismatch, std::string(what) + ": " + dims_text(a.dims()) +
                                       " vs " + dims_text(b.dims()));
  }
}

} // namespace inpaint
