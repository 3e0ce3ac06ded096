#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace inpaint {

using Dims3 = std::array<std::int64_t, 3>;
using Affine = std::array<std::array<double, 4>, 4>;

Affine identity_affine();
Affine scaling_affine(const std::array<double, 3> &spacing);

/// A 3D scalar grid with voxel spacing and a voxel-to-world affine.
///
/// Storage is x-fastest (NIfTI order): index = x + dx*(y + dy*z).
/// A 2D image is a Volume with dims[2] == 1.
class Volume {
public:
  Volume() = default;
  explicit Volume(Dims3 dims, float fill = 0.0f);
  Volume(Dims3 dims, std::vector<float> data);

  const Dims3 &dims() const { return dims_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool same_shape(const Volume &other) const { return dims_ == other.dims_; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  std::int64_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return x + dims_[0] * (y + dims_[1] * z);
  }
  float &at(std::int64_t x, std::int64_t y, std::int64_t z) {
    return data_[static_cast<std::size_t>(index(x, y, z))];
  }
  float at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return data_[static_cast<std::size_t>(index(x, y, z))];
  }
  bool contains(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims_[0] && y < dims_[1] &&
           z < dims_[2];
  }

  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  Affine affine = identity_affine();
  std::string name;

  /// Copies spacing, affine and name from another volume.
  void copy_geometry(const Volume &from);

  /// Throws ShapeMismatch/BadRange/NonFiniteData when an invariant is broken.
  void validate() const;

private:
  Dims3 dims_{0, 0, 0};
  std::vector<float> data_;
};

/// Throws ShapeMismatch naming `what` unless all volumes share dims.
void require_same_shape(const Volume &a, const Volume &b, const char *what);

} // namespace inpaint
