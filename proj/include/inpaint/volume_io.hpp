#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>

#include "inpaint/volume.hpp"

namespace inpaint::io {

enum class NiftiDatatype : std::int16_t {
  UInt8 = 2,
  Int16 = 4,
  Float32 = 16,
};

inline constexpr std::size_t kNiftiHeaderSize = 348;
inline constexpr std::size_t kRawvolHeaderSize = 64;
inline constexpr std::uint32_t kRawvolVersion = 1;

/// The subset of the NIfTI-1 header this toolkit reads and writes.
struct NiftiHeader {
  std::array<std::int16_t, 8> dim{};
  NiftiDatatype datatype = NiftiDatatype::Float32;
  std::int16_t bitpix = 32;
  std::array<float, 8> pixdim{};
  float vox_offset = 352.0f;
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  std::array<std::array<float, 4>, 3> srow{};
  bool single_file = true; ///< magic "n+1" (true) or "ni1" (false)

  std::size_t voxel_count() const;
  std::size_t bytes_per_voxel() const;
};

/// Decodes a little-endian 348-byte header. Throws BadMagic,
/// UnsupportedDatatype or ShapeMismatch for headers outside the subset.
NiftiHeader decode_nifti_header(std::span<const unsigned char> bytes);
std::array<unsigned char, kNiftiHeaderSize> encode_nifti_header(const NiftiHeader &hdr);

/// Reads .nii, .nii.gz, .hdr/.img pairs or .rawvol (detected by content).
/// Output intensities are float regardless of on-disk datatype.
Volume read_volume(const std::filesystem::path &path);

/// Writes float32 NIfTI-1 (.nii, gzip when the name ends in .gz) or .rawvol,
/// chosen by extension.
void write_volume(const Volume &v, const std::filesystem::path &path);

/// Reads a volume and thresholds it: stored value > 0.5 -> 1, else 0.
Volume read_mask(const std::filesystem::path &path);
Volume binarize(const Volume &v);

Volume read_rawvol(const std::filesystem::path &path);
void write_rawvol(const Volume &v, const std::filesystem::path &path);

} // namespace inpaint::io
