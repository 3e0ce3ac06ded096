#include "inpaint/volume_io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <zlib.h>

#include "inpaint/error.hpp"

namespace inpaint::io {

namespace {

static_assert(std::endian::native == std::endian::little,
              "volume I/O assumes a little-endian host");

template <typename T> T load(std::span<const unsigned char> bytes, std::size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

template <typename T> void store(unsigned char *bytes, std::size_t offset, T value) {
  std::memcpy(bytes + offset, &value, sizeof(T));
}

std::string lower_name(const std::filesystem::path &path) {
  std::string name = path.filename().string();
  for (auto &c : name) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return name;
}

bool ends_with(const std::string &s, const std::string &suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// zlib reader; handles both gzip and plain files transparently.
class GzReader {
public:
  explicit GzReader(const std::filesystem::path &path)
      : path_(path), file_(gzopen(path.c_str(), "rb")) {
    if (file_ == nullptr) {
      fail(ErrorCode::IoFailure, "cannot open " + path.string());
    }
  }
  ~GzReader() { gzclose(file_); }
  GzReader(const GzReader &) = delete;
  GzReader &operator=(const GzReader &) = delete;

  /// Reads up to n bytes; returns the count actually read.
  std::size_t read(unsigned char *dst, std::size_t n) {
    std::size_t total = 0;
    while (total < n) {
      const auto chunk = static_cast<unsigned>(std::min<std::size_t>(n - total, 1u << 30));
      const int got = gzread(file_, dst + total, chunk);
      if (got < 0) {
        fail(ErrorCode::IoFailure, "read error in " + path_.string());
      }
      if (got == 0) {
        break;
      }
      total += static_cast<std::size_t>(got);
    }
    return total;
  }

  void skip(std::size_t n) {
    std::vector<unsigned char> sink(std::min<std::size_t>(n, 1 << 16));
    while (n > 0) {
      const std::size_t want = std::min(n, sink.size());
      if (read(sink.data(), want) != want) {
        fail(ErrorCode::TruncatedFile, path_.string() + " ends before vox_offset");
      }
      n -= want;
    }
  }

private:
  std::filesystem::path path_;
  gzFile file_;
};

void write_bytes(const std::filesystem::path &path, std::span<const unsigned char> header,
                 std::span<const unsigned char> payload, bool gzip) {
  if (gzip) {
    gzFile f = gzopen(path.c_str(), "wb6");
    if (f == nullptr) {
      fail(ErrorCode::IoFailure, "cannot create " + path.string());
    }
    bool ok = gzwrite(f, header.data(), static_cast<unsigned>(header.size())) ==
              static_cast<int>(header.size());
    std::size_t done = 0;
    while (ok && done < payload.size()) {
      const auto chunk = static_cast<unsigned>(std::min<std::size_t>(payload.size() - done, 1u << 30));
      ok = gzwrite(f, payload.data() + done, chunk) == static_cast<int>(chunk);
      done += chunk;
    }
    if (gzclose(f) != Z_OK || !ok) {
      fail(ErrorCode::IoFailure, "write failed for " + path.string());
    }
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    fail(ErrorCode::IoFailure, "cannot create " + path.string());
  }
  out.write(reinterpret_cast<const char *>(header.data()), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char *>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) {
    fail(ErrorCode::IoFailure, "write failed for " + path.string());
  }
}

std::span<const unsigned char> float_bytes(const Volume &v) {
  const auto data = v.data();
  return {reinterpret_cast<const unsigned char *>(data.data()), data.size() * sizeof(float)};
}

void check_finite(const Volume &v, const std::filesystem::path &path) {
  const auto data = v.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      fail(ErrorCode::NonFiniteData,
           path.string() + ": non-finite value at voxel " + std::to_string(i));
    }
  }
}

Volume read_nifti(const std::filesystem::path &path) {
  GzReader reader(path);
  std::array<unsigned char, kNiftiHeaderSize> raw{};
  if (reader.read(raw.data(), raw.size()) != raw.size()) {
    fail(ErrorCode::TruncatedFile, path.string() + " is shorter than a NIfTI-1 header");
  }
  const NiftiHeader hdr = decode_nifti_header(raw);

  const Dims3 dims = {hdr.dim[1], hdr.dim[2], hdr.dim[3]};
  const std::size_t count = hdr.voxel_count();
  const std::size_t bpv = hdr.bytes_per_voxel();
  std::vector<unsigned char> payload(count * bpv);

  if (hdr.single_file) {
    const auto offset = static_cast<std::size_t>(hdr.vox_offset);
    if (offset < kNiftiHeaderSize) {
      fail(ErrorCode::BadMagic, path.string() + ": vox_offset inside header");
    }
    reader.skip(offset - kNiftiHeaderSize);
    if (reader.read(payload.data(), payload.size()) != payload.size()) {
      fail(ErrorCode::TruncatedFile, path.string() + ": image data shorter than dim product");
    }
  } else {
    std::filesystem::path image_path = path;
    image_path.replace_extension(".img");
    GzReader image(image_path);
    image.skip(static_cast<std::size_t>(hdr.vox_offset));
    if (image.read(payload.data(), payload.size()) != payload.size()) {
      fail(ErrorCode::TruncatedFile, image_path.string() + ": image data shorter than dim product");
    }
  }

  std::vector<float> values(count);
  const std::span<const unsigned char> bytes(payload);
  const bool identity_scale =
      hdr.scl_slope == 0.0f || (hdr.scl_slope == 1.0f && hdr.scl_inter == 0.0f);
  const double slope = hdr.scl_slope;
  const double inter = hdr.scl_inter;
  auto scaled = [&](double stored) -> float {
    return identity_scale ? static_cast<float>(stored)
                          : static_cast<float>(stored * slope + inter);
  };
  switch (hdr.datatype) {
  case NiftiDatatype::UInt8:
    for (std::size_t i = 0; i < count; ++i) values[i] = scaled(bytes[i]);
    break;
  case NiftiDatatype::Int16:
    for (std::size_t i = 0; i < count; ++i) values[i] = scaled(load<std::int16_t>(bytes, 2 * i));
    break;
  case NiftiDatatype::Float32:
    if (identity_scale) {
      std::memcpy(values.data(), payload.data(), payload.size());
    } else {
      for (std::size_t i = 0; i < count; ++i) values[i] = scaled(load<float>(bytes, 4 * i));
    }
    break;
  }

  Volume v(dims, std::move(values));
  for (int i = 0; i < 3; ++i) {
    const double s = std::fabs(static_cast<double>(hdr.pixdim[i + 1]));
    v.spacing[i] = (s > 0.0 && std::isfinite(s)) ? s : 1.0;
  }
  if (hdr.sform_code > 0) {
    Affine a = identity_affine();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        a[r][c] = hdr.srow[r][c];
      }
    }
    v.affine = a;
  } else if (hdr.qform_code > 0) {
    fail(ErrorCode::UnsupportedOrientation,
         path.string() + ": qform-only orientation is not supported (set an sform)");
  } else {
    v.affine = scaling_affine(v.spacing);
  }
  v.name = path.filename().string();
  check_finite(v, path);
  return v;
}

} // namespace

std::size_t NiftiHeader::voxel_count() const {
  return static_cast<std::size_t>(dim[1]) * static_cast<std::size_t>(dim[2]) *
         static_cast<std::size_t>(dim[3]);
}

std::size_t NiftiHeader::bytes_per_voxel() const {
  switch (datatype) {
  case NiftiDatatype::UInt8: return 1;
  case NiftiDatatype::Int16: return 2;
  case NiftiDatatype::Float32: return 4;
  }
  return 0;
}

NiftiHeader decode_nifti_header(std::span<const unsigned char> bytes) {
  if (bytes.size() < kNiftiHeaderSize) {
    fail(ErrorCode::TruncatedFile, "NIfTI header needs 348 bytes");
  }
  const auto sizeof_hdr = load<std::int32_t>(bytes, 0);
  if (sizeof_hdr != 348) {
    if (sizeof_hdr == 0x5C010000) { // 348 byte-swapped
      fail(ErrorCode::BadMagic, "big-endian NIfTI files are not supported");
    }
    fail(ErrorCode::BadMagic, "sizeof_hdr is " + std::to_string(sizeof_hdr) + ", not 348");
  }
  NiftiHeader hdr;
  const char *magic = reinterpret_cast<const char *>(bytes.data() + 344);
  if (std::memcmp(magic, "n+1\0", 4) == 0) {
    hdr.single_file = true;
  } else if (std::memcmp(magic, "ni1\0", 4) == 0) {
    hdr.single_file = false;
  } else {
    fail(ErrorCode::BadMagic, "magic is not n+1 or ni1");
  }
  for (int i = 0; i < 8; ++i) {
    hdr.dim[i] = load<std::int16_t>(bytes, 40 + 2 * i);
    hdr.pixdim[i] = load<float>(bytes, 76 + 4 * i);
  }
  if (hdr.dim[0] != 3 && hdr.dim[0] != 4) {
    fail(ErrorCode::ShapeMismatch, "dim[0] must be 3 or 4, got " + std::to_string(hdr.dim[0]));
  }
  if (hdr.dim[0] == 4 && hdr.dim[4] != 1) {
    fail(ErrorCode::ShapeMismatch, "4D volumes must have a singleton fourth dimension");
  }
  for (int i = 1; i <= 3; ++i) {
    if (hdr.dim[i] < 1) {
      fail(ErrorCode::ShapeMismatch, "dim[" + std::to_string(i) + "] must be >= 1");
    }
  }
  const auto code = load<std::int16_t>(bytes, 70);
  switch (code) {
  case 2: hdr.datatype = NiftiDatatype::UInt8; break;
  case 4: hdr.datatype = NiftiDatatype::Int16; break;
  case 16: hdr.datatype = NiftiDatatype::Float32; break;
  default:
    fail(ErrorCode::UnsupportedDatatype, "datatype code " + std::to_string(code));
  }
  hdr.bitpix = load<std::int16_t>(bytes, 72);
  hdr.vox_offset = load<float>(bytes, 108);
  hdr.scl_slope = load<float>(bytes, 112);
  hdr.scl_inter = load<float>(bytes, 116);
  hdr.qform_code = load<std::int16_t>(bytes, 252);
  hdr.sform_code = load<std::int16_t>(bytes, 254);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      hdr.srow[r][c] = load<float>(bytes, 280 + 16 * r + 4 * c);
    }
  }
  if (!std::isfinite(hdr.scl_slope) || !std::isfinite(hdr.scl_inter)) {
    hdr.scl_slope = 0.0f; // NIfTI-1: non-finite scaling means "no scaling"
    hdr.scl_inter = 0.0f;
  }
  return hdr;
}

std::array<unsigned char, kNiftiHeaderSize> encode_nifti_header(const NiftiHeader &hdr) {
  std::array<unsigned char, kNiftiHeaderSize> raw{};
  unsigned char *p = raw.data();
  store<std::int32_t>(p, 0, 348);
  p[38] = 'r'; // regular
  for (int i = 0; i < 8; ++i) {
    store<std::int16_t>(p, 40 + 2 * i, hdr.dim[i]);
    store<float>(p, 76 + 4 * i, hdr.pixdim[i]);
  }
  store<std::int16_t>(p, 70, static_cast<std::int16_t>(hdr.datatype));
  store<std::int16_t>(p, 72, hdr.bitpix);
  store<float>(p, 108, hdr.vox_offset);
  store<float>(p, 112, hdr.scl_slope);
  store<float>(p, 116, hdr.scl_inter);
  p[123] = 2; // xyzt_units: mm
  store<std::int16_t>(p, 252, hdr.qform_code);
  store<std::int16_t>(p, 254, hdr.sform_code);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      store<float>(p, 280 + 16 * r + 4 * c, hdr.srow[r][c]);
    }
  }
  std::memcpy(p + 344, hdr.single_file ? "n+1\0" : "ni1\0", 4);
  return raw;
}

Volume read_volume(const std::filesystem::path &path) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::IoFailure, "no such file: " + path.string());
  }
  unsigned char magic[4] = {0, 0, 0, 0};
  {
    GzReader probe(path);
    probe.read(magic, 4);
  }
  if (std::memcmp(magic, "RVOL", 4) == 0) {
    return read_rawvol(path);
  }
  return read_nifti(path);
}

void write_volume(const Volume &v, const std::filesystem::path &path) {
  const std::string name = lower_name(path);
  if (ends_with(name, ".rawvol")) {
    write_rawvol(v, path);
    return;
  }
  NiftiHeader hdr;
  hdr.dim = {3, static_cast<std::int16_t>(v.dims()[0]), static_cast<std::int16_t>(v.dims()[1]),
             static_cast<std::int16_t>(v.dims()[2]), 1, 1, 1, 1};
  for (auto d : v.dims()) {
    if (d > INT16_MAX) {
      fail(ErrorCode::ShapeMismatch, "NIfTI-1 dims are limited to 32767");
    }
  }
  hdr.datatype = NiftiDatatype::Float32;
  hdr.bitpix = 32;
  hdr.pixdim = {1.0f, static_cast<float>(v.spacing[0]), static_cast<float>(v.spacing[1]),
                static_cast<float>(v.spacing[2]), 0.0f, 0.0f, 0.0f, 0.0f};
  hdr.vox_offset = 352.0f;
  hdr.scl_slope = 1.0f;
  hdr.scl_inter = 0.0f;
  hdr.qform_code = 0;
  hdr.sform_code = 1;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      hdr.srow[r][c] = static_cast<float>(v.affine[r][c]);
    }
  }
  const auto raw = encode_nifti_header(hdr);
  std::array<unsigned char, kNiftiHeaderSize + 4> header{};
  std::memcpy(header.data(), raw.data(), raw.size()); // 4 trailing zero bytes: no extensions
  write_bytes(path, header, float_bytes(v), ends_with(name, ".gz"));
}

Volume binarize(const Volume &v) {
  Volume mask(v.dims());
  mask.copy_geometry(v);
  const auto src = v.data();
  auto dst = mask.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = src[i] > 0.5f ? 1.0f : 0.0f;
  }
  return mask;
}

Volume read_mask(const std::filesystem::path &path) { return binarize(read_volume(path)); }

Volume read_rawvol(const std::filesystem::path &path) {
  GzReader reader(path);
  std::array<unsigned char, kRawvolHeaderSize> raw{};
  if (reader.read(raw.data(), raw.size()) != raw.size()) {
    fail(ErrorCode::TruncatedFile, path.string() + " is shorter than a rawvol header");
  }
  const std::span<const unsigned char> bytes(raw);
  if (std::memcmp(raw.data(), "RVOL", 4) != 0) {
    fail(ErrorCode::BadMagic, path.string() + " is not a rawvol file");
  }
  const auto version = load<std::uint32_t>(bytes, 4);
  if (version != kRawvolVersion) {
    fail(ErrorCode::VersionMismatch, "rawvol version " + std::to_string(version));
  }
  Dims3 dims{};
  for (int i = 0; i < 3; ++i) {
    dims[i] = load<std::int32_t>(bytes, 8 + 4 * i);
    if (dims[i] < 1) {
      fail(ErrorCode::ShapeMismatch, path.string() + ": rawvol dims must be >= 1");
    }
  }
  std::array<double, 3> spacing{};
  for (int i = 0; i < 3; ++i) {
    spacing[i] = load<double>(bytes, 20 + 8 * i);
  }
  const auto count = static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
  std::vector<float> values(count);
  if (reader.read(reinterpret_cast<unsigned char *>(values.data()), count * 4) != count * 4) {
    fail(ErrorCode::TruncatedFile, path.string() + ": payload shorter than dims");
  }
  Volume v(dims, std::move(values));
  v.spacing = spacing;
  v.affine = scaling_affine(spacing);
  v.name = path.filename().string();
  v.validate();
  return v;
}

void write_rawvol(const Volume &v, const std::filesystem::path &path) {
  std::array<unsigned char, kRawvolHeaderSize> header{};
  unsigned char *p = header.data();
  std::memcpy(p, "RVOL", 4);
  store<std::uint32_t>(p, 4, kRawvolVersion);
  for (int i = 0; i < 3; ++i) {
    store<std::int32_t>(p, 8 + 4 * i, static_cast<std::int32_t>(v.dims()[i]));
    store<double>(p, 20 + 8 * i, v.spacing[i]);
  }
  write_bytes(path, header, float_bytes(v), false);
}

} // namespace inpaint::io
