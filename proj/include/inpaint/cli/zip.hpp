#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace inpaint::cli {

struct ZipEntry {
  std::string name;
  std::vector<std::uint8_t> data;
};

/// Writes an uncompressed (stored) zip archive with fixed timestamps, so equal
/// entries give byte-identical files. Throws IoFailure.
void write_zip(const std::string &path, const std::vector<ZipEntry> &entries);

/// Reads a stored zip archive, verifying CRCs. Throws TruncatedFile, BadMagic,
/// IoFailure.
std::vector<ZipEntry> read_zip(const std::string &path);

} // namespace inpaint::cli
