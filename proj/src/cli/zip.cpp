#include "inpaint/cli/zip.hpp"

#include <fstream>
#include <iterator>
#include <zlib.h>

#include "inpaint/error.hpp"

namespace inpaint::cli {

namespace {

// 1980-01-01 00:00, the zip epoch.
constexpr std::uint16_t kDosTime = 0;
constexpr std::uint16_t kDosDate = (1 << 5) | 1;

void put16(std::vector<std::uint8_t> &out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
}

void put32(std::vector<std::uint8_t> &out, std::uint32_t v) {
  put16(out, v & 0xffff);
  put16(out, v >> 16);
}

std::uint32_t get16(const std::vector<std::uint8_t> &in, std::size_t at) {
  return static_cast<std::uint32_t>(in[at]) | (static_cast<std::uint32_t>(in[at + 1]) << 8);
}

std::uint32_t get32(const std::vector<std::uint8_t> &in, std::size_t at) {
  return get16(in, at) | (get16(in, at + 2) << 16);
}

std::uint32_t crc_of(const std::vector<std::uint8_t> &data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < data.size()) {
    const std::size_t n = std::min<std::size_t>(data.size() - done, 1u << 30);
    crc = crc32(crc, data.data() + done, static_cast<uInt>(n));
    done += n;
  }
  return static_cast<std::uint32_t>(crc);
}

} // namespace

void write_zip(const std::string &path, const std::vector<ZipEntry> &entries) {
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> central;
  for (const auto &e : entries) {
    if (e.data.size() > 0xffffffffu || out.size() > 0xffffffffu) {
      fail(ErrorCode::IoFailure, "zip entry too large: " + e.name);
    }
    const std::uint32_t crc = crc_of(e.data);
    const auto size = static_cast<std::uint32_t>(e.data.size());
    const auto offset = static_cast<std::uint32_t>(out.size());
    put32(out, 0x04034b50);
    put16(out, 20);
    put16(out, 0);
    put16(out, 0); // stored
    put16(out, kDosTime);
    put16(out, kDosDate);
    put32(out, crc);
    put32(out, size);
    put32(out, size);
    put16(out, static_cast<std::uint32_t>(e.name.size()));
    put16(out, 0);
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.insert(out.end(), e.data.begin(), e.data.end());

    put32(central, 0x02014b50);
    put16(central, 20);
    put16(central, 20);
    put16(central, 0);
    put16(central, 0);
    put16(central, kDosTime);
    put16(central, kDosDate);
    put32(central, crc);
    put32(central, size);
    put32(central, size);
    put16(central, static_cast<std::uint32_t>(e.name.size()));
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put32(central, 0);
    put32(central, offset);
    central.insert(central.end(), e.name.begin(), e.name.end());
  }
  const auto cd_offset = static_cast<std::uint32_t>(out.size());
  out.insert(out.end(), central.begin(), central.end());
  put32(out, 0x06054b50);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint32_t>(entries.size()));
  put16(out, static_cast<std::uint32_t>(entries.size()));
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, cd_offset);
  put16(out, 0);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    fail(ErrorCode::IoFailure, "cannot write " + path);
  }
  f.write(reinterpret_cast<const char *>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) {
    fail(ErrorCode::IoFailure, "write failed for " + path);
  }
}

std::vector<ZipEntry> read_zip(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    fail(ErrorCode::IoFailure, "cannot open " + path);
  }
  const std::vector<std::uint8_t> in((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
  if (in.size() < 22) {
    fail(ErrorCode::TruncatedFile, path + ": too short for a zip archive");
  }
  // End-of-central-directory record; no archive comment is written, but
  // scan back a little in case one exists.
  std::size_t eocd = std::string::npos;
  for (std::size_t i = in.size() - 22 + 1; i-- > 0 && in.size() - i <= 22 + 0xffff;) {
    if (get32(in, i) == 0x06054b50) {
      eocd = i;
      break;
    }
  }
  if (eocd == std::string::npos) {
    if (in.size() >= 4 && get32(in, 0) == 0x04034b50) {
      fail(ErrorCode::TruncatedFile, path + ": zip directory missing (truncated)");
    }
    fail(ErrorCode::BadMagic, path + ": not a zip archive");
  }
  const std::uint32_t count = get16(in, eocd + 10);
  const std::uint32_t cd_size = get32(in, eocd + 12);
  std::size_t at = get32(in, eocd + 16);
  if (static_cast<std::size_t>(at) + cd_size > eocd) {
    fail(ErrorCode::TruncatedFile, path + ": central directory out of range");
  }
  std::vector<ZipEntry> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    if (at + 46 > eocd || get32(in, at) != 0x02014b50) {
      fail(ErrorCode::TruncatedFile, path + ": bad central directory entry");
    }
    const std::uint32_t method = get16(in, at + 10);
    const std::uint32_t crc = get32(in, at + 16);
    const std::uint32_t size = get32(in, at + 20);
    const std::uint32_t name_len = get16(in, at + 28);
    const std::uint32_t extra_len = get16(in, at + 30);
    const std::uint32_t comment_len = get16(in, at + 32);
    const std::uint32_t local = get32(in, at + 42);
    if (at + 46 + name_len > eocd) {
      fail(ErrorCode::TruncatedFile, path + ": bad central directory entry");
    }
    ZipEntry e;
    e.name.assign(in.begin() + static_cast<std::ptrdiff_t>(at + 46),
                  in.begin() + static_cast<std::ptrdiff_t>(at + 46 + name_len));
    at += 46 + name_len + extra_len + comment_len;
    if (method != 0) {
      fail(ErrorCode::UnsupportedDatatype, path + ": entry " + e.name + " is compressed");
    }
    if (static_cast<std::size_t>(local) + 30 > in.size() || get32(in, local) != 0x04034b50) {
      fail(ErrorCode::TruncatedFile, path + ": bad local header for " + e.name);
    }
    const std::size_t data_at = local + 30 + get16(in, local + 26) + get16(in, local + 28);
    if (data_at + size > in.size()) {
      fail(ErrorCode::TruncatedFile, path + ": entry " + e.name + " is truncated");
    }
    e.data.assign(in.begin() + static_cast<std::ptrdiff_t>(data_at),
                  in.begin() + static_cast<std::ptrdiff_t>(data_at + size));
    if (crc_of(e.data) != crc) {
      fail(ErrorCode::TruncatedFile, path + ": CRC mismatch in " + e.name);
    }
    out.push_back(std::move(e));
  }
  return out;
}

} // namespace inpaint::cli
