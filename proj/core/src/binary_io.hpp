// SPDX-License-Identifier: Apache-2.0
// Helpers shared by the dataset and weights file formats: a single JSON
// header line followed by a little-endian binary blob guarded by CRC-32.
#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "lnnfama/common.hpp"

namespace lnnfama::detail {

class BlobWriter {
 public:
  template <class T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    data_.insert(data_.end(), bytes, bytes + sizeof(T));
  }
  void put_f32(double value) { put(static_cast<float>(value)); }

  const std::vector<unsigned char>& data() const { return data_; }

 private:
  std::vector<unsigned char> data_;
};

class BlobReader {
 public:
  explicit BlobReader(const std::vector<unsigned char>& data) : data_(data) {}

  template <class T>
  T get() {
    if (pos_ + sizeof(T) > data_.size()) throw IntegrityError("blob truncated");
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
  double get_f32() { return static_cast<double>(get<float>()); }
  bool exhausted() const { return pos_ == data_.size(); }

 private:
  const std::vector<unsigned char>& data_;
  std::size_t pos_ = 0;
};

inline std::string crc32_hex(const std::vector<unsigned char>& blob) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded pieces.
  std::size_t offset = 0;
  while (offset < blob.size()) {
    const std::size_t piece = std::min<std::size_t>(blob.size() - offset, 1u << 30);
    crc = crc32(crc, blob.data() + offset, static_cast<uInt>(piece));
    offset += piece;
  }
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

inline void write_artifact(const std::string& path, nlohmann::json header, const std::vector<unsigned char>& blob) {
  header["blob_bytes"] = blob.size();
  header["checksum"] = "crc32:" + crc32_hex(blob);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const std::string line = header.dump();
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.put('\n');
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

struct Artifact {
  nlohmann::json header;
  std::vector<unsigned char> blob;
};

inline Artifact read_artifact(const std::string& path, const std::string& expected_format, int expected_version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IntegrityError("'" + path + "': missing header");
  Artifact a;
  try {
    a.header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("'" + path + "': malformed header: " + e.what());
  }
  if (a.header.value("format", std::string{}) != expected_format)
    throw IntegrityError("'" + path + "': not a " + expected_format + " file");
  if (a.header.value("version", -1) != expected_version)
    throw IntegrityError("'" + path + "': unsupported version " + a.header.value("version", nlohmann::json{}).dump() +
                         " (expected " + std::to_string(expected_version) + ")");
  const auto expected_bytes = a.header.value("blob_bytes", std::uint64_t{0});
  a.blob.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  if (a.blob.size() != expected_bytes)
    throw IntegrityError("'" + path + "': blob has " + std::to_string(a.blob.size()) + " bytes, header declares " +
                         std::to_string(expected_bytes));
  if (a.header.value("checksum", std::string{}) != "crc32:" + crc32_hex(a.blob))
    throw IntegrityError("'" + path + "': checksum mismatch");
  return a;
}

}  // namespace lnnfama::detail
