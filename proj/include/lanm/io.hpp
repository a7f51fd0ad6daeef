// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanm/error.hpp"
#include "lanm/tensor.hpp"

namespace lanm::io {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline constexpr std::array<char, 4> kMagic{'L', 'A', 'N', 'M'};
inline constexpr std::uint32_t kFormatVersion = 1;

namespace detail {
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline std::uint64_t get_le(const std::string& in, std::size_t off, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
  return v;
}
}  // namespace detail

/// 16-byte header (magic, version, rows, cols; u32 little-endian) followed by
/// rows*cols little-endian float64 values, row-major.
inline std::string encode_tensor(const Tensor& t) {
  if (t.rows() > std::numeric_limits<std::uint32_t>::max() || t.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw IoError("tensor too large for the LANM format");
  }
  std::string out(kMagic.begin(), kMagic.end());
  out.reserve(16 + 8 * t.size());
  detail::put_u32(out, kFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(t.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(t.cols()));
  for (double v : t.values()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline Tensor decode_tensor(const std::string& bytes, const std::string& what = "tensor") {
  if (bytes.size() < 16 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw IoError(what + ": missing LANM header");
  }
  const auto version = static_cast<std::uint32_t>(detail::get_le(bytes, 4, 4));
  if (version != kFormatVersion) throw IoError(what + ": unsupported format version " + std::to_string(version));
  const auto rows = static_cast<std::size_t>(detail::get_le(bytes, 8, 4));
  const auto cols = static_cast<std::size_t>(detail::get_le(bytes, 12, 4));
  if (bytes.size() != 16 + 8 * rows * cols) throw IoError(what + ": payload length does not match header");
  std::vector<double> data(rows * cols);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::bit_cast<double>(detail::get_le(bytes, 16 + 8 * i, 8));
  return Tensor(rows, cols, std::move(data));
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline void write_tensor(const fs::path& path, const Tensor& t) { write_file(path, encode_tensor(t)); }
inline Tensor read_tensor(const fs::path& path) { return decode_tensor(read_file(path), path.string()); }

inline void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline json tensor_to_json(const Tensor& t) {
  json rows = json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    json row = json::array();
    for (double v : t.row(r)) row.push_back(v);
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Creates `dir`, refusing a non-empty existing directory unless `force`.
inline void prepare_output_dir(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir)) throw IoError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw ConfigError(dir.string() + " is not empty (pass --force to overwrite)");
    }
  }
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

/// Shortest round-trip text for a double, so CSV/JSON output is stable.
inline std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace lanm::io
