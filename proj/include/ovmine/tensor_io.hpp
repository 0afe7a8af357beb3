// Copyright 2026 The ovmine Authors.
// SPDX-License-Identifier: Apache-2.0

// MDET binary tensor container.
//
// Layout, little-endian throughout:
//   magic    4 bytes   "MDET"
//   version  u32       1
//   dtype    u8        1 = IEEE-754 binary32
//   rank     u8
//   shape    rank x u64
//   payload  row-major elements
//
// A rank-1 tensor of one element occupies 4 + 4 + 1 + 1 + 8 + 4 = 22 bytes.

#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ovmine/error.hpp"
#include "ovmine/linalg.hpp"

namespace ovmine {

inline constexpr std::array<char, 4> kTensorMagic = {'M', 'D', 'E', 'T'};
inline constexpr std::uint32_t kTensorVersion = 1;

enum class DType : std::uint8_t { kFloat32 = 1 };

struct Tensor {
  DType dtype = DType::kFloat32;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<float> values) {
    return Tensor{DType::kFloat32, {rows, cols}, std::move(values)};
  }

  // Builds a rows x dim tensor from double-valued rows, rounding to binary32.
  static Tensor from_rows(std::span<const Vector> rows, std::size_t dim) {
    Tensor t{DType::kFloat32, {rows.size(), dim}, {}};
    t.data.reserve(rows.size() * dim);
    for (const auto& r : rows) {
      check_same_dim(r.size(), dim, "tensor row");
      for (double v : r) t.data.push_back(static_cast<float>(v));
    }
    return t;
  }

  std::size_t rows() const { return shape.empty() ? 1 : static_cast<std::size_t>(shape[0]); }

  std::size_t row_width() const {
    std::size_t w = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) w *= static_cast<std::size_t>(shape[i]);
    return w;
  }

  std::span<const float> row(std::size_t r) const {
    const std::size_t w = row_width();
    return {data.data() + r * w, w};
  }

  Vector row_vector(std::size_t r) const {
    const auto values = row(r);
    return Vector(values.begin(), values.end());
  }

  bool operator==(const Tensor&) const = default;
};

namespace detail {

// Element count implied by a shape; saturates at max() on overflow.
inline std::uint64_t shape_product(std::span<const std::uint64_t> shape) {
  std::uint64_t n = 1;
  for (std::uint64_t d : shape) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    n *= d;
  }
  return n;
}

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto bits = static_cast<U>(value);
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>(bits & 0xFF);
    bits = static_cast<U>(bits >> 8);
  }
  out.write(bytes, sizeof(T));
}

template <typename T>
bool get_le(std::istream& in, T& value) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) return false;
  std::make_unsigned_t<T> bits = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) bits = static_cast<decltype(bits)>((bits << 8) | bytes[i]);
  value = static_cast<T>(bits);
  return true;
}

}  // namespace detail

inline void validate_tensor(const Tensor& t) {
  if (t.dtype != DType::kFloat32) throw DataError("unsupported dtype");
  if (t.shape.size() > 255) throw DataError("rank exceeds 255");
  if (detail::shape_product(t.shape) != t.data.size()) throw DataError("shape/data length mismatch");
  for (float v : t.data) {
    if (!std::isfinite(v)) throw DataError("non-finite element");
  }
}

// Writes `t` in MDET format and returns the number of bytes written. The
// tensor is validated before any byte reaches the sink.
inline std::size_t write_tensor(const Tensor& t, std::ostream& out) {
  validate_tensor(t);
  out.write(kTensorMagic.data(), kTensorMagic.size());
  detail::put_le<std::uint32_t>(out, kTensorVersion);
  detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype));
  detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
  for (std::uint64_t d : t.shape) detail::put_le<std::uint64_t>(out, d);
  for (float v : t.data) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw DataError("tensor sink failure");
  return 4 + 4 + 1 + 1 + 8 * t.shape.size() + 4 * t.data.size();
}

inline Tensor read_tensor(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kTensorMagic) throw DataError("bad magic");
  std::uint32_t version = 0;
  std::uint8_t dtype = 0;
  std::uint8_t rank = 0;
  if (!detail::get_le(in, version)) throw DataError("shape/data length mismatch: truncated header");
  if (version != kTensorVersion) throw DataError("unsupported version " + std::to_string(version));
  if (!detail::get_le(in, dtype)) throw DataError("shape/data length mismatch: truncated header");
  if (dtype != static_cast<std::uint8_t>(DType::kFloat32)) {
    throw DataError("unsupported dtype " + std::to_string(dtype));
  }
  if (!detail::get_le(in, rank)) throw DataError("shape/data length mismatch: truncated header");
  Tensor t;
  t.shape.resize(rank);
  for (auto& d : t.shape) {
    if (!detail::get_le(in, d)) throw DataError("shape/data length mismatch: truncated header");
  }
  const std::uint64_t count = detail::shape_product(t.shape);
  // Read incrementally so a corrupt shape cannot trigger a huge allocation.
  constexpr std::uint64_t kChunk = 1 << 16;
  for (std::uint64_t done = 0; done < count;) {
    const std::uint64_t n = std::min(kChunk, count - done);
    std::vector<unsigned char> bytes(n * 4);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::uint64_t>(in.gcount()) != bytes.size()) {
      throw DataError("shape/data length mismatch");
    }
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      for (int b = 3; b >= 0; --b) bits = (bits << 8) | bytes[i * 4 + b];
      t.data.push_back(std::bit_cast<float>(bits));
    }
    done += n;
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("shape/data length mismatch");
  for (float v : t.data) {
    if (!std::isfinite(v)) throw DataError("non-finite element");
  }
  return t;
}

inline std::size_t save_tensor(const Tensor& t, const std::filesystem::path& path) {
  validate_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  return write_tensor(t, out);
}

inline Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing file: " + path.string());
  try {
    return read_tensor(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace ovmine
