// Copyright 2026 The ecflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ecflow/blob_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "ecflow/errors.hpp"

namespace ecflow {

namespace {

constexpr bool kLittle = std::endian::native == std::endian::little;

std::uint32_t bswap32(std::uint32_t v) {
  return ((v & 0xff) << 24) | ((v & 0xff00) << 8) | ((v >> 8) & 0xff00) | (v >> 24);
}

}  // namespace

void write_u32(std::ostream& os, std::uint32_t v) {
  if (!kLittle) v = bswap32(v);
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw Error(ErrorCode::kIoError, "read_u32: truncated stream");
  if (!kLittle) v = bswap32(v);
  return v;
}

void write_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

float read_f32(std::istream& is) {
  std::uint32_t bits = read_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int k = 0; k < 8; ++k) {
    char b = static_cast<char>((bits >> (8 * k)) & 0xff);
    os.put(b);
  }
}

double read_f64(std::istream& is) {
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) {
    int c = is.get();
    if (c < 0) throw Error(ErrorCode::kIoError, "read_f64: truncated stream");
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * k);
  }
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void write_f32_array(std::ostream& os, const float* data, std::size_t count) {
  if (kLittle) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
    return;
  }
  for (std::size_t i = 0; i < count; ++i) write_f32(os, data[i]);
}

void read_f32_array(std::istream& is, float* data, std::size_t count) {
  if (kLittle) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 4));
    if (!is) throw Error(ErrorCode::kIoError, "read_f32_array: truncated stream");
    return;
  }
  for (std::size_t i = 0; i < count; ++i) data[i] = read_f32(is);
}

std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::streamsize size = is.tellg();
  is.seekg(0);
  std::vector<char> bytes(static_cast<std::size_t>(size));
  if (size > 0) is.read(bytes.data(), size);
  if (!is) throw Error(ErrorCode::kIoError, "short read on " + path);
  return bytes;
}

void write_file_bytes(const std::string& path, const char* data, std::size_t size) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::kIoError, "cannot open " + path + " for write");
  os.write(data, static_cast<std::streamsize>(size));
  if (!os) throw Error(ErrorCode::kIoError, "short write on " + path);
}

std::uint32_t crc32_of(const char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(size));
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t crc32_of_file(const std::string& path) {
  std::vector<char> bytes = read_file_bytes(path);
  return crc32_of(bytes.data(), bytes.size());
}

}  // namespace ecflow
