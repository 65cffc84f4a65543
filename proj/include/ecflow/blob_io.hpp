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

#ifndef ECFLOW_BLOB_IO_HPP_
#define ECFLOW_BLOB_IO_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ecflow {

// Little-endian scalar io. The sandbox targets are little endian; the byte
// swaps keep the formats well defined anyway.
void write_u32(std::ostream& os, std::uint32_t v);
std::uint32_t read_u32(std::istream& is);
void write_f32(std::ostream& os, float v);
float read_f32(std::istream& is);
void write_f64(std::ostream& os, double v);
double read_f64(std::istream& is);
void write_f32_array(std::ostream& os, const float* data, std::size_t count);
void read_f32_array(std::istream& is, float* data, std::size_t count);

std::vector<char> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const char* data, std::size_t size);

std::uint32_t crc32_of(const char* data, std::size_t size);
std::uint32_t crc32_of_file(const std::string& path);

}  // namespace ecflow

#endif  // ECFLOW_BLOB_IO_HPP_
