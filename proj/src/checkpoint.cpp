// Copyright 2026 The m3ddm-plus Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "m3ddm/checkpoint.hpp"

#include <bit>
#include <fstream>

#include "m3ddm/core.hpp"

namespace m3ddm {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

template <typename T>
void put(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw IoError("truncated checkpoint: " + path.string());
  return v;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  if (ck.magic.size() != 8) throw ValueError("checkpoint magic must be 8 bytes");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os.write(ck.magic.data(), 8);
  put(os, ck.version);
  put(os, static_cast<std::uint32_t>(ck.header.size()));
  for (auto v : ck.header) put(os, v);
  put(os, static_cast<std::uint64_t>(ck.payload.size()));
  os.write(reinterpret_cast<const char*>(ck.payload.data()),
           static_cast<std::streamsize>(ck.payload.size() * sizeof(double)));
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path, std::string_view expected_magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  Checkpoint ck;
  ck.magic.resize(8);
  if (!is.read(ck.magic.data(), 8)) throw IoError("truncated checkpoint: " + path.string());
  if (ck.magic != expected_magic)
    throw IoError("checkpoint " + path.string() + " has magic '" + ck.magic + "', expected '" +
                  std::string(expected_magic) + "'");
  ck.version = get<std::uint32_t>(is, path);
  const auto n_header = get<std::uint32_t>(is, path);
  ck.header.resize(n_header);
  for (auto& v : ck.header) v = get<std::int64_t>(is, path);
  const auto n_payload = get<std::uint64_t>(is, path);
  ck.payload.resize(n_payload);
  if (!is.read(reinterpret_cast<char*>(ck.payload.data()),
               static_cast<std::streamsize>(n_payload * sizeof(double))))
    throw IoError("truncated checkpoint payload: " + path.string());
  return ck;
}

}  // namespace m3ddm
