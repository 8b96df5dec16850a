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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace m3ddm {

/// Versioned binary container shared by codec and denoiser checkpoints.
///
/// Layout (little-endian):
///   char[8]  magic
///   u32      version
///   u32      header count H
///   i64[H]   integer header fields
///   u64      payload count P
///   f64[P]   payload
struct Checkpoint {
  std::string magic;  // exactly 8 bytes
  std::uint32_t version = 1;
  std::vector<std::int64_t> header;
  std::vector<double> payload;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
/// Throws IoError on unreadable/truncated files and on a magic mismatch.
Checkpoint read_checkpoint(const std::filesystem::path& path, std::string_view expected_magic);

}  // namespace m3ddm
