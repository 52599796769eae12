/*
 * Copyright 2026 The neat Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

// Checkpoint container: a text header followed by a little-endian float32
// payload.
//
//   NEAT
//   version 1
//   endian little
//   entries <n>
//   entry <name> f32 <d0,d1,...> <byte offset>     (n lines)
//   payload <bytes> fnv1a64 <16 hex digits>
//   end
//   <payload bytes>

namespace neat {

inline constexpr uint32_t kCheckpointVersion = 1;

enum class CheckpointErrc {
  kIo,
  kBadMagic,
  kVersionMismatch,
  kMalformedHeader,
  kTruncated,
  kChecksumMismatch,
  kMissingEntry,
  kUnknownEntry,
  kShapeMismatch,
};

const char* to_string(CheckpointErrc code);

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrc code, const std::string& detail);
  CheckpointErrc code() const noexcept { return code_; }

 private:
  CheckpointErrc code_;
};

struct CheckpointEntry {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<float> data;
};

class Checkpoint {
 public:
  void add(std::string name, std::vector<int64_t> shape, std::vector<float> data);
  const CheckpointEntry* find(const std::string& name) const;
  const CheckpointEntry& at(const std::string& name) const;  // throws kMissingEntry
  const std::vector<CheckpointEntry>& entries() const { return entries_; }
  bool contains(const std::string& name) const { return find(name) != nullptr; }

 private:
  std::vector<CheckpointEntry> entries_;
};

uint64_t fnv1a64(const unsigned char* data, size_t size);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);

/// Writes to a sibling temp file and renames, so a failed write never
/// clobbers an existing checkpoint.
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace neat
