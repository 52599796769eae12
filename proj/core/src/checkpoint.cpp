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

#include "neat/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace neat {

namespace {

int64_t numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string join_shape(const std::vector<int64_t>& shape) {
  std::string s;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(shape[i]);
  }
  return s.empty() ? "scalar" : s;
}

std::vector<int64_t> parse_shape(const std::string& s) {
  std::vector<int64_t> shape;
  if (s == "scalar") return shape;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    size_t used = 0;
    const long long v = std::stoll(part, &used);
    if (used != part.size() || v < 0) throw std::invalid_argument(part);
    shape.push_back(v);
  }
  return shape;
}

void put_f32_le(std::string& out, float v) {
  auto bits = std::bit_cast<uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

float get_f32_le(const unsigned char* p) {
  uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

const char* to_string(CheckpointErrc code) {
  switch (code) {
    case CheckpointErrc::kIo: return "io error";
    case CheckpointErrc::kBadMagic: return "bad magic";
    case CheckpointErrc::kVersionMismatch: return "version mismatch";
    case CheckpointErrc::kMalformedHeader: return "malformed header";
    case CheckpointErrc::kTruncated: return "truncated payload";
    case CheckpointErrc::kChecksumMismatch: return "checksum mismatch";
    case CheckpointErrc::kMissingEntry: return "missing entry";
    case CheckpointErrc::kUnknownEntry: return "unknown entry";
    case CheckpointErrc::kShapeMismatch: return "shape mismatch";
  }
  return "unknown";
}

CheckpointError::CheckpointError(CheckpointErrc code, const std::string& detail)
    : std::runtime_error(std::string("checkpoint ") + to_string(code) + ": " + detail), code_(code) {}

void Checkpoint::add(std::string name, std::vector<int64_t> shape, std::vector<float> data) {
  if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
    throw std::invalid_argument("checkpoint entry names must be non-empty and whitespace-free: '" + name + "'");
  }
  if (numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("checkpoint entry '" + name + "' data does not match its shape");
  }
  if (find(name)) throw std::invalid_argument("duplicate checkpoint entry '" + name + "'");
  entries_.push_back({std::move(name), std::move(shape), std::move(data)});
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

const CheckpointEntry& Checkpoint::at(const std::string& name) const {
  if (const auto* e = find(name)) return *e;
  throw CheckpointError(CheckpointErrc::kMissingEntry, name);
}

uint64_t fnv1a64(const unsigned char* data, size_t size) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string payload;
  std::ostringstream header;
  header << "NEAT\nversion " << kCheckpointVersion << "\nendian little\nentries " << ckpt.entries().size() << '\n';
  for (const auto& e : ckpt.entries()) {
    header << "entry " << e.name << " f32 " << join_shape(e.shape) << ' ' << payload.size() << '\n';
    for (float v : e.data) put_f32_le(payload, v);
  }
  const uint64_t sum = fnv1a64(reinterpret_cast<const unsigned char*>(payload.data()), payload.size());
  header << "payload " << payload.size() << " fnv1a64 " << std::hex << std::setw(16) << std::setfill('0') << sum
         << std::dec << "\nend\n";
  return header.str() + payload;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  size_t pos = 0;
  auto next_line = [&](const char* what) {
    const size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw CheckpointError(CheckpointErrc::kMalformedHeader, std::string("expected ") + what);
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  if (bytes.compare(0, 5, "NEAT\n") != 0) throw CheckpointError(CheckpointErrc::kBadMagic, "file does not start with NEAT");
  pos = 5;
  {
    std::istringstream ls(next_line("version"));
    std::string key;
    uint32_t version = 0;
    if (!(ls >> key >> version) || key != "version") throw CheckpointError(CheckpointErrc::kMalformedHeader, "version line");
    if (version != kCheckpointVersion) {
      throw CheckpointError(CheckpointErrc::kVersionMismatch,
                            "file version " + std::to_string(version) + ", expected " + std::to_string(kCheckpointVersion));
    }
  }
  if (next_line("endian") != "endian little") throw CheckpointError(CheckpointErrc::kMalformedHeader, "only little-endian payloads are supported");

  size_t count = 0;
  {
    std::istringstream ls(next_line("entries"));
    std::string key;
    if (!(ls >> key >> count) || key != "entries") throw CheckpointError(CheckpointErrc::kMalformedHeader, "entries line");
  }
  struct Row {
    std::string name;
    std::vector<int64_t> shape;
    size_t offset;
  };
  std::vector<Row> rows;
  for (size_t i = 0; i < count; ++i) {
    const std::string line = next_line("entry");
    std::istringstream ls(line);
    std::string key, name, dtype, shape;
    size_t offset = 0;
    if (!(ls >> key >> name >> dtype >> shape >> offset) || key != "entry") {
      throw CheckpointError(CheckpointErrc::kMalformedHeader, "bad entry line '" + line + "'");
    }
    if (dtype != "f32") throw CheckpointError(CheckpointErrc::kMalformedHeader, "unsupported dtype " + dtype + " for " + name);
    try {
      rows.push_back({name, parse_shape(shape), offset});
    } catch (const std::exception&) {
      throw CheckpointError(CheckpointErrc::kMalformedHeader, "bad shape '" + shape + "' for " + name);
    }
  }
  size_t payload_size = 0;
  uint64_t expected_sum = 0;
  {
    std::istringstream ls(next_line("payload"));
    std::string key, algo;
    if (!(ls >> key >> payload_size >> algo >> std::hex >> expected_sum) || key != "payload" || algo != "fnv1a64") {
      throw CheckpointError(CheckpointErrc::kMalformedHeader, "payload line");
    }
  }
  if (next_line("end") != "end") throw CheckpointError(CheckpointErrc::kMalformedHeader, "missing end marker");

  const size_t available = bytes.size() - pos;
  if (available < payload_size) {
    throw CheckpointError(CheckpointErrc::kTruncated,
                          "payload has " + std::to_string(available) + " of " + std::to_string(payload_size) + " bytes");
  }
  if (available > payload_size) {
    throw CheckpointError(CheckpointErrc::kMalformedHeader, "trailing bytes after payload");
  }
  const auto* base = reinterpret_cast<const unsigned char*>(bytes.data()) + pos;
  if (fnv1a64(base, payload_size) != expected_sum) {
    throw CheckpointError(CheckpointErrc::kChecksumMismatch, "payload checksum does not match header");
  }

  Checkpoint ckpt;
  for (const auto& r : rows) {
    const auto n = static_cast<size_t>(numel(r.shape));
    if (r.offset % 4 != 0 || r.offset + 4 * n > payload_size) {
      throw CheckpointError(CheckpointErrc::kTruncated, "entry " + r.name + " extends past the payload");
    }
    std::vector<float> data(n);
    for (size_t i = 0; i < n; ++i) data[i] = get_f32_le(base + r.offset + 4 * i);
    try {
      ckpt.add(r.name, r.shape, std::move(data));
    } catch (const std::invalid_argument& e) {
      throw CheckpointError(CheckpointErrc::kMalformedHeader, e.what());
    }
  }
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointErrc::kIo, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(CheckpointErrc::kIo, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError(CheckpointErrc::kIo, "cannot rename " + tmp.string() + ": " + ec.message());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrc::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace neat
