// Copyright 2026 The crowdpoint Authors. All Rights Reserved.
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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "crowdpoint/nn.hpp"

namespace crowdpoint {

struct TensorEntry {
  std::string name;
  Shape shape;
  std::vector<float> data;

  bool operator==(const TensorEntry&) const = default;
};

// Binary layout (little-endian): magic "CRWDPT\0\1", u32 version, u8 fused,
// i64 epoch, i64 step, u64 + bytes config text, then the model and the
// optimizer sections. A section is a u64 entry count followed per entry by
// u32 + bytes name, u32 rank, i64 dims and the float32 payload. Entries are
// written sorted by name so identical state gives identical bytes.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  bool fused = false;
  int64_t epoch = 0;
  int64_t step = 0;
  std::string config_text;
  std::vector<TensorEntry> entries;    // model parameters and buffers
  std::vector<TensorEntry> optimizer;  // optimizer moments

  const TensorEntry* find(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source = "<memory>");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws std::runtime_error naming the path when missing or malformed.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Parameters then buffers of `module`, names prefixed by `prefix`.
template <typename T>
std::vector<TensorEntry> module_state(Module<T>& module, const std::string& prefix = "");

// Copies entries named "<prefix>.*" (all entries for an empty prefix) into
// `module`. Every module tensor must be present with a matching shape and no
// extra names may appear in scope; otherwise throws std::runtime_error
// listing the offending names.
template <typename T>
void load_module_state(Module<T>& module, const std::vector<TensorEntry>& entries, const std::string& prefix = "");

// Sorts by name and rejects duplicates.
void sort_entries(std::vector<TensorEntry>& entries);

}  // namespace crowdpoint
