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

#include "crowdpoint/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace crowdpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'R', 'W', 'D', 'P', 'T', '\0', '\1'};

template <typename V>
void put(std::string& out, V v) {
  char buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  out.append(buf, sizeof(V));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  template <typename V>
  V get() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }

  std::string get_string(uint64_t size) {
    need(size);
    std::string s = bytes_.substr(pos_, size);
    pos_ += size;
    return s;
  }

  void get_floats(float* dst, uint64_t count) {
    need(count * sizeof(float));
    std::memcpy(dst, bytes_.data() + pos_, count * sizeof(float));
    pos_ += count * sizeof(float);
  }

  bool done() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error("checkpoint " + source_ + ": " + what);
  }

 private:
  void need(uint64_t n) const {
    if (n > bytes_.size() - pos_) fail("truncated at byte " + std::to_string(pos_));
  }

  const std::string& bytes_;
  std::string source_;
  size_t pos_ = 0;
};

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (size_t i = 0; i < names.size(); ++i) out += (i ? ", " : "") + names[i];
  return out;
}

}  // namespace

const TensorEntry* Checkpoint::find(const std::string& name) const {
  const auto it = std::lower_bound(entries.begin(), entries.end(), name,
                                   [](const TensorEntry& e, const std::string& n) { return e.name < n; });
  return it != entries.end() && it->name == name ? &*it : nullptr;
}

void sort_entries(std::vector<TensorEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const TensorEntry& a, const TensorEntry& b) { return a.name < b.name; });
  for (size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].name == entries[i - 1].name) {
      throw std::invalid_argument("duplicate checkpoint entry '" + entries[i].name + "'");
    }
  }
}

namespace {

void put_entries(std::string& out, const std::vector<TensorEntry>& entries) {
  std::vector<const TensorEntry*> order;
  order.reserve(entries.size());
  for (const auto& e : entries) order.push_back(&e);
  std::sort(order.begin(), order.end(), [](const TensorEntry* a, const TensorEntry* b) { return a->name < b->name; });
  put<uint64_t>(out, order.size());
  for (const TensorEntry* e : order) {
    if (static_cast<int64_t>(e->data.size()) != shape_numel(e->shape)) {
      throw std::invalid_argument("checkpoint entry '" + e->name + "' has " + std::to_string(e->data.size()) +
                                  " values for shape " + shape_str(e->shape));
    }
    put<uint32_t>(out, static_cast<uint32_t>(e->name.size()));
    out += e->name;
    put<uint32_t>(out, static_cast<uint32_t>(e->shape.size()));
    for (int64_t d : e->shape) put<int64_t>(out, d);
    out.append(reinterpret_cast<const char*>(e->data.data()), e->data.size() * sizeof(float));
  }
}

std::vector<TensorEntry> get_entries(Reader& r) {
  std::vector<TensorEntry> entries;
  const auto count = r.get<uint64_t>();
  for (uint64_t i = 0; i < count; ++i) {
    TensorEntry e;
    e.name = r.get_string(r.get<uint32_t>());
    const auto rank = r.get<uint32_t>();
    if (rank > 8) r.fail("entry '" + e.name + "' has rank " + std::to_string(rank));
    for (uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.get<int64_t>();
      if (dim < 0) r.fail("entry '" + e.name + "' has a negative dimension");
      e.shape.push_back(dim);
    }
    e.data.resize(static_cast<size_t>(shape_numel(e.shape)));
    r.get_floats(e.data.data(), e.data.size());
    entries.push_back(std::move(e));
  }
  try {
    sort_entries(entries);
  } catch (const std::invalid_argument& err) {
    r.fail(err.what());
  }
  return entries;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  put<uint32_t>(out, Checkpoint::kVersion);
  put<uint8_t>(out, ckpt.fused ? 1 : 0);
  put<int64_t>(out, ckpt.epoch);
  put<int64_t>(out, ckpt.step);
  put<uint64_t>(out, ckpt.config_text.size());
  out += ckpt.config_text;
  put_entries(out, ckpt.entries);
  put_entries(out, ckpt.optimizer);
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source) {
  Reader r(bytes, source);
  if (r.get_string(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) r.fail("bad magic, not a checkpoint");
  const auto version = r.get<uint32_t>();
  if (version != Checkpoint::kVersion) r.fail("unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.fused = r.get<uint8_t>() != 0;
  ckpt.epoch = r.get<int64_t>();
  ckpt.step = r.get<int64_t>();
  ckpt.config_text = r.get_string(r.get<uint64_t>());
  ckpt.entries = get_entries(r);
  ckpt.optimizer = get_entries(r);
  if (!r.done()) r.fail("trailing bytes after the last entry");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint not found: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str(), path.string());
}

template <typename T>
std::vector<TensorEntry> module_state(Module<T>& module, const std::string& prefix) {
  std::vector<TensorEntry> out;
  const auto add = [&](const std::string& name, const Tensor<T>& t) {
    TensorEntry e{name, t.shape(), std::vector<float>(static_cast<size_t>(t.numel()))};
    for (int64_t i = 0; i < t.numel(); ++i) e.data[static_cast<size_t>(i)] = static_cast<float>(t[i]);
    out.push_back(std::move(e));
  };
  for (const auto& p : module.named_parameters(prefix)) add(p.name, p.var->value());
  for (const auto& b : module.named_buffers(prefix)) add(b.name, *b.tensor);
  return out;
}

template <typename T>
void load_module_state(Module<T>& module, const std::vector<TensorEntry>& entries, const std::string& prefix) {
  std::map<std::string, const TensorEntry*> available;
  const std::string scope = prefix.empty() ? "" : prefix + ".";
  for (const auto& e : entries) {
    if (e.name.compare(0, scope.size(), scope) == 0) available.emplace(e.name, &e);
  }
  std::vector<std::pair<Tensor<T>*, const TensorEntry*>> plan;
  std::vector<std::string> missing, mismatched, unexpected;
  const auto match = [&](const std::string& name, Tensor<T>& t) {
    const auto it = available.find(name);
    if (it == available.end()) {
      missing.push_back(name);
      return;
    }
    if (it->second->shape != t.shape()) {
      mismatched.push_back(name + " (expected " + shape_str(t.shape()) + ", got " + shape_str(it->second->shape) + ")");
    } else {
      plan.emplace_back(&t, it->second);
    }
    available.erase(it);
  };
  for (const auto& p : module.named_parameters(prefix)) match(p.name, p.var->mutable_value());
  for (const auto& b : module.named_buffers(prefix)) match(b.name, *b.tensor);
  for (const auto& [name, e] : available) unexpected.push_back(name);

  if (!missing.empty() || !mismatched.empty() || !unexpected.empty()) {
    std::string msg = "checkpoint does not match the model:";
    if (!missing.empty()) msg += " missing [" + join(missing) + "]";
    if (!mismatched.empty()) msg += " shape mismatch [" + join(mismatched) + "]";
    if (!unexpected.empty()) msg += " unexpected [" + join(unexpected) + "]";
    throw std::runtime_error(msg);
  }
  for (auto& [t, e] : plan) {
    for (size_t i = 0; i < e->data.size(); ++i) (*t)[static_cast<int64_t>(i)] = static_cast<T>(e->data[i]);
  }
}

template std::vector<TensorEntry> module_state(Module<float>&, const std::string&);
template std::vector<TensorEntry> module_state(Module<double>&, const std::string&);
template void load_module_state(Module<float>&, const std::vector<TensorEntry>&, const std::string&);
template void load_module_state(Module<double>&, const std::vector<TensorEntry>&, const std::string&);

}  // namespace crowdpoint
