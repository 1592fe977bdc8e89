// Copyright 2026 The gpitlab Authors
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

#include "gpit/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace gpit {

namespace {

constexpr std::string_view kMetaPrefix = "meta.";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated input");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void put_entry(std::string& out, std::string_view name, const Shape& shape, std::span<const double> data) {
  put_u64(out, name.size());
  out.append(name);
  put_u64(out, shape.size());
  for (auto d : shape) put_u64(out, d);
  for (double v : data) put_f64(out, v);
}

}  // namespace

const Tensor& Checkpoint::get(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw CheckpointError("checkpoint: missing tensor '" + std::string(name) + "'");
}

const std::string& Checkpoint::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end()) throw CheckpointError("checkpoint: missing metadata '" + key + "'");
  return it->second;
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  std::string out(kCheckpointMagic);
  out.push_back(static_cast<char>(kCheckpointVersion));
  for (const auto& [name, tensor] : checkpoint.tensors) {
    if (name.starts_with(kMetaPrefix)) {
      throw CheckpointError("checkpoint: tensor name '" + name + "' uses the reserved meta. prefix");
    }
    put_entry(out, name, tensor.shape(), tensor.data());
  }
  for (const auto& [key, value] : checkpoint.metadata) {
    std::vector<double> bytes;
    bytes.reserve(value.size());
    for (unsigned char c : value) bytes.push_back(static_cast<double>(c));
    put_entry(out, std::string(kMetaPrefix) + key, {bytes.size()}, bytes);
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(kCheckpointMagic.size()) != kCheckpointMagic) throw CheckpointError("checkpoint: bad magic");
  auto version = static_cast<std::uint8_t>(in.take(1)[0]);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  while (!in.done()) {
    std::string name(in.take(in.u64()));
    std::uint64_t rank = in.u64();
    if (rank > 16) throw CheckpointError("checkpoint: implausible rank for '" + name + "'");
    Shape shape;
    for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(in.u64());
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) v = in.f64();
    if (name.starts_with(kMetaPrefix)) {
      std::string value;
      for (double v : data) value.push_back(static_cast<char>(static_cast<unsigned char>(v)));
      ckpt.metadata.emplace(name.substr(kMetaPrefix.size()), std::move(value));
    } else {
      ckpt.tensors.push_back({std::move(name), Tensor::constant(std::move(shape), std::move(data))});
    }
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  auto bytes = serialize_checkpoint(checkpoint);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace gpit
