// Copyright 2026 The avrel Authors
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

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>

#include "avrel/tensor.hpp"

namespace avrel {

namespace {

constexpr char kMagic[4] = {'A', 'V', 'R', 'T'};
constexpr std::uint8_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  bool done() const { return pos_ == bytes_.size(); }

  std::uint64_t uint(int width) {
    need(width);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += width;
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("checkpoint: truncated data");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor ParameterSet::add(const std::string& name, Shape shape,
                         const std::string& init, std::size_t fan_in, Rng& rng) {
  check_unique(name);
  std::vector<double> values(shape_numel(shape), 0.0);
  if (init == "uniform_fan_in") {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    for (auto& v : values) v = rng.uniform(-bound, bound);
  } else if (init == "ones") {
    std::fill(values.begin(), values.end(), 1.0);
  } else if (init != "zeros") {
    throw ConfigError("init", "unknown initializer '" + init + "' for " + name);
  }
  Tensor t(std::move(shape), std::move(values), true);
  params_.push_back({name, t, init});
  return t;
}

Tensor ParameterSet::add_buffer(const std::string& name, Shape shape,
                                double fill) {
  check_unique(name);
  Tensor t = Tensor::full(std::move(shape), fill, false);
  buffers_.push_back({name, t});
  return t;
}

void ParameterSet::check_unique(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) throw Error("param", "duplicate parameter name " + name);
  }
  for (const auto& b : buffers_) {
    if (b.name == name) throw Error("param", "duplicate buffer name " + name);
  }
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::vector<NamedTensor> ParameterSet::named_tensors() const {
  std::vector<NamedTensor> out;
  out.reserve(params_.size() + buffers_.size());
  for (const auto& p : params_) out.push_back({p.name, p.tensor});
  for (const auto& b : buffers_) out.push_back(b);
  return out;
}

void ParameterSet::load(std::span<const NamedTensor> tensors) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  auto copy_into = [&](const std::string& name, Tensor& dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("checkpoint: missing tensor " + name);
    const Tensor& src = it->second->tensor;
    if (src.shape() != dst.shape()) {
      throw ShapeError("checkpoint: tensor " + name + " has shape " +
                       shape_str(src.shape()) + ", model expects " +
                       shape_str(dst.shape()));
    }
    std::copy(src.values().begin(), src.values().end(),
              dst.mutable_values().begin());
  };
  for (auto& p : params_) copy_into(p.name, p.tensor);
  for (auto& b : buffers_) copy_into(b.name, b.tensor);
  if (by_name.size() != params_.size() + buffers_.size()) {
    throw IoError("checkpoint: tensor count mismatch (file " +
                  std::to_string(by_name.size()) + ", model " +
                  std::to_string(params_.size() + buffers_.size()) + ")");
  }
}

std::string encode_checkpoint(std::span<const NamedTensor> tensors) {
  std::string out(kMagic, kMagic + 4);
  out.push_back(static_cast<char>(kVersion));
  for (const auto& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(t.tensor.rank()));
    for (auto e : t.tensor.shape()) put_u64(out, e);
    for (double v : t.tensor.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4) != std::string_view(kMagic, 4)) throw IoError("checkpoint: bad magic");
  const auto version = r.uint(1);
  if (version != kVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  std::vector<NamedTensor> out;
  while (!r.done()) {
    const auto name_len = r.uint(4);
    std::string name(r.take(name_len));
    const auto rank = r.uint(4);
    if (rank > 8) throw IoError("checkpoint: implausible rank for " + name);
    Shape shape(rank);
    for (auto& e : shape) e = r.uint(8);
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = std::bit_cast<double>(r.uint(8));
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  return out;
}

void save_checkpoint(const std::string& path,
                     std::span<const NamedTensor> tensors) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  const auto bytes = encode_checkpoint(tensors);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace avrel
