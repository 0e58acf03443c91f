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

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "avrel/data.hpp"
#include "avrel/parallel.hpp"
#include "json.hpp"

namespace avrel {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'A', 'V', 'T', '1'};
constexpr std::uint64_t kMaxRank = 8;

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void write_avt1(const std::string& path, const Shape& shape, std::span<const double> data) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("avt1: shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  std::string buf(kMagic, 4);
  put_u64(buf, shape.size());
  for (auto d : shape) put_u64(buf, d);
  for (double x : data) put_u64(buf, std::bit_cast<std::uint64_t>(x));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("avt1: cannot write " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("avt1: write failed for " + path);
}

std::pair<Shape, std::vector<double>> read_avt1(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("avt1: cannot read " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(p, kMagic, 4) != 0) throw IoError("avt1: bad magic in " + path);
  const std::uint64_t rank = get_u64(p + 4);
  if (rank > kMaxRank) throw IoError("avt1: implausible rank in " + path);
  const std::size_t header = 12 + 8 * rank;
  if (bytes.size() < header) throw IoError("avt1: truncated header in " + path);
  Shape shape;
  for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(get_u64(p + 12 + 8 * i));
  const std::size_t n = shape_numel(shape);
  if (bytes.size() != header + 8 * n) throw IoError("avt1: payload size mismatch in " + path);
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(get_u64(p + header + 8 * i));
  return {shape, data};
}

std::string manifest_entry_to_json(const ManifestEntry& e) {
  nlohmann::json j;
  j["clip_id"] = e.clip_id;
  j["video"] = e.video_path;
  j["audio"] = e.audio_path;
  j["transcript"] = e.transcript;
  j["T"] = e.frames;
  j["S"] = e.samples;
  j["mouth_region"] = {e.mouth_region.x0, e.mouth_region.y0, e.mouth_region.x1, e.mouth_region.y1};
  j["fps"] = e.fps;
  j["sample_rate"] = e.sample_rate;
  return j.dump();
}

ManifestEntry manifest_entry_from_json(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    ManifestEntry e;
    e.clip_id = j.at("clip_id").get<std::string>();
    e.video_path = j.at("video").get<std::string>();
    e.audio_path = j.at("audio").get<std::string>();
    e.transcript = j.at("transcript").get<std::vector<std::int64_t>>();
    e.frames = j.at("T").get<std::size_t>();
    e.samples = j.at("S").get<std::size_t>();
    const auto m = j.at("mouth_region").get<std::vector<int>>();
    if (m.size() != 4) throw IoError("manifest: mouth_region needs four numbers");
    e.mouth_region = {m[0], m[1], m[2], m[3]};
    e.fps = j.at("fps").get<double>();
    e.sample_rate = j.at("sample_rate").get<double>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw IoError(std::string("manifest: malformed JSON line: ") + ex.what());
  }
}

std::vector<ManifestEntry> write_dataset(const std::vector<Example>& examples,
                                         const std::string& dir, const std::string& split) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / split, ec);
  if (ec) throw IoError("dataset: cannot create " + (fs::path(dir) / split).string());
  std::vector<ManifestEntry> entries;
  for (const auto& ex : examples) {
    ManifestEntry e;
    e.clip_id = ex.clip_id;
    e.video_path = split + "/" + ex.clip_id + ".video.avt1";
    e.audio_path = split + "/" + ex.clip_id + ".audio.avt1";
    e.transcript = ex.tokens;
    e.frames = ex.video.frames_count;
    e.samples = ex.audio.samples.size();
    e.mouth_region = ex.video.mouth_region;
    e.fps = ex.video.fps;
    e.sample_rate = ex.audio.sample_rate;
    write_avt1((fs::path(dir) / e.video_path).string(),
               {e.frames, ex.video.height, ex.video.width, ex.video.channels}, ex.video.frames);
    write_avt1((fs::path(dir) / e.audio_path).string(), {e.samples}, ex.audio.samples);
    entries.push_back(std::move(e));
  }
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.clip_id < b.clip_id; });
  const auto mpath = (fs::path(dir) / (split + ".jsonl")).string();
  std::ofstream out(mpath, std::ios::binary);
  if (!out) throw IoError("dataset: cannot write " + mpath);
  for (const auto& e : entries) out << manifest_entry_to_json(e) << '\n';
  if (!out) throw IoError("dataset: write failed for " + mpath);
  return entries;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("manifest: cannot read " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    entries.push_back(manifest_entry_from_json(line));
  }
  return entries;
}

std::vector<Example> load_dataset(const std::string& manifest_path, std::size_t workers) {
  const auto entries = read_manifest(manifest_path);
  if (entries.empty()) throw IoError("manifest: no entries in " + manifest_path);
  const fs::path root = fs::path(manifest_path).parent_path();
  std::vector<Example> out(entries.size());
  parallel_for(entries.size(), workers, [&](std::size_t i) {
    const auto& e = entries[i];
    auto [vs, vd] = read_avt1((root / e.video_path).string());
    auto [as, ad] = read_avt1((root / e.audio_path).string());
    if (vs.size() != 4 || vs[0] != e.frames) {
      throw IoError("manifest: " + e.clip_id + " video has shape " + shape_str(vs) +
                    ", declared T=" + std::to_string(e.frames));
    }
    if (as.size() != 1 || as[0] != e.samples) {
      throw IoError("manifest: " + e.clip_id + " audio has shape " + shape_str(as) +
                    ", declared S=" + std::to_string(e.samples));
    }
    Example& ex = out[i];
    ex.clip_id = e.clip_id;
    ex.tokens = e.transcript;
    ex.video.frames_count = vs[0];
    ex.video.height = vs[1];
    ex.video.width = vs[2];
    ex.video.channels = vs[3];
    ex.video.frames = std::move(vd);
    ex.video.mouth_region = e.mouth_region;
    ex.video.fps = e.fps;
    ex.video.validate();
    ex.audio.samples = std::move(ad);
    ex.audio.sample_rate = e.sample_rate;
    ex.audio.validate();
  });
  return out;
}

}  // namespace avrel
