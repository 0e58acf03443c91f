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

#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "avrel/common.hpp"

namespace avrel {

// Flat `key = value` configuration. Lines starting with '#' are comments.
// Typed getters throw ConfigError naming the key on malformed values.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const;
  std::vector<long long> get_ints(const std::string& key,
                                  const std::vector<long long>& fallback) const;

  // Throws ConfigError for the first key not in `known`.
  void require_known(const std::set<std::string>& known) const;

  // Canonical `key = value` lines, sorted by key.
  std::string dump() const;
  std::uint64_t hash() const { return fnv1a64(dump()); }

 private:
  std::map<std::string, std::string> values_;
};

std::string format_double(double v);
std::string join_doubles(const std::vector<double>& v);

}  // namespace avrel
